#pragma once

#include <string>

#include "crffuse/types.hpp"

namespace crffuse {

// Portable FloatMap, grayscale "Pf": header `Pf\n<width> <height>\n<scale>\n`,
// then float32 rows bottom-up. Negative scale marks little-endian data; the
// writer always emits -1.0. Values pass through float32 on the way out.
void write_pfm(const std::string& path, const DepthMap& map);
DepthMap read_pfm(const std::string& path);

// Binary PPM "P6", maxval 255, channels in [0,1] quantized by rounding.
void write_ppm(const std::string& path, const RgbImage& image);
RgbImage read_ppm(const std::string& path);

// All writers go through a temp file and a rename so partial files never
// appear under the final name.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace crffuse
