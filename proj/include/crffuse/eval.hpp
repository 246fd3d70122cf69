#pragma once

#include <cstdint>
#include <string>

#include "crffuse/types.hpp"

namespace crffuse {

struct MetricsReport {
  long pixels = 0;
  double rel = 0.0;         // mean |gt - pred| / pred
  double rms = 0.0;
  double log10 = 0.0;       // mean |log10 gt - log10 pred|
  double rms_sc_inv = 0.0;  // stddev of ln gt - ln pred
  double delta1 = 0.0;      // ratio threshold 1.25
  double delta2 = 0.0;      // 1.25^2
  double delta3 = 0.0;      // 1.25^3
};

// Pixels with gt below min_valid_depth are skipped. Throws when no pixel
// survives the mask or a masked-in value is not strictly positive.
MetricsReport compute_metrics(const DepthMap& prediction, const DepthMap& gt,
                              double min_valid_depth = 1e-3);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& label, const MetricsReport& report);

// Synthetic scene recipe: a depth gradient floor with occluding boxes, plus
// per-scale degraded copies serving as fusion inputs.
struct SynthSpec {
  int width = 64;
  int height = 64;
  int levels = 3;
  int box_count = 6;
  double depth_min = 1.0;
  double depth_max = 10.0;
  double blur_max = 3.0;   // coarsest scale
  double blur_min = 0.5;   // finest scale
  double noise_max = 0.6;
  double noise_min = 0.3;
  std::uint64_t seed = 0;

  double blur_sigma(int level) const;
  double noise_std(int level) const;
  void require_valid() const;
};

struct SynthScene {
  RgbImage image;
  DepthMap gt;
};

SynthScene synth_scene(const SynthSpec& spec);

// Depth blurred per scale (coarsest first) with additive Gaussian noise,
// clamped nonnegative. Noise uses a stream independent of the scene's.
SideOutputStack synth_side_outputs(const DepthMap& gt, const SynthSpec& spec);

// Separable Gaussian blur, truncated at three sigma, renormalized at borders.
DepthMap gaussian_blur(const DepthMap& input, double sigma);

}  // namespace crffuse
