#include <stdexcept>

#include "crffuse/types.hpp"

namespace crffuse {

// Builds per-kernel feature vectors with bandwidths folded in: coordinate c of
// pixel p is raw_c(p) / bandwidth_c. Spatial features are (x, y); bilateral
// features are (x, y, r, g, b) with colors in [0, 1].
FeatureStack extract_features(const RgbImage& image, const KernelSpec& spec) {
  image.require_valid();
  spec.require_valid();

  FeatureStack stack;
  stack.slices.reserve(spec.kernels.size());
  for (const KernelDesc& kernel : spec.kernels) {
    FeatureSlice slice;
    slice.dim = kernel.feature_dim();
    slice.count = image.size();
    slice.data.resize(static_cast<std::size_t>(slice.dim) * slice.count);
    const auto& t = kernel.bandwidths;
    std::size_t idx = 0;
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        std::size_t p = static_cast<std::size_t>(y) * image.width + x;
        slice.data[idx++] = x / t[0];
        slice.data[idx++] = y / t[1];
        if (kernel.feature_kind == FeatureKind::kBilateral) {
          slice.data[idx++] = image.r[p] / t[2];
          slice.data[idx++] = image.g[p] / t[3];
          slice.data[idx++] = image.b[p] / t[4];
        }
      }
    }
    stack.slices.push_back(std::move(slice));
  }
  return stack;
}

}  // namespace crffuse
