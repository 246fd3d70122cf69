#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace crffuse {

enum class ModelKind { kCascade, kUnified };
enum class StructureKind { kBottomUp, kTopDown, kSkip, kAllToOne, kCustom };
enum class FilterBackendKind { kExact, kLattice };

// Single-channel depth grid, row-major, values[y * width + x].
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  DepthMap() = default;
  DepthMap(int w, int h, double fill = 0.0);

  int size() const { return width * height; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  // Throws std::invalid_argument on dimension mismatch or non-finite values;
  // when nonnegative is set (ground truth / prediction roles), negatives too.
  void require_valid(bool nonnegative = false) const;
};

// RGB image as planes in [0, 1].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> r, g, b;

  RgbImage() = default;
  RgbImage(int w, int h, double fill = 0.0);

  int size() const { return width * height; }
  void require_valid() const;
};

// Per-scale regressed depth maps, index 0 = coarsest scale.
struct SideOutputStack {
  std::vector<DepthMap> scales;

  int levels() const { return static_cast<int>(scales.size()); }
  int width() const { return scales.empty() ? 0 : scales.front().width; }
  int height() const { return scales.empty() ? 0 : scales.front().height; }
  int pixels() const { return scales.empty() ? 0 : scales.front().size(); }

  // Concatenated view, scale-major (coarsest first), length levels * pixels.
  std::vector<double> flattened() const;

  void require_valid() const;
};

enum class FeatureKind { kSpatial, kBilateral };
enum class KernelRole { kIntraScale, kCrossScale };

// One Gaussian kernel: which features it reads, whether it couples pixels
// within a scale or across scales, and one bandwidth per feature dimension.
struct KernelDesc {
  FeatureKind feature_kind = FeatureKind::kSpatial;
  KernelRole role = KernelRole::kIntraScale;
  std::vector<double> bandwidths;

  int feature_dim() const { return feature_kind == FeatureKind::kSpatial ? 2 : 5; }

  static KernelDesc spatial(KernelRole role, double theta_pos);
  static KernelDesc bilateral(KernelRole role, double theta_pos, double theta_col);
};

struct KernelSpec {
  std::vector<KernelDesc> kernels;

  int count() const { return static_cast<int>(kernels.size()); }
  void require_valid() const;

  // Appearance (bilateral) + smoothness (spatial) kernel pairs.
  static KernelSpec cascade(double theta_pos, double theta_col);
  static KernelSpec unified(double theta_pos, double theta_col, double cross_theta_pos,
                            double cross_theta_col);
};

// Per-kernel feature vectors, already divided by their bandwidths, so every
// downstream kernel evaluation is exp(-|h_i - h_j|^2 / 2).
struct FeatureSlice {
  int dim = 0;
  int count = 0;
  std::vector<double> data;  // data[pixel * dim + c]

  std::span<const double> at(int pixel) const {
    return {data.data() + static_cast<std::size_t>(pixel) * dim, static_cast<std::size_t>(dim)};
  }
};

struct FeatureStack {
  std::vector<FeatureSlice> slices;  // one per kernel, in KernelSpec order
};

FeatureStack extract_features(const RgbImage& image, const KernelSpec& spec);

// Mean-field parameters: one beta row shared by all scales (unified) or one
// row per scale (cascade); iterations likewise shared or per scale.
struct CrfParams {
  std::vector<std::vector<double>> betas;
  std::vector<int> iterations{5};

  std::span<const double> betas_for(int scale) const;
  int iterations_for(int scale) const;
  void require_valid(int kernel_count) const;
};

}  // namespace crffuse
