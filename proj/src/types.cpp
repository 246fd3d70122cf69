#include "crffuse/types.hpp"

#include <cmath>
#include <stdexcept>

namespace crffuse {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

DepthMap::DepthMap(int w, int h, double fill)
    : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {
  require(w > 0 && h > 0, "depth map dimensions must be positive");
}

void DepthMap::require_valid(bool nonnegative) const {
  require(width > 0 && height > 0, "depth map dimensions must be positive");
  require(values.size() == static_cast<std::size_t>(width) * height,
          "depth map value count does not match its dimensions");
  for (double v : values) {
    require(std::isfinite(v), "depth map contains a non-finite value");
    if (nonnegative) require(v >= 0.0, "depth map contains a negative value");
  }
}

RgbImage::RgbImage(int w, int h, double fill)
    : width(w),
      height(h),
      r(static_cast<std::size_t>(w) * h, fill),
      g(static_cast<std::size_t>(w) * h, fill),
      b(static_cast<std::size_t>(w) * h, fill) {
  require(w > 0 && h > 0, "image dimensions must be positive");
}

void RgbImage::require_valid() const {
  require(width > 0 && height > 0, "image dimensions must be positive");
  std::size_t n = static_cast<std::size_t>(width) * height;
  require(r.size() == n && g.size() == n && b.size() == n,
          "image channel size does not match its dimensions");
  for (const auto* plane : {&r, &g, &b})
    for (double v : *plane)
      require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "image channels must lie in [0, 1]");
}

std::vector<double> SideOutputStack::flattened() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(levels()) * pixels());
  for (const DepthMap& m : scales) out.insert(out.end(), m.values.begin(), m.values.end());
  return out;
}

void SideOutputStack::require_valid() const {
  require(!scales.empty(), "side-output stack must hold at least one scale");
  for (const DepthMap& m : scales) {
    m.require_valid(false);
    require(m.width == width() && m.height == height(),
            "all side outputs must share the same dimensions");
  }
}

KernelDesc KernelDesc::spatial(KernelRole role, double theta_pos) {
  return KernelDesc{FeatureKind::kSpatial, role, {theta_pos, theta_pos}};
}

KernelDesc KernelDesc::bilateral(KernelRole role, double theta_pos, double theta_col) {
  return KernelDesc{FeatureKind::kBilateral, role,
                    {theta_pos, theta_pos, theta_col, theta_col, theta_col}};
}

void KernelSpec::require_valid() const {
  require(!kernels.empty(), "kernel spec must define at least one kernel");
  for (const KernelDesc& k : kernels) {
    require(k.bandwidths.size() == static_cast<std::size_t>(k.feature_dim()),
            "kernel bandwidth count must match its feature dimension");
    for (double t : k.bandwidths)
      require(std::isfinite(t) && t > 0.0, "kernel bandwidths must be positive");
  }
}

KernelSpec KernelSpec::cascade(double theta_pos, double theta_col) {
  KernelSpec spec;
  spec.kernels = {KernelDesc::bilateral(KernelRole::kIntraScale, theta_pos, theta_col),
                  KernelDesc::spatial(KernelRole::kIntraScale, theta_pos)};
  return spec;
}

KernelSpec KernelSpec::unified(double theta_pos, double theta_col, double cross_theta_pos,
                               double cross_theta_col) {
  KernelSpec spec;
  spec.kernels = {KernelDesc::bilateral(KernelRole::kIntraScale, theta_pos, theta_col),
                  KernelDesc::spatial(KernelRole::kIntraScale, theta_pos),
                  KernelDesc::bilateral(KernelRole::kCrossScale, cross_theta_pos, cross_theta_col),
                  KernelDesc::spatial(KernelRole::kCrossScale, cross_theta_pos)};
  return spec;
}

std::span<const double> CrfParams::betas_for(int scale) const {
  const auto& row = betas.size() == 1 ? betas.front() : betas.at(scale);
  return {row.data(), row.size()};
}

int CrfParams::iterations_for(int scale) const {
  return iterations.size() == 1 ? iterations.front() : iterations.at(scale);
}

void CrfParams::require_valid(int kernel_count) const {
  require(!betas.empty(), "params must hold at least one beta row");
  for (const auto& row : betas) {
    require(row.size() == static_cast<std::size_t>(kernel_count),
            "beta row length must match the kernel count");
    for (double b : row)
      require(std::isfinite(b) && b >= 0.0, "beta values must be nonnegative");
  }
  require(!iterations.empty(), "params must hold an iteration count");
  for (int t : iterations) require(t >= 1, "iteration counts must be at least 1");
}

}  // namespace crffuse
