#include <cmath>
#include <stdexcept>

#include "crffuse/filter.hpp"

namespace crffuse {

namespace {

constexpr int kDenseCacheLimit = 1024;  // pixels; dense kernel matrix above this is too large

void validate_request(const FilterRequest& request) {
  if (request.features == nullptr)
    throw std::invalid_argument("filter request is missing its feature slice");
  const FeatureSlice& f = *request.features;
  if (f.count <= 0 || f.dim <= 0 ||
      f.data.size() != static_cast<std::size_t>(f.count) * f.dim)
    throw std::invalid_argument("feature slice data does not match its dimensions");
  if (request.values.size() != static_cast<std::size_t>(f.count))
    throw std::invalid_argument("filter request value count does not match its features");
}

}  // namespace

std::vector<double> gauss_filter_exact(const FilterRequest& request) {
  validate_request(request);
  const FeatureSlice& f = *request.features;
  const int n = f.count, d = f.dim;
  const double* feat = f.data.data();

  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* fi = feat + static_cast<std::size_t>(i) * d;
    for (int j = i + 1; j < n; ++j) {
      const double* fj = feat + static_cast<std::size_t>(j) * d;
      double dist2 = 0.0;
      for (int c = 0; c < d; ++c) {
        double t = fi[c] - fj[c];
        dist2 += t * t;
      }
      double k = std::exp(-0.5 * dist2);
      out[i] += k * request.values[j];
      out[j] += k * request.values[i];
    }
  }
  if (!request.exclude_self)
    for (int i = 0; i < n; ++i) out[i] += request.values[i];  // K(i,i) = 1
  return out;
}

FilterBank::FilterBank(KernelSpec spec, FeatureStack features, FilterBackendKind kind)
    : spec_(std::move(spec)), features_(std::move(features)), kind_(kind) {
  spec_.require_valid();
  if (features_.slices.size() != static_cast<std::size_t>(spec_.count()))
    throw std::invalid_argument("feature stack slice count must match the kernel spec");
  pixels_ = features_.slices.front().count;
  for (const FeatureSlice& s : features_.slices)
    if (s.count != pixels_)
      throw std::invalid_argument("all feature slices must cover the same pixels");

  if (kind_ == FilterBackendKind::kLattice) {
    // Kernels with identical descriptors produce identical feature slices
    // (same image), so they can share one lattice.
    lattice_of_kernel_.resize(spec_.count(), -1);
    for (int m = 0; m < spec_.count(); ++m) {
      for (int p = 0; p < m; ++p) {
        const KernelDesc &a = spec_.kernels[m], &b = spec_.kernels[p];
        if (a.feature_kind == b.feature_kind && a.bandwidths == b.bandwidths) {
          lattice_of_kernel_[m] = lattice_of_kernel_[p];
          break;
        }
      }
      if (lattice_of_kernel_[m] < 0) {
        lattice_of_kernel_[m] = static_cast<int>(lattices_.size());
        lattices_.push_back(std::make_shared<const LatticeCache>(features_.slices[m]));
      }
    }
  } else if (pixels_ <= kDenseCacheLimit) {
    dense_.resize(spec_.count());
    for (int m = 0; m < spec_.count(); ++m) {
      const FeatureSlice& f = features_.slices[m];
      const int n = pixels_, d = f.dim;
      auto& mat = dense_[m];
      mat.assign(static_cast<std::size_t>(n) * n, 0.0);
      for (int i = 0; i < n; ++i) {
        mat[static_cast<std::size_t>(i) * n + i] = 1.0;
        const double* fi = f.data.data() + static_cast<std::size_t>(i) * d;
        for (int j = i + 1; j < n; ++j) {
          const double* fj = f.data.data() + static_cast<std::size_t>(j) * d;
          double dist2 = 0.0;
          for (int c = 0; c < d; ++c) {
            double t = fi[c] - fj[c];
            dist2 += t * t;
          }
          double k = std::exp(-0.5 * dist2);
          mat[static_cast<std::size_t>(i) * n + j] = k;
          mat[static_cast<std::size_t>(j) * n + i] = k;
        }
      }
    }
  }

  sums_.resize(spec_.count());
  std::vector<double> ones(pixels_, 1.0);
  for (int m = 0; m < spec_.count(); ++m) {
    bool exclude = spec_.kernels[m].role == KernelRole::kIntraScale;
    sums_[m] = apply(m, ones, exclude);
    // Lattice approximation can dip epsilon-negative for isolated pixels;
    // the sums feed gamma, which must stay >= 2.
    for (double& s : sums_[m])
      if (s < 0.0) s = 0.0;
  }
}

std::vector<double> FilterBank::apply(int m, std::span<const double> values,
                                      bool exclude_self) const {
  if (m < 0 || m >= spec_.count()) throw std::invalid_argument("kernel index out of range");
  if (values.size() != static_cast<std::size_t>(pixels_))
    throw std::invalid_argument("filter value count does not match the bank's pixels");

  if (kind_ == FilterBackendKind::kLattice) {
    FilterRequest req{values, &features_.slices[m], exclude_self};
    return gauss_filter_lattice(req, *lattices_[lattice_of_kernel_[m]]);
  }
  if (!dense_.empty()) {
    const auto& mat = dense_[m];
    std::vector<double> out(pixels_, 0.0);
    for (int i = 0; i < pixels_; ++i) {
      const double* row = mat.data() + static_cast<std::size_t>(i) * pixels_;
      double acc = 0.0;
      for (int j = 0; j < pixels_; ++j) acc += row[j] * values[j];
      out[i] = acc;
    }
    if (exclude_self)
      for (int i = 0; i < pixels_; ++i) out[i] -= values[i];
    return out;
  }
  FilterRequest req{values, &features_.slices[m], exclude_self};
  return gauss_filter_exact(req);
}

}  // namespace crffuse
