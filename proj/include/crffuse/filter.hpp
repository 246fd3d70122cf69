#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "crffuse/types.hpp"

namespace crffuse {

// One unnormalized Gaussian filtering request:
//   out_i = sum_j exp(-|h_i - h_j|^2 / 2) * values_j
// over the request's feature slice (bandwidths already folded in). With
// exclude_self the j = i term (weight exactly 1) is left out.
struct FilterRequest {
  std::span<const double> values;
  const FeatureSlice* features = nullptr;
  bool exclude_self = false;
};

// Brute-force O(N^2) evaluation. Exact and symmetric; feasible up to roughly
// N = 16384 pixels.
std::vector<double> gauss_filter_exact(const FilterRequest& request);

// Permutohedral lattice: splat onto the enclosing simplex vertices, blur with
// a [1,2,1]/4 kernel along each lattice direction, slice back. The blur is
// applied once in forward direction order and once in reverse and the two
// slices averaged, which makes the operator self-adjoint by construction.
// The overall amplitude is calibrated per cache by matching off-diagonal
// row mass against the target Gaussian on a deterministic sample of rows;
// the sample follows the feature-sorted order, so the gain (and with it the
// filter output) is independent of pixel enumeration.
class LatticeCache {
 public:
  explicit LatticeCache(const FeatureSlice& features);

  int pixel_count() const { return pixel_count_; }
  int dim() const { return dim_; }
  int vertex_count() const { return vertex_count_; }

  // Response at the probe pixel (pixel 0) to its own unit impulse; the
  // lattice analogue of K(i,i) = 1.
  double self_response() const { return self_response_; }

  // True when this cache was built from a slice with identical content.
  bool matches(const FeatureSlice& features) const;

  std::vector<double> filter(std::span<const double> values) const;

 private:
  std::vector<double> blurred(const std::vector<double>& base, bool reverse) const;

  int pixel_count_ = 0;
  int dim_ = 0;
  int vertex_count_ = 0;
  std::vector<int> offsets_;         // (d+1) vertex ids per pixel
  std::vector<double> barycentric_;  // (d+1) weights per pixel
  std::vector<int> blur_n1_, blur_n2_;  // per direction, per vertex; -1 = none
  double gain_ = 1.0;  // row-mass amplitude calibration
  double self_response_ = 1.0;
  const double* feature_data_ = nullptr;
  std::uint64_t feature_hash_ = 0;
};

LatticeCache build_lattice(const FeatureSlice& features);

// Lattice-backed filtering; the cache must have been built from the request's
// feature slice. exclude_self subtracts the measured self-response times the
// pixel's own value.
std::vector<double> gauss_filter_lattice(const FilterRequest& request, const LatticeCache& cache);

// All kernels of a model over one image's features, behind a backend switch.
// Exact mode additionally caches dense kernel matrices for small images so
// repeated sweeps cost a matvec instead of N^2 exponentials.
class FilterBank {
 public:
  FilterBank(KernelSpec spec, FeatureStack features, FilterBackendKind kind);

  int kernel_count() const { return spec_.count(); }
  int pixel_count() const { return pixels_; }
  FilterBackendKind backend() const { return kind_; }
  const KernelSpec& spec() const { return spec_; }
  const KernelDesc& kernel(int m) const { return spec_.kernels.at(m); }
  const FeatureSlice& features(int m) const { return features_.slices.at(m); }

  std::vector<double> apply(int m, std::span<const double> values, bool exclude_self) const;

  // Kernel sums S_m = filter_m(ones) with the role's self handling (intra
  // excludes self, cross includes it); lattice sums are clamped at 0.
  const std::vector<double>& kernel_sums(int m) const { return sums_.at(m); }

 private:
  KernelSpec spec_;
  FeatureStack features_;
  FilterBackendKind kind_;
  int pixels_ = 0;
  std::vector<int> lattice_of_kernel_;                       // index into lattices_
  std::vector<std::shared_ptr<const LatticeCache>> lattices_;
  std::vector<std::vector<double>> dense_;                   // per kernel, unit diagonal
  std::vector<std::vector<double>> sums_;
};

}  // namespace crffuse
