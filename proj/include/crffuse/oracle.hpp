#pragma once

#include <functional>
#include <span>
#include <vector>

#include "crffuse/fusion.hpp"

namespace crffuse {
namespace oracle {

// Dense symmetric positive definite system for one scale:
//   A(i,i) = 1 + 2 sum_intra beta_m S_m(i) + 2 deg sum_cross beta_m S'_m(i)
//   A(i,j) = -2 sum_intra beta_m K_m(i, j)            for i != j
// where S excludes the self term, S' includes it, and deg counts incoming
// edges. Assembled directly from kernel features, independent of any filter.
struct EnergySystem {
  int n = 0;
  std::vector<double> matrix;  // row-major n*n

  double at(int i, int j) const { return matrix[static_cast<std::size_t>(i) * n + j]; }
};

// Exact Gaussian kernel value between two feature vectors of one slice.
double kernel_value(const FeatureSlice& features, int i, int j);

EnergySystem assemble_scale_system(const FilterBank& bank, std::span<const double> betas,
                                   Gates gates, int cross_degree);

// Cholesky solve with a residual check; throws when the factorization fails
// or the residual is out of tolerance.
std::vector<double> solve_system(const EnergySystem& system, std::span<const double> rhs);

// Exact minimizers of every scale's quadratic, chained through the structure
// in dependency order. Unified scales see raw upstream minimizers; cascade
// scales see them rectified. Returned coarsest scale first.
std::vector<std::vector<double>> map_solve_exact(const SideOutputStack& sides,
                                                 const FusionModel& model,
                                                 const FilterBank& bank);

// Quadratic energy of one scale given its unary target and the frozen maps of
// its incoming scales. Pair terms run over ordered pixel pairs.
double conditional_scale_energy(const FilterBank& bank, std::span<const double> betas,
                                Gates gates, std::span<const double> x,
                                std::span<const double> unary,
                                const std::vector<std::vector<double>>& sources);

// Sum of the per-scale conditional energies for a full assignment, coarsest
// scale first in `assignment`. Cascade scales use o = s + relu'd sources as
// their unary target.
double energy(const std::vector<std::vector<double>>& assignment, const SideOutputStack& sides,
              const FusionModel& model, const FilterBank& bank);

// Central finite differences of f around x.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h = 1e-4);

}  // namespace oracle
}  // namespace crffuse
