#pragma once

#include <memory>
#include <span>
#include <vector>

#include "crffuse/filter.hpp"
#include "crffuse/types.hpp"

namespace crffuse {

// g1 routes previous-scale estimates: filtered through the cross-scale
// kernels (unified) or added to the observation (cascade). g2 keeps the
// cross-kernel sums inside the normalizer. The two models use 1/1 and 0/0.
struct Gates {
  bool g1 = true;
  bool g2 = true;
};

// Per-pixel normalizer: gamma_i = 2 (1 + 2 sum_intra beta_m S_m,i
// + 2 * cross_degree * sum_cross beta_m S_m,i), cross part only with g2 and a
// positive cross_degree (= number of incoming edges feeding the scale).
std::vector<double> compute_gamma(const FilterBank& bank, std::span<const double> betas,
                                  Gates gates, int cross_degree);

// Everything the backward pass needs from one mean-field update.
struct MeanFieldState {
  int scale = 0;
  Gates gates;
  int cross_degree = 0;
  bool has_prev = false;
  std::vector<int> sources;  // producing scales, set by the fusion layer
  std::shared_ptr<const std::vector<double>> gamma;
  std::vector<double> mu_next;
  std::vector<std::vector<double>> intra_filtered;  // filter_m(mu_same) per intra kernel
  std::vector<std::vector<double>> cross_filtered;  // filter_m(prev sum) per cross kernel
};

struct CmfOutput {
  std::vector<double> mu_next;
  MeanFieldState state;  // populated only when want_state
};

// One mean-field update for one scale.
//   g1 = 1: numerator = s + 2 sum_intra beta_m filter_m(mu_same, excl self)
//                         + 2 sum_cross beta_m filter_m(mu_prev, incl self)
//   g1 = 0: numerator = (s + mu_prev) + 2 sum_intra beta_m filter_m(mu_same, excl self)
//   mu_next = 2 * numerator / gamma
// mu_prev may be null (source scales); for g1 = 1 it is the sum of the
// cross_degree incoming source means. A null gamma is computed on the fly.
CmfOutput cmf_forward(std::span<const double> s, std::span<const double> mu_same,
                      const std::vector<double>* mu_prev, int cross_degree,
                      std::span<const double> betas, Gates gates, const FilterBank& bank,
                      std::shared_ptr<const std::vector<double>> gamma = nullptr,
                      bool want_state = false);

struct CmfGrads {
  std::vector<double> grad_s;
  std::vector<double> grad_mu_same;
  std::vector<double> grad_mu_prev;  // empty when the update had no prev input
  std::vector<double> grad_betas;    // per bank kernel
};

// Exact reverse-mode of cmf_forward; the filters are self-adjoint, so the
// backward pass reuses the forward filters.
CmfGrads cmf_backward(const MeanFieldState& state, std::span<const double> grad_mu_next,
                      std::span<const double> betas, const FilterBank& bank);

}  // namespace crffuse
