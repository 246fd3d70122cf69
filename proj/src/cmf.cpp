#include <cassert>
#include <cmath>
#include <stdexcept>

#include "crffuse/cmf.hpp"

namespace crffuse {

namespace {

void validate_betas(const FilterBank& bank, std::span<const double> betas) {
  if (betas.size() != static_cast<std::size_t>(bank.kernel_count()))
    throw std::invalid_argument("beta count must match the bank's kernel count");
  for (double b : betas) {
    if (!(b >= 0.0) || !std::isfinite(b))
      throw std::invalid_argument("beta values must be nonnegative and finite");
  }
}

}  // namespace

std::vector<double> compute_gamma(const FilterBank& bank, std::span<const double> betas,
                                  Gates gates, int cross_degree) {
  validate_betas(bank, betas);
  if (cross_degree < 0) throw std::invalid_argument("cross_degree must be nonnegative");

  const int n = bank.pixel_count();
  std::vector<double> gamma(n, 0.0);
  for (int m = 0; m < bank.kernel_count(); ++m) {
    const KernelDesc& k = bank.kernel(m);
    double w;
    if (k.role == KernelRole::kIntraScale)
      w = betas[m];
    else if (gates.g2 && cross_degree > 0)
      w = betas[m] * cross_degree;
    else
      continue;
    const std::vector<double>& s = bank.kernel_sums(m);
    for (int i = 0; i < n; ++i) gamma[i] += w * s[i];
  }
  for (int i = 0; i < n; ++i) {
    gamma[i] = 2.0 * (1.0 + 2.0 * gamma[i]);
    assert(gamma[i] >= 2.0);
  }
  return gamma;
}

CmfOutput cmf_forward(std::span<const double> s, std::span<const double> mu_same,
                      const std::vector<double>* mu_prev, int cross_degree,
                      std::span<const double> betas, Gates gates, const FilterBank& bank,
                      std::shared_ptr<const std::vector<double>> gamma, bool want_state) {
  validate_betas(bank, betas);
  const std::size_t n = static_cast<std::size_t>(bank.pixel_count());
  if (s.size() != n || mu_same.size() != n)
    throw std::invalid_argument("map sizes must match the bank's pixels");
  if (mu_prev != nullptr && mu_prev->size() != n)
    throw std::invalid_argument("previous-scale map size must match the bank's pixels");
  if (gates.g1 && mu_prev == nullptr && cross_degree != 0)
    throw std::invalid_argument("cross_degree without a previous-scale map");
  if (gates.g1 && mu_prev != nullptr && cross_degree < 1)
    throw std::invalid_argument("a previous-scale map requires a positive cross_degree");

  if (gamma == nullptr)
    gamma = std::make_shared<const std::vector<double>>(
        compute_gamma(bank, betas, gates, mu_prev == nullptr ? 0 : cross_degree));

  std::vector<double> numerator(s.begin(), s.end());
  if (!gates.g1 && mu_prev != nullptr)
    for (std::size_t i = 0; i < n; ++i) numerator[i] += (*mu_prev)[i];

  CmfOutput out;
  MeanFieldState& st = out.state;
  for (int m = 0; m < bank.kernel_count(); ++m) {
    const KernelDesc& k = bank.kernel(m);
    if (k.role == KernelRole::kIntraScale) {
      std::vector<double> filtered = bank.apply(m, mu_same, true);
      for (std::size_t i = 0; i < n; ++i) numerator[i] += 2.0 * betas[m] * filtered[i];
      if (want_state) st.intra_filtered.push_back(std::move(filtered));
    } else if (gates.g1 && mu_prev != nullptr) {
      std::vector<double> filtered = bank.apply(m, *mu_prev, false);
      for (std::size_t i = 0; i < n; ++i) numerator[i] += 2.0 * betas[m] * filtered[i];
      if (want_state) st.cross_filtered.push_back(std::move(filtered));
    }
  }

  out.mu_next.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.mu_next[i] = 2.0 * numerator[i] / (*gamma)[i];

  if (want_state) {
    st.gates = gates;
    st.cross_degree = mu_prev == nullptr ? 0 : cross_degree;
    st.has_prev = mu_prev != nullptr;
    st.gamma = gamma;
    st.mu_next = out.mu_next;
  }
  return out;
}

CmfGrads cmf_backward(const MeanFieldState& state, std::span<const double> grad_mu_next,
                      std::span<const double> betas, const FilterBank& bank) {
  validate_betas(bank, betas);
  const std::size_t n = static_cast<std::size_t>(bank.pixel_count());
  if (grad_mu_next.size() != n || state.mu_next.size() != n || state.gamma == nullptr)
    throw std::invalid_argument("mean-field state does not match the bank");

  const std::vector<double>& gamma = *state.gamma;

  // mu = 2 * numerator / gamma:
  //   u = dL/d numerator = 2 * g / gamma
  //   v = dL/d gamma     = -g * mu / gamma
  std::vector<double> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = 2.0 * grad_mu_next[i] / gamma[i];
    v[i] = -grad_mu_next[i] * state.mu_next[i] / gamma[i];
  }

  CmfGrads grads;
  grads.grad_s = u;
  grads.grad_mu_same.assign(n, 0.0);
  if (state.has_prev && !state.gates.g1) grads.grad_mu_prev = u;
  if (state.has_prev && state.gates.g1) grads.grad_mu_prev.assign(n, 0.0);
  grads.grad_betas.assign(bank.kernel_count(), 0.0);

  int intra_idx = 0, cross_idx = 0;
  for (int m = 0; m < bank.kernel_count(); ++m) {
    const KernelDesc& k = bank.kernel(m);
    if (k.role == KernelRole::kIntraScale) {
      const std::vector<double>& filtered = state.intra_filtered.at(intra_idx++);
      std::vector<double> fu = bank.apply(m, u, true);
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        grads.grad_mu_same[i] += 2.0 * betas[m] * fu[i];
        acc += u[i] * filtered[i];
      }
      grads.grad_betas[m] += 2.0 * acc;
      // gamma's intra term: d gamma_i / d beta_m = 4 S_m,i
      const std::vector<double>& s = bank.kernel_sums(m);
      double gacc = 0.0;
      for (std::size_t i = 0; i < n; ++i) gacc += v[i] * s[i];
      grads.grad_betas[m] += 4.0 * gacc;
    } else {
      if (state.gates.g1 && state.has_prev) {
        const std::vector<double>& filtered = state.cross_filtered.at(cross_idx++);
        std::vector<double> fu = bank.apply(m, u, false);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          grads.grad_mu_prev[i] += 2.0 * betas[m] * fu[i];
          acc += u[i] * filtered[i];
        }
        grads.grad_betas[m] += 2.0 * acc;
      }
      if (state.gates.g2 && state.cross_degree > 0) {
        const std::vector<double>& s = bank.kernel_sums(m);
        double gacc = 0.0;
        for (std::size_t i = 0; i < n; ++i) gacc += v[i] * s[i];
        grads.grad_betas[m] += 4.0 * state.cross_degree * gacc;
      }
    }
  }
  return grads;
}

}  // namespace crffuse
