#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "crffuse/cmf.hpp"
#include "crffuse/eval.hpp"
#include "crffuse/filter.hpp"
#include "crffuse/rng.hpp"

using namespace crffuse;

namespace {

constexpr Gates kUnifiedGates{true, true};
constexpr Gates kCascadeGates{false, false};

FilterBank identical_pair_bank() {
  KernelSpec spec;
  spec.kernels = {KernelDesc::spatial(KernelRole::kIntraScale, 1.0)};
  FeatureStack features;
  FeatureSlice slice;
  slice.dim = 2;
  slice.count = 2;
  slice.data = {0.25, 0.5, 0.25, 0.5};
  features.slices = {slice};
  return FilterBank(spec, std::move(features), FilterBackendKind::kExact);
}

FilterBank scene_bank(int size, std::uint64_t seed, const KernelSpec& kernels,
                      FilterBackendKind kind) {
  SynthSpec spec;
  spec.width = size;
  spec.height = size;
  spec.seed = seed;
  return FilterBank(kernels, extract_features(synth_scene(spec).image, kernels), kind);
}

std::vector<double> random_vector(int n, double lo, double hi, Rng& rng) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.uniform(lo, hi);
  return out;
}

double relative_gap(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-12});
  return std::fabs(analytic - numeric) / denom;
}

}  // namespace

TEST_CASE("gamma is 2 for an isolated pixel") {
  KernelSpec spec;
  spec.kernels = {KernelDesc::spatial(KernelRole::kIntraScale, 1.0)};
  FeatureStack features;
  FeatureSlice slice;
  slice.dim = 2;
  slice.count = 1;
  slice.data = {0.0, 0.0};
  features.slices = {slice};
  FilterBank bank(spec, std::move(features), FilterBackendKind::kExact);

  for (double beta : {0.0, 0.5, 3.0}) {
    const std::vector<double> betas = {beta};
    for (Gates gates : {kUnifiedGates, kCascadeGates}) {
      const std::vector<double> gamma = compute_gamma(bank, betas, gates, 0);
      REQUIRE(gamma.size() == 1);
      CHECK(gamma[0] == doctest::Approx(2.0));
    }
  }
}

TEST_CASE("gamma is 2 everywhere when beta vanishes") {
  const FilterBank bank =
      scene_bank(8, 5, KernelSpec::unified(8.0, 0.25, 8.0, 0.25), FilterBackendKind::kExact);
  const std::vector<double> betas(4, 0.0);
  for (double g : compute_gamma(bank, betas, kUnifiedGates, 2)) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("gamma doubles the weighted kernel mass") {
  // Two coincident pixels: the one intra kernel contributes S = 1 per pixel,
  // so gamma = 2 (1 + 2 * 0.5 * 1) = 4.
  const FilterBank bank = identical_pair_bank();
  const std::vector<double> betas = {0.5};
  const std::vector<double> gamma = compute_gamma(bank, betas, kCascadeGates, 0);
  CHECK(gamma[0] == doctest::Approx(4.0));
  CHECK(gamma[1] == doctest::Approx(4.0));
}

TEST_CASE("gamma never drops below 2") {
  Rng rng(31);
  const FilterBank bank =
      scene_bank(8, 6, KernelSpec::unified(8.0, 0.25, 8.0, 0.25), FilterBackendKind::kExact);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<double> betas = random_vector(4, 0.0, 2.0, rng);
    for (int degree : {0, 1, 2}) {
      for (double g : compute_gamma(bank, betas, kUnifiedGates, degree)) CHECK(g >= 2.0);
      for (double g : compute_gamma(bank, betas, kCascadeGates, degree)) CHECK(g >= 2.0);
    }
  }
}

TEST_CASE("a single pixel keeps its observation") {
  KernelSpec spec;
  spec.kernels = {KernelDesc::bilateral(KernelRole::kIntraScale, 8.0, 0.25)};
  FeatureStack features;
  FeatureSlice slice;
  slice.dim = 5;
  slice.count = 1;
  slice.data = {0.0, 0.0, 1.0, 2.0, 3.0};
  features.slices = {slice};
  FilterBank bank(spec, std::move(features), FilterBackendKind::kExact);

  const std::vector<double> s = {0.8};
  const std::vector<double> mu = {-2.0};
  for (double beta : {0.0, 0.7}) {
    const std::vector<double> betas = {beta};
    for (Gates gates : {kUnifiedGates, kCascadeGates}) {
      const CmfOutput out = cmf_forward(s, mu, nullptr, 0, betas, gates, bank);
      CHECK(out.mu_next[0] == doctest::Approx(0.8));
    }
  }
}

TEST_CASE("cascade folds the previous scale into the observation") {
  const FilterBank bank =
      scene_bank(4, 7, KernelSpec::cascade(8.0, 0.25), FilterBackendKind::kExact);
  const int n = bank.pixel_count();
  const std::vector<double> betas = {0.0, 0.0};
  const std::vector<double> s(n, 0.5);
  const std::vector<double> mu(n, 0.5);
  const std::vector<double> prev(n, 0.2);

  const CmfOutput out = cmf_forward(s, mu, &prev, 0, betas, kCascadeGates, bank);
  for (double v : out.mu_next) CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("two coupled pixels converge to the stationary point") {
  // Stationarity of (x0-s0)^2 + (x1-s1)^2 + 2*beta*(x0-x1)^2 with beta = 0.5
  // and s = [0, 1] pins the fixed point at [1/3, 2/3].
  const FilterBank bank = identical_pair_bank();
  const std::vector<double> betas = {0.5};
  const std::vector<double> s = {0.0, 1.0};

  std::vector<double> mu = s;
  for (int it = 0; it < 200; ++it)
    mu = cmf_forward(s, mu, nullptr, 0, betas, kCascadeGates, bank).mu_next;

  CHECK(mu[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  CHECK(mu[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("zero beta makes the update an identity with unit gradient") {
  Rng rng(32);
  const FilterBank bank =
      scene_bank(6, 8, KernelSpec::unified(8.0, 0.25, 8.0, 0.25), FilterBackendKind::kExact);
  const int n = bank.pixel_count();
  const std::vector<double> betas(4, 0.0);
  const std::vector<double> s = random_vector(n, 0.0, 2.0, rng);
  const std::vector<double> mu = random_vector(n, 0.0, 2.0, rng);

  CmfOutput out = cmf_forward(s, mu, nullptr, 0, betas, kUnifiedGates, bank, nullptr, true);
  for (int i = 0; i < n; ++i) CHECK(out.mu_next[i] == doctest::Approx(s[i]).epsilon(1e-14));

  const std::vector<double> upstream = random_vector(n, -1.0, 1.0, rng);
  const CmfGrads grads = cmf_backward(out.state, upstream, betas, bank);
  for (int i = 0; i < n; ++i) {
    CHECK(grads.grad_s[i] == doctest::Approx(upstream[i]).epsilon(1e-14));
    CHECK(grads.grad_mu_same[i] == 0.0);
  }
}

TEST_CASE("the observation gradient ignores the observation value") {
  Rng rng(33);
  const FilterBank bank =
      scene_bank(6, 9, KernelSpec::unified(8.0, 0.25, 8.0, 0.25), FilterBackendKind::kExact);
  const int n = bank.pixel_count();
  const std::vector<double> betas = {0.4, 0.2, 0.1, 0.3};
  const std::vector<double> mu = random_vector(n, 0.0, 2.0, rng);
  const std::vector<double> prev = random_vector(n, 0.0, 2.0, rng);
  const std::vector<double> upstream = random_vector(n, -1.0, 1.0, rng);

  const std::vector<double> s1 = random_vector(n, 0.0, 2.0, rng);
  const std::vector<double> s2 = random_vector(n, 5.0, 9.0, rng);

  CmfOutput a = cmf_forward(s1, mu, &prev, 1, betas, kUnifiedGates, bank, nullptr, true);
  CmfOutput b = cmf_forward(s2, mu, &prev, 1, betas, kUnifiedGates, bank, nullptr, true);
  const CmfGrads ga = cmf_backward(a.state, upstream, betas, bank);
  const CmfGrads gb = cmf_backward(b.state, upstream, betas, bank);
  CHECK(ga.grad_s == gb.grad_s);
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(34);
  const KernelSpec kernels = KernelSpec::unified(8.0, 0.25, 8.0, 0.25);
  const FilterBank bank = scene_bank(8, 10, kernels, FilterBackendKind::kExact);
  const int n = bank.pixel_count();
  const int kernel_count = bank.kernel_count();

  for (Gates gates : {kUnifiedGates, kCascadeGates}) {
    const int degree = gates.g1 ? 2 : 0;
    std::vector<double> betas = random_vector(kernel_count, 0.05, 0.5, rng);
    std::vector<double> s = random_vector(n, 0.5, 2.0, rng);
    std::vector<double> mu = random_vector(n, 0.5, 2.0, rng);
    std::vector<double> prev = random_vector(n, 0.5, 2.0, rng);
    const std::vector<double> w = random_vector(n, -1.0, 1.0, rng);

    auto objective = [&]() {
      const CmfOutput out = cmf_forward(s, mu, &prev, degree, betas, gates, bank);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += w[i] * out.mu_next[i];
      return acc;
    };

    CmfOutput out = cmf_forward(s, mu, &prev, degree, betas, gates, bank, nullptr, true);
    const CmfGrads grads = cmf_backward(out.state, w, betas, bank);
    REQUIRE(grads.grad_mu_prev.size() == static_cast<std::size_t>(n));

    const double h = 1e-4;
    auto check_entry = [&](double& slot, double analytic) {
      const double saved = slot;
      slot = saved + h;
      const double up = objective();
      slot = saved - h;
      const double down = objective();
      slot = saved;
      CHECK(relative_gap(analytic, (up - down) / (2.0 * h)) <= 1e-4);
    };

    for (int m = 0; m < kernel_count; ++m) check_entry(betas[m], grads.grad_betas[m]);
    for (int i = 0; i < n; i += 7) {
      check_entry(s[i], grads.grad_s[i]);
      check_entry(mu[i], grads.grad_mu_same[i]);
      check_entry(prev[i], grads.grad_mu_prev[i]);
    }
  }
}

TEST_CASE("swapping the filter backend perturbs the update within tolerance") {
  const KernelSpec kernels = KernelSpec::cascade(8.0, 0.25);
  SynthSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.seed = 12;
  const SynthScene scene = synth_scene(spec);
  const SideOutputStack sides = synth_side_outputs(scene.gt, spec);
  const FeatureStack features = extract_features(scene.image, kernels);

  const FilterBank exact(kernels, features, FilterBackendKind::kExact);
  const FilterBank lattice(kernels, features, FilterBackendKind::kLattice);

  const std::vector<double> betas = {0.3, 0.3};
  const std::vector<double>& s = sides.scales[2].values;
  const std::vector<double>& mu = sides.scales[0].values;

  const CmfOutput a = cmf_forward(s, mu, nullptr, 0, betas, kCascadeGates, exact);
  const CmfOutput b = cmf_forward(s, mu, nullptr, 0, betas, kCascadeGates, lattice);

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.mu_next.size(); ++i) {
    num += (a.mu_next[i] - b.mu_next[i]) * (a.mu_next[i] - b.mu_next[i]);
    den += a.mu_next[i] * a.mu_next[i];
  }
  CHECK(std::sqrt(num / den) <= 0.10);
}
