#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "crffuse/gradcheck.hpp"
#include "crffuse/rng.hpp"

namespace crffuse {

namespace {

// Keeps every mean and the prediction strictly positive so the relu and the
// prediction clamp stay away from their kinks and central differences are
// two-sided derivatives of a smooth function.
struct Instance {
  RgbImage image;
  SideOutputStack sides;
  DepthMap gt;
  FusionModel model;
};

Instance make_instance(const GradCheckCase& c, Rng& rng) {
  Instance inst;
  const int w = c.width, h = c.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  inst.image.width = w;
  inst.image.height = h;
  inst.image.r.resize(n);
  inst.image.g.resize(n);
  inst.image.b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    inst.image.r[i] = rng.uniform();
    inst.image.g[i] = rng.uniform();
    inst.image.b[i] = rng.uniform();
  }

  for (int l = 0; l < c.levels; ++l) {
    DepthMap s(w, h);
    for (double& v : s.values) v = rng.uniform(0.2, 1.0);
    inst.sides.scales.push_back(std::move(s));
  }
  inst.gt = DepthMap(w, h);
  for (double& v : inst.gt.values) v = rng.uniform(0.2, 1.0);

  inst.model.kind = c.model;
  inst.model.backend = FilterBackendKind::kExact;
  inst.model.structure = build_passing_structure(c.structure, c.levels);
  inst.model.kernels = c.model == ModelKind::kUnified
                           ? KernelSpec::unified(2.0, 0.2, 2.5, 0.25)
                           : KernelSpec::cascade(2.0, 0.2);
  const std::size_t rows =
      c.model == ModelKind::kUnified ? 1 : static_cast<std::size_t>(c.levels);
  inst.model.params.betas.assign(rows, std::vector<double>(inst.model.kernels.count(), 0.0));
  for (auto& row : inst.model.params.betas)
    for (double& b : row) b = rng.uniform(0.05, 0.6);
  inst.model.params.iterations = {5};
  return inst;
}

double loss_of(const Instance& inst, std::shared_ptr<const FilterBank> bank) {
  FusionResult res = model_forward(inst.sides, inst.image, inst.model, std::move(bank), false);
  return square_loss(res.prediction, inst.gt).loss;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckCase& c, double step) {
  if (step <= 0.0) throw std::invalid_argument("step must be positive");
  Rng rng(c.seed);
  Instance inst = make_instance(c, rng);

  auto bank = std::make_shared<FilterBank>(
      inst.model.kernels, extract_features(inst.image, inst.model.kernels), inst.model.backend);

  FusionResult res = model_forward(inst.sides, inst.image, inst.model, bank, true);
  LossResult loss = square_loss(res.prediction, inst.gt);
  ModelGrads grads = model_backward(inst.model, res.trace, loss.grad.values);

  GradCheckReport report;
  auto record = [&](double analytic, double numeric, const std::string& label) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.checks;
    if (rel > report.worst_rel_error) {
      report.worst_rel_error = rel;
      report.worst_label = label;
    }
  };

  for (std::size_t r = 0; r < inst.model.params.betas.size(); ++r) {
    for (std::size_t m = 0; m < inst.model.params.betas[r].size(); ++m) {
      const double saved = inst.model.params.betas[r][m];
      inst.model.params.betas[r][m] = saved + step;
      const double up = loss_of(inst, bank);
      inst.model.params.betas[r][m] = saved - step;
      const double down = loss_of(inst, bank);
      inst.model.params.betas[r][m] = saved;
      record(grads.grad_betas[r][m], (up - down) / (2.0 * step),
             "beta[" + std::to_string(r) + "][" + std::to_string(m) + "]");
    }
  }

  for (int l = 0; l < c.levels; ++l) {
    for (int i = 0; i < inst.sides.scales[l].size(); ++i) {
      const double saved = inst.sides.scales[l].values[i];
      inst.sides.scales[l].values[i] = saved + step;
      const double up = loss_of(inst, bank);
      inst.sides.scales[l].values[i] = saved - step;
      const double down = loss_of(inst, bank);
      inst.sides.scales[l].values[i] = saved;
      record(grads.grad_sides[l][i], (up - down) / (2.0 * step),
             "s[" + std::to_string(l) + "][" + std::to_string(i) + "]");
    }
  }
  return report;
}

}  // namespace crffuse
