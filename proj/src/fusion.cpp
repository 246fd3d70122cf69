#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "crffuse/fusion.hpp"
#include "crffuse/rng.hpp"

namespace crffuse {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void add_into(std::vector<double>& dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

void PassingStructure::require_valid() const {
  require(levels >= 1, "structure must have at least one scale");
  require(levels == 1 || !edges.empty(),
          "a multi-scale structure must connect its prediction scale");
  for (auto [src, tgt] : edges) {
    require(src >= 0 && src < levels && tgt >= 0 && tgt < levels,
            "structure edge endpoint out of range");
    require(src != tgt, "structure edges must connect distinct scales");
  }
  require(prediction_scale == (edges.empty() ? 0 : edges.back().second),
          "prediction scale must be the last edge's target");
  compute_schedule(*this);  // throws when the list is cyclic or out of order
}

PassingStructure build_passing_structure(StructureKind kind, int levels) {
  require(levels >= 1, "structure must have at least one scale");
  PassingStructure s;
  s.kind = kind;
  s.levels = levels;
  switch (kind) {
    case StructureKind::kBottomUp:
      for (int l = 0; l + 1 < levels; ++l) s.edges.emplace_back(l, l + 1);
      break;
    case StructureKind::kTopDown:
      for (int l = levels - 1; l >= 1; --l) s.edges.emplace_back(l, l - 1);
      break;
    case StructureKind::kSkip:
      for (int l = 0; l + 2 < levels; ++l) s.edges.emplace_back(l, l + 2);
      if (levels >= 2) s.edges.emplace_back(levels - 2, levels - 1);
      break;
    case StructureKind::kAllToOne:
      for (int l = 0; l + 1 < levels; ++l) s.edges.emplace_back(l, levels - 1);
      break;
    case StructureKind::kCustom:
      throw std::invalid_argument("custom structures require an explicit edge list");
  }
  s.prediction_scale = s.edges.empty() ? 0 : s.edges.back().second;
  s.require_valid();
  return s;
}

PassingStructure make_custom_structure(std::vector<std::pair<int, int>> edges, int levels) {
  PassingStructure s;
  s.kind = StructureKind::kCustom;
  s.levels = levels;
  s.edges = std::move(edges);
  s.prediction_scale = s.edges.empty() ? 0 : s.edges.back().second;
  s.require_valid();
  return s;
}

ScaleSchedule compute_schedule(const PassingStructure& structure) {
  const int levels = structure.levels;
  ScaleSchedule sch;
  sch.incoming.resize(levels);
  for (auto [src, tgt] : structure.edges) sch.incoming[tgt].push_back(src);

  std::vector<int> last_in(levels, -1);
  for (int e = 0; e < static_cast<int>(structure.edges.size()); ++e)
    last_in[structure.edges[e].second] = e;

  std::vector<char> scheduled(levels, 0);
  for (int e = 0; e < static_cast<int>(structure.edges.size()); ++e) {
    auto [src, tgt] = structure.edges[e];
    if (!scheduled[src] && sch.incoming[src].empty()) {
      sch.order.push_back(src);
      scheduled[src] = 1;
    }
    if (last_in[tgt] == e) {
      for (int in : sch.incoming[tgt])
        if (!scheduled[in])
          throw std::invalid_argument(
              "edge list must complete every source before its target (acyclic, sources first)");
      if (scheduled[tgt])
        throw std::invalid_argument("edge list revisits an already-completed scale");
      sch.order.push_back(tgt);
      scheduled[tgt] = 1;
    }
  }
  for (int l = 0; l < levels; ++l)
    if (!scheduled[l]) sch.order.push_back(l);  // isolated scales update too
  return sch;
}

void FusionModel::require_valid() const {
  kernels.require_valid();
  structure.require_valid();
  params.require_valid(kernels.count());

  int intra = 0, cross = 0;
  for (const KernelDesc& k : kernels.kernels)
    (k.role == KernelRole::kIntraScale ? intra : cross)++;
  if (kind == ModelKind::kUnified) {
    require(intra == 2 && cross == 2,
            "unified model requires 2 intra-scale + 2 cross-scale kernels");
    require(params.betas.size() == 1, "unified model shares one beta row across scales");
    require(params.iterations.size() == 1, "unified model shares one sweep count");
  } else {
    require(intra == 2 && cross == 0, "cascade model requires exactly 2 intra-scale kernels");
    require(params.betas.size() == static_cast<std::size_t>(structure.levels),
            "cascade model requires one beta row per scale");
    require(params.iterations.size() == 1 ||
                params.iterations.size() == static_cast<std::size_t>(structure.levels),
            "cascade iteration counts must be shared or per scale");
  }
}

namespace {

std::shared_ptr<const FilterBank> ensure_bank(const SideOutputStack& sides, const RgbImage& image,
                                              const FusionModel& model,
                                              std::shared_ptr<const FilterBank> bank) {
  sides.require_valid();
  image.require_valid();
  require(sides.levels() == model.structure.levels,
          "side-output count must match the structure's scale count");
  require(sides.width() == image.width && sides.height() == image.height,
          "side outputs and image must share dimensions");
  if (bank == nullptr)
    bank = std::make_shared<FilterBank>(model.kernels, extract_features(image, model.kernels),
                                        model.backend);
  require(bank->pixel_count() == sides.pixels(), "filter bank does not match the inputs");
  return bank;
}

FusionResult assemble_result(const SideOutputStack& sides, const FusionModel& model,
                             std::vector<std::vector<double>> mu) {
  FusionResult res;
  const int w = sides.width(), h = sides.height();
  res.scale_means.reserve(mu.size());
  for (const auto& m : mu) {
    DepthMap d(w, h);
    d.values = m;
    res.scale_means.push_back(std::move(d));
  }
  res.prediction = DepthMap(w, h);
  const auto& pred_mu = mu[model.structure.prediction_scale];
  for (int i = 0; i < res.prediction.size(); ++i)
    res.prediction.values[i] = std::max(0.0, pred_mu[i]);
  return res;
}

}  // namespace

FusionResult unified_forward(const SideOutputStack& sides, const RgbImage& image,
                             const FusionModel& model, std::shared_ptr<const FilterBank> bank,
                             bool want_trace) {
  model.require_valid();
  require(model.kind == ModelKind::kUnified, "unified_forward requires a unified model");
  bank = ensure_bank(sides, image, model, std::move(bank));

  const std::size_t n = static_cast<std::size_t>(sides.pixels());
  const int levels = model.structure.levels;
  ScaleSchedule sch = compute_schedule(model.structure);
  const Gates gates = model.gates();
  const std::span<const double> betas = model.params.betas_for(0);
  const int sweeps = model.params.iterations_for(0);

  std::vector<std::vector<double>> mu;
  mu.reserve(levels);
  for (int l = 0; l < levels; ++l) mu.push_back(sides.scales[l].values);

  std::vector<std::shared_ptr<const std::vector<double>>> gamma_by_degree;
  auto gamma_for = [&](int degree) {
    if (degree >= static_cast<int>(gamma_by_degree.size()))
      gamma_by_degree.resize(degree + 1);
    if (gamma_by_degree[degree] == nullptr)
      gamma_by_degree[degree] = std::make_shared<const std::vector<double>>(
          compute_gamma(*bank, betas, gates, degree));
    return gamma_by_degree[degree];
  };

  ForwardTrace trace;
  if (want_trace) {
    trace.bank = bank;
    trace.schedule = sch;
    trace.observations.resize(levels);
  }

  for (int t = 0; t < sweeps; ++t) {
    for (int l : sch.order) {
      const std::vector<int>& inc = sch.incoming[l];
      std::vector<double> prev;
      const std::vector<double>* prev_ptr = nullptr;
      if (!inc.empty()) {
        prev.assign(n, 0.0);
        for (int src : inc) add_into(prev, mu[src]);
        prev_ptr = &prev;
      }
      CmfOutput out =
          cmf_forward(sides.scales[l].values, mu[l], prev_ptr, static_cast<int>(inc.size()),
                      betas, gates, *bank, gamma_for(static_cast<int>(inc.size())), want_trace);
      mu[l] = std::move(out.mu_next);
      if (want_trace) {
        out.state.scale = l;
        out.state.sources = inc;
        trace.blocks.push_back(std::move(out.state));
      }
    }
  }

  FusionResult res = assemble_result(sides, model, mu);
  if (want_trace) {
    trace.final_mu = std::move(mu);
    res.trace = std::move(trace);
  }
  return res;
}

FusionResult cascade_forward(const SideOutputStack& sides, const RgbImage& image,
                             const FusionModel& model, std::shared_ptr<const FilterBank> bank,
                             bool want_trace) {
  model.require_valid();
  require(model.kind == ModelKind::kCascade, "cascade_forward requires a cascade model");
  bank = ensure_bank(sides, image, model, std::move(bank));

  const std::size_t n = static_cast<std::size_t>(sides.pixels());
  const int levels = model.structure.levels;
  ScaleSchedule sch = compute_schedule(model.structure);
  const Gates gates = model.gates();

  std::vector<std::vector<double>> mu(levels);

  ForwardTrace trace;
  if (want_trace) {
    trace.bank = bank;
    trace.schedule = sch;
    trace.observations.resize(levels);
  }

  for (int l : sch.order) {
    const std::vector<int>& inc = sch.incoming[l];
    std::vector<double> relu_sum;
    const std::vector<double>* prev_ptr = nullptr;
    if (!inc.empty()) {
      relu_sum.assign(n, 0.0);
      for (int src : inc)
        for (std::size_t i = 0; i < n; ++i) relu_sum[i] += std::max(0.0, mu[src][i]);
      prev_ptr = &relu_sum;
    }
    const std::span<const double> betas = model.params.betas_for(l);
    auto gamma =
        std::make_shared<const std::vector<double>>(compute_gamma(*bank, betas, gates, 0));

    // Initialize at the unary optimum o = s + relu'd incoming estimates.
    std::vector<double> cur = sides.scales[l].values;
    if (prev_ptr != nullptr) add_into(cur, *prev_ptr);
    if (want_trace) trace.observations[l] = cur;

    const int iterations = model.params.iterations_for(l);
    for (int it = 0; it < iterations; ++it) {
      CmfOutput out = cmf_forward(sides.scales[l].values, cur, prev_ptr, 0, betas, gates, *bank,
                                  gamma, want_trace);
      cur = std::move(out.mu_next);
      if (want_trace) {
        out.state.scale = l;
        out.state.sources = inc;
        trace.blocks.push_back(std::move(out.state));
      }
    }
    mu[l] = std::move(cur);
  }

  FusionResult res = assemble_result(sides, model, mu);
  if (want_trace) {
    trace.final_mu = std::move(mu);
    res.trace = std::move(trace);
  }
  return res;
}

FusionResult model_forward(const SideOutputStack& sides, const RgbImage& image,
                           const FusionModel& model, std::shared_ptr<const FilterBank> bank,
                           bool want_trace) {
  return model.kind == ModelKind::kUnified
             ? unified_forward(sides, image, model, std::move(bank), want_trace)
             : cascade_forward(sides, image, model, std::move(bank), want_trace);
}

LossResult square_loss(const DepthMap& prediction, const DepthMap& gt) {
  prediction.require_valid(false);
  gt.require_valid(false);
  require(prediction.width == gt.width && prediction.height == gt.height,
          "loss inputs must share dimensions");
  LossResult out;
  out.grad = DepthMap(prediction.width, prediction.height);
  for (int i = 0; i < prediction.size(); ++i) {
    double diff = prediction.values[i] - gt.values[i];
    out.loss += diff * diff;
    out.grad.values[i] = 2.0 * diff;
  }
  return out;
}

std::vector<double> side_losses(const SideOutputStack& sides, const DepthMap& gt) {
  sides.require_valid();
  std::vector<double> out;
  out.reserve(sides.levels());
  for (const DepthMap& s : sides.scales) out.push_back(square_loss(s, gt).loss);
  return out;
}

ModelGrads model_backward(const FusionModel& model, const ForwardTrace& trace,
                          std::span<const double> grad_prediction) {
  require(trace.bank != nullptr && !trace.blocks.empty(),
          "backward requires a forward trace (run the forward with tracing on)");
  const FilterBank& bank = *trace.bank;
  const std::size_t n = static_cast<std::size_t>(bank.pixel_count());
  require(grad_prediction.size() == n, "prediction gradient size mismatch");
  const int levels = model.structure.levels;

  ModelGrads grads;
  grads.grad_betas.assign(model.params.betas.size(),
                          std::vector<double>(model.kernels.count(), 0.0));
  grads.grad_sides.assign(levels, std::vector<double>(n, 0.0));
  auto beta_row = [&](int scale) -> std::vector<double>& {
    return grads.grad_betas[grads.grad_betas.size() == 1 ? 0 : scale];
  };

  // Prediction = max(0, final mu at the prediction scale).
  const int pred = model.structure.prediction_scale;
  std::vector<std::vector<double>> grad_mu(levels, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    grad_mu[pred][i] = trace.final_mu[pred][i] > 0.0 ? grad_prediction[i] : 0.0;

  if (model.kind == ModelKind::kUnified) {
    for (auto it = trace.blocks.rbegin(); it != trace.blocks.rend(); ++it) {
      const MeanFieldState& st = *it;
      const int l = st.scale;
      CmfGrads cg = cmf_backward(st, grad_mu[l], model.params.betas_for(l), bank);
      grad_mu[l] = std::move(cg.grad_mu_same);
      add_into(grads.grad_sides[l], cg.grad_s);
      if (st.has_prev)
        for (int src : st.sources) add_into(grad_mu[src], cg.grad_mu_prev);
      add_into(beta_row(l), cg.grad_betas);
    }
    // Initialization mu_0 = s.
    for (int l = 0; l < levels; ++l) add_into(grads.grad_sides[l], grad_mu[l]);
  } else {
    // Blocks are contiguous per scale; reverse order visits targets before
    // their sources, so relu-masked gradients land before a source unwinds.
    std::vector<std::vector<double>> grad_o(levels, std::vector<double>(n, 0.0));
    for (int bi = static_cast<int>(trace.blocks.size()) - 1; bi >= 0; --bi) {
      const MeanFieldState& st = trace.blocks[bi];
      const int l = st.scale;
      CmfGrads cg = cmf_backward(st, grad_mu[l], model.params.betas_for(l), bank);
      grad_mu[l] = std::move(cg.grad_mu_same);
      add_into(grad_o[l], cg.grad_s);  // s and the relu'd inputs both sit in o
      add_into(beta_row(l), cg.grad_betas);
      if (bi == 0 || trace.blocks[bi - 1].scale != l) {
        add_into(grad_o[l], grad_mu[l]);  // initialization mu_0 = o
        add_into(grads.grad_sides[l], grad_o[l]);
        for (int src : st.sources)
          for (std::size_t i = 0; i < n; ++i)
            if (trace.final_mu[src][i] > 0.0) grad_mu[src][i] += grad_o[l][i];
      }
    }
  }
  return grads;
}

TrainResult train(const Dataset& data, const FusionModel& model_in, const TrainHyper& hyper,
                  std::uint64_t seed) {
  require(!data.samples.empty(), "training requires at least one sample");
  require(hyper.learning_rate >= 0.0 && hyper.weight_decay >= 0.0, "negative hyperparameter");
  require(hyper.momentum >= 0.0 && hyper.momentum < 1.0, "momentum must lie in [0, 1)");
  require(hyper.batch_size >= 1, "batch size must be at least 1");
  require(hyper.epochs >= 0 && hyper.max_steps >= 0, "negative schedule bound");

  FusionModel model = model_in;
  model.require_valid();
  for (const auto& sample : data.samples) sample.gt.require_valid(true);

  Rng rng(seed);
  const std::size_t count = data.samples.size();
  std::vector<std::shared_ptr<const FilterBank>> banks(count);
  auto bank_for = [&](std::size_t i) {
    if (banks[i] == nullptr)
      banks[i] = std::make_shared<FilterBank>(
          model.kernels, extract_features(data.samples[i].image, model.kernels), model.backend);
    return banks[i];
  };

  std::vector<std::vector<double>> velocity(model.params.betas.size(),
                                            std::vector<double>(model.kernels.count(), 0.0));
  TrainResult out;
  int step = 0;
  bool done = false;
  for (int epoch = 0; epoch < hyper.epochs && !done; ++epoch) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = count; i > 1; --i)
      std::swap(order[i - 1], order[rng.bounded(i)]);

    for (std::size_t start = 0; start < count && !done; start += hyper.batch_size) {
      if (hyper.max_steps > 0 && step >= hyper.max_steps) {
        done = true;
        break;
      }
      const std::size_t end = std::min(count, start + hyper.batch_size);
      std::vector<std::vector<double>> batch_grad(model.params.betas.size(),
                                                  std::vector<double>(model.kernels.count(), 0.0));
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const Dataset::Sample& sample = data.samples[order[b]];
        FusionResult res = model_forward(sample.sides, sample.image, model, bank_for(order[b]),
                                         true);
        LossResult loss = square_loss(res.prediction, sample.gt);
        batch_loss += loss.loss;
        ModelGrads g = model_backward(model, res.trace, loss.grad.values);
        for (std::size_t r = 0; r < batch_grad.size(); ++r) add_into(batch_grad[r], g.grad_betas[r]);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ++step;
      out.history.push_back({step, epoch, batch_loss * inv});

      for (std::size_t r = 0; r < model.params.betas.size(); ++r) {
        for (int m = 0; m < model.kernels.count(); ++m) {
          double g = batch_grad[r][m] * inv + hyper.weight_decay * model.params.betas[r][m];
          velocity[r][m] = hyper.momentum * velocity[r][m] + g;
          model.params.betas[r][m] -= hyper.learning_rate * velocity[r][m];
          if (model.params.betas[r][m] < 0.0) model.params.betas[r][m] = 0.0;
        }
      }
    }
  }
  out.params = model.params;
  return out;
}

}  // namespace crffuse
