#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "crffuse/cmf.hpp"
#include "crffuse/filter.hpp"
#include "crffuse/types.hpp"

namespace crffuse {

// Directed scale-connection graph. Edges are (source, target) pairs over
// 0-based scale indices, executed in list order; the prediction is read at
// the last edge's target (scale 0 when there are no edges).
struct PassingStructure {
  StructureKind kind = StructureKind::kBottomUp;
  int levels = 1;
  std::vector<std::pair<int, int>> edges;
  int prediction_scale = 0;

  void require_valid() const;  // distinct endpoints, in range, acyclic
};

PassingStructure build_passing_structure(StructureKind kind, int levels);
PassingStructure make_custom_structure(std::vector<std::pair<int, int>> edges, int levels);

// Scale update order derived from the edge list: a scale updates once its
// last incoming edge is reached (sources update when first referenced), which
// is a topological order, so targets always read current-sweep source values.
struct ScaleSchedule {
  std::vector<int> order;                  // every scale exactly once
  std::vector<std::vector<int>> incoming;  // per scale: source scales in edge order
};

ScaleSchedule compute_schedule(const PassingStructure& structure);

struct FusionModel {
  ModelKind kind = ModelKind::kUnified;
  CrfParams params;
  KernelSpec kernels;
  PassingStructure structure;
  FilterBackendKind backend = FilterBackendKind::kLattice;

  Gates gates() const {
    return kind == ModelKind::kUnified ? Gates{true, true} : Gates{false, false};
  }
  void require_valid() const;
};

// Execution record for the backward pass.
struct ForwardTrace {
  std::shared_ptr<const FilterBank> bank;
  ScaleSchedule schedule;
  std::vector<MeanFieldState> blocks;            // execution order
  std::vector<std::vector<double>> final_mu;     // per scale, after its updates
  std::vector<std::vector<double>> observations;  // cascade: o_l = s_l + relu'd inputs
};

struct FusionResult {
  DepthMap prediction;                // final-scale mean, clamped at 0
  std::vector<DepthMap> scale_means;  // raw final mean per scale
  ForwardTrace trace;                 // populated when requested
};

FusionResult cascade_forward(const SideOutputStack& sides, const RgbImage& image,
                             const FusionModel& model,
                             std::shared_ptr<const FilterBank> bank = nullptr,
                             bool want_trace = false);
FusionResult unified_forward(const SideOutputStack& sides, const RgbImage& image,
                             const FusionModel& model,
                             std::shared_ptr<const FilterBank> bank = nullptr,
                             bool want_trace = false);
FusionResult model_forward(const SideOutputStack& sides, const RgbImage& image,
                           const FusionModel& model,
                           std::shared_ptr<const FilterBank> bank = nullptr,
                           bool want_trace = false);

struct LossResult {
  double loss = 0.0;
  DepthMap grad;
};

// Sum of squared errors and its gradient 2 (pred - gt).
LossResult square_loss(const DepthMap& prediction, const DepthMap& gt);

// Per-scale sums of squared errors of the raw side outputs against gt.
std::vector<double> side_losses(const SideOutputStack& sides, const DepthMap& gt);

struct ModelGrads {
  std::vector<std::vector<double>> grad_betas;  // same shape as params.betas
  std::vector<std::vector<double>> grad_sides;  // per scale
};

ModelGrads model_backward(const FusionModel& model, const ForwardTrace& trace,
                          std::span<const double> grad_prediction);

struct Dataset {
  struct Sample {
    RgbImage image;
    SideOutputStack sides;
    DepthMap gt;
  };
  std::vector<Sample> samples;
};

struct TrainHyper {
  double learning_rate = 3e-9;
  double momentum = 0.5;
  double weight_decay = 5e-4;
  int epochs = 10;
  int batch_size = 4;
  int max_steps = 0;  // 0 = bounded by epochs only

  bool operator==(const TrainHyper&) const = default;
};

struct LossRecord {
  int step = 0;
  int epoch = 0;
  double loss = 0.0;  // batch mean of per-sample square losses
};

struct TrainResult {
  CrfParams params;
  std::vector<LossRecord> history;
};

// Mini-batch SGD with momentum and weight decay on the betas only; betas are
// projected to >= 0 after each full update. Deterministic given the seed.
TrainResult train(const Dataset& data, const FusionModel& model, const TrainHyper& hyper,
                  std::uint64_t seed);

}  // namespace crffuse
