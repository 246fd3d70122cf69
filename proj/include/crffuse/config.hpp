#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crffuse/eval.hpp"
#include "crffuse/fusion.hpp"
#include "crffuse/types.hpp"

namespace crffuse {

// Parsed run configuration. The grammar is line-oriented `key = value` with
// `[section]` headers and `#` comments; see the repository README for the
// full key reference. `model` is the one required key.
struct Config {
  ModelKind model = ModelKind::kUnified;
  StructureKind structure = StructureKind::kBottomUp;
  FilterBackendKind backend = FilterBackendKind::kLattice;
  int scales = 3;
  int iterations = 5;
  std::vector<std::pair<int, int>> custom_edges;  // 0-based; 1-based in config text

  // [kernels]
  double theta_pos = 8.0;
  double theta_col = 0.25;
  double cross_theta_pos = 8.0;
  double cross_theta_col = 0.25;

  // [params]
  double beta_init = 0.003;

  // [training]
  TrainHyper training;

  // [synth]
  int synth_width = 64;
  int synth_height = 64;
  int box_count = 6;
  double depth_min = 1.0;
  double depth_max = 10.0;
  double blur_max = 3.0;
  double blur_min = 0.5;
  double noise_max = 0.6;
  double noise_min = 0.3;

  // [io]
  std::string out_dir = "out";
  double min_valid_depth = 1e-3;

  bool operator==(const Config&) const = default;

  void require_valid() const;
  KernelSpec kernel_spec() const;
  CrfParams initial_params() const;
  PassingStructure passing_structure() const;
  FusionModel fusion_model() const;
  SynthSpec synth_spec(std::uint64_t seed) const;
};

// Throws std::invalid_argument with a line number on syntax errors and with
// the key name on semantic errors. Unknown keys and sections are rejected.
Config parse_config(const std::string& text);

// Canonical text form; parse_config(render_config(c)) == c for any valid c.
std::string render_config(const Config& config);

// Trained-parameter file: `rows`, `kernels`, `iterations`, then one
// space-separated `row_<k>` line of kernel weights per scale row.
// parse_params(render_params(p)) round-trips exactly.
std::string render_params(const CrfParams& params);
CrfParams parse_params(const std::string& text);

}  // namespace crffuse
