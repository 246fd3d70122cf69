#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "crffuse/config.hpp"

namespace crffuse {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void fail_line(int line, const std::string& what) {
  throw std::invalid_argument("line " + std::to_string(line) + ": " + what);
}

double parse_real(const std::string& value, const std::string& key, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    fail_line(line, "key " + key + " expects a real number, got '" + value + "'");
  }
  if (used != value.size())
    fail_line(line, "key " + key + " expects a real number, got '" + value + "'");
  return v;
}

int parse_int(const std::string& value, const std::string& key, int line) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(value, &used);
  } catch (const std::exception&) {
    fail_line(line, "key " + key + " expects an integer, got '" + value + "'");
  }
  if (used != value.size())
    fail_line(line, "key " + key + " expects an integer, got '" + value + "'");
  return static_cast<int>(v);
}

std::vector<std::pair<int, int>> parse_edges(const std::string& value, int line) {
  std::vector<std::pair<int, int>> edges;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t arrow = item.find('>');
    if (arrow == std::string::npos || arrow == 0 || arrow + 1 == item.size())
      fail_line(line, "edges expects 'src>tgt' pairs separated by commas, got '" + item + "'");
    int src = parse_int(trim(item.substr(0, arrow)), "edges", line);
    int tgt = parse_int(trim(item.substr(arrow + 1)), "edges", line);
    if (src < 1 || tgt < 1) fail_line(line, "edges uses 1-based scale numbers");
    edges.emplace_back(src - 1, tgt - 1);
  }
  if (edges.empty()) fail_line(line, "edges must list at least one pair");
  return edges;
}

const char* model_name(ModelKind k) {
  return k == ModelKind::kUnified ? "unified" : "cascade";
}

const char* structure_name(StructureKind k) {
  switch (k) {
    case StructureKind::kBottomUp: return "bottom_up";
    case StructureKind::kTopDown: return "top_down";
    case StructureKind::kSkip: return "skip";
    case StructureKind::kAllToOne: return "all_to_one";
    case StructureKind::kCustom: return "custom";
  }
  return "?";
}

const char* backend_name(FilterBackendKind k) {
  return k == FilterBackendKind::kExact ? "exact" : "lattice";
}

}  // namespace

void Config::require_valid() const {
  require(scales >= 1, "scales must be at least 1");
  require(iterations >= 1, "iterations must be at least 1");
  require(theta_pos > 0.0 && theta_col > 0.0 && cross_theta_pos > 0.0 && cross_theta_col > 0.0,
          "kernel bandwidths must be positive");
  require(beta_init >= 0.0, "beta_init must be nonnegative");
  require(training.learning_rate >= 0.0 && training.weight_decay >= 0.0,
          "training rates must be nonnegative");
  require(training.momentum >= 0.0 && training.momentum < 1.0, "momentum must lie in [0, 1)");
  require(training.epochs >= 0 && training.batch_size >= 1 && training.max_steps >= 0,
          "training schedule must be nonnegative with batch_size >= 1");
  require(structure == StructureKind::kCustom ? !custom_edges.empty() : custom_edges.empty(),
          "edges is required for structure = custom and rejected otherwise");
  require(min_valid_depth >= 0.0, "min_valid_depth must be nonnegative");
  require(!out_dir.empty() && out_dir.find('#') == std::string::npos &&
              out_dir.find('\n') == std::string::npos,
          "out_dir must be a plain path");
  synth_spec(0).require_valid();
  passing_structure().require_valid();
}

KernelSpec Config::kernel_spec() const {
  return model == ModelKind::kUnified
             ? KernelSpec::unified(theta_pos, theta_col, cross_theta_pos, cross_theta_col)
             : KernelSpec::cascade(theta_pos, theta_col);
}

CrfParams Config::initial_params() const {
  CrfParams p;
  const int kernels = kernel_spec().count();
  const std::size_t rows = model == ModelKind::kUnified ? 1 : static_cast<std::size_t>(scales);
  p.betas.assign(rows, std::vector<double>(kernels, beta_init));
  p.iterations = {iterations};
  return p;
}

PassingStructure Config::passing_structure() const {
  return structure == StructureKind::kCustom ? make_custom_structure(custom_edges, scales)
                                             : build_passing_structure(structure, scales);
}

FusionModel Config::fusion_model() const {
  FusionModel m;
  m.kind = model;
  m.kernels = kernel_spec();
  m.structure = passing_structure();
  m.params = initial_params();
  m.backend = backend;
  m.require_valid();
  return m;
}

SynthSpec Config::synth_spec(std::uint64_t seed) const {
  SynthSpec s;
  s.width = synth_width;
  s.height = synth_height;
  s.levels = scales;
  s.box_count = box_count;
  s.depth_min = depth_min;
  s.depth_max = depth_max;
  s.blur_max = blur_max;
  s.blur_min = blur_min;
  s.noise_max = noise_max;
  s.noise_min = noise_min;
  s.seed = seed;
  return s;
}

Config parse_config(const std::string& text) {
  Config config;
  bool saw_model = false;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;

  auto positive = [&](double v, const std::string& key) {
    if (!(v > 0.0)) fail_line(line, "key " + key + " must be positive");
    return v;
  };
  auto nonnegative = [&](double v, const std::string& key) {
    if (v < 0.0) fail_line(line, "key " + key + " must be nonnegative");
    return v;
  };

  while (std::getline(in, raw)) {
    ++line;
    std::string stripped = raw.substr(0, raw.find('#'));
    stripped = trim(stripped);
    if (stripped.empty()) continue;

    if (stripped.front() == '[') {
      if (stripped.back() != ']') fail_line(line, "unterminated section header");
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section != "kernels" && section != "params" && section != "training" &&
          section != "synth" && section != "io")
        fail_line(line, "unknown section [" + section + "]");
      continue;
    }

    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) fail_line(line, "expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) fail_line(line, "empty key");
    if (value.empty()) fail_line(line, "key " + key + " has no value");

    bool known = true;
    if (section.empty()) {
      if (key == "model") {
        saw_model = true;
        if (value == "unified") config.model = ModelKind::kUnified;
        else if (value == "cascade") config.model = ModelKind::kCascade;
        else fail_line(line, "model must be 'unified' or 'cascade'");
      } else if (key == "structure") {
        if (value == "bottom_up") config.structure = StructureKind::kBottomUp;
        else if (value == "top_down") config.structure = StructureKind::kTopDown;
        else if (value == "skip") config.structure = StructureKind::kSkip;
        else if (value == "all_to_one") config.structure = StructureKind::kAllToOne;
        else if (value == "custom") config.structure = StructureKind::kCustom;
        else fail_line(line, "unknown structure '" + value + "'");
      } else if (key == "backend") {
        if (value == "exact") config.backend = FilterBackendKind::kExact;
        else if (value == "lattice") config.backend = FilterBackendKind::kLattice;
        else fail_line(line, "backend must be 'exact' or 'lattice'");
      } else if (key == "scales") {
        config.scales = parse_int(value, key, line);
        if (config.scales < 1) fail_line(line, "key scales must be at least 1");
      } else if (key == "iterations") {
        config.iterations = parse_int(value, key, line);
        if (config.iterations < 1) fail_line(line, "key iterations must be at least 1");
      } else if (key == "edges") {
        config.custom_edges = parse_edges(value, line);
      } else {
        known = false;
      }
    } else if (section == "kernels") {
      if (key == "theta_pos") config.theta_pos = positive(parse_real(value, key, line), key);
      else if (key == "theta_col") config.theta_col = positive(parse_real(value, key, line), key);
      else if (key == "cross_theta_pos")
        config.cross_theta_pos = positive(parse_real(value, key, line), key);
      else if (key == "cross_theta_col")
        config.cross_theta_col = positive(parse_real(value, key, line), key);
      else known = false;
    } else if (section == "params") {
      if (key == "beta_init") config.beta_init = nonnegative(parse_real(value, key, line), key);
      else known = false;
    } else if (section == "training") {
      if (key == "learning_rate")
        config.training.learning_rate = nonnegative(parse_real(value, key, line), key);
      else if (key == "momentum")
        config.training.momentum = nonnegative(parse_real(value, key, line), key);
      else if (key == "weight_decay")
        config.training.weight_decay = nonnegative(parse_real(value, key, line), key);
      else if (key == "epochs") config.training.epochs = parse_int(value, key, line);
      else if (key == "batch_size") config.training.batch_size = parse_int(value, key, line);
      else if (key == "max_steps") config.training.max_steps = parse_int(value, key, line);
      else known = false;
    } else if (section == "synth") {
      if (key == "width") config.synth_width = parse_int(value, key, line);
      else if (key == "height") config.synth_height = parse_int(value, key, line);
      else if (key == "box_count") config.box_count = parse_int(value, key, line);
      else if (key == "depth_min") config.depth_min = positive(parse_real(value, key, line), key);
      else if (key == "depth_max") config.depth_max = positive(parse_real(value, key, line), key);
      else if (key == "blur_max") config.blur_max = nonnegative(parse_real(value, key, line), key);
      else if (key == "blur_min") config.blur_min = nonnegative(parse_real(value, key, line), key);
      else if (key == "noise_max")
        config.noise_max = nonnegative(parse_real(value, key, line), key);
      else if (key == "noise_min")
        config.noise_min = nonnegative(parse_real(value, key, line), key);
      else known = false;
    } else if (section == "io") {
      if (key == "out_dir") config.out_dir = value;
      else if (key == "min_valid_depth")
        config.min_valid_depth = nonnegative(parse_real(value, key, line), key);
      else known = false;
    }
    if (!known)
      fail_line(line, "unknown key '" + key + "'" +
                          (section.empty() ? "" : " in section [" + section + "]"));
  }

  if (!saw_model) throw std::invalid_argument("missing required key: model");
  config.require_valid();
  return config;
}

std::string render_config(const Config& c) {
  std::string out;
  out += "model = " + std::string(model_name(c.model)) + "\n";
  out += "structure = " + std::string(structure_name(c.structure)) + "\n";
  out += "backend = " + std::string(backend_name(c.backend)) + "\n";
  out += "scales = " + std::to_string(c.scales) + "\n";
  out += "iterations = " + std::to_string(c.iterations) + "\n";
  if (!c.custom_edges.empty()) {
    out += "edges = ";
    for (std::size_t e = 0; e < c.custom_edges.size(); ++e) {
      if (e) out += ",";
      out += std::to_string(c.custom_edges[e].first + 1) + ">" +
             std::to_string(c.custom_edges[e].second + 1);
    }
    out += "\n";
  }
  out += "\n[kernels]\n";
  out += "theta_pos = " + fmt(c.theta_pos) + "\n";
  out += "theta_col = " + fmt(c.theta_col) + "\n";
  out += "cross_theta_pos = " + fmt(c.cross_theta_pos) + "\n";
  out += "cross_theta_col = " + fmt(c.cross_theta_col) + "\n";
  out += "\n[params]\n";
  out += "beta_init = " + fmt(c.beta_init) + "\n";
  out += "\n[training]\n";
  out += "learning_rate = " + fmt(c.training.learning_rate) + "\n";
  out += "momentum = " + fmt(c.training.momentum) + "\n";
  out += "weight_decay = " + fmt(c.training.weight_decay) + "\n";
  out += "epochs = " + std::to_string(c.training.epochs) + "\n";
  out += "batch_size = " + std::to_string(c.training.batch_size) + "\n";
  out += "max_steps = " + std::to_string(c.training.max_steps) + "\n";
  out += "\n[synth]\n";
  out += "width = " + std::to_string(c.synth_width) + "\n";
  out += "height = " + std::to_string(c.synth_height) + "\n";
  out += "box_count = " + std::to_string(c.box_count) + "\n";
  out += "depth_min = " + fmt(c.depth_min) + "\n";
  out += "depth_max = " + fmt(c.depth_max) + "\n";
  out += "blur_max = " + fmt(c.blur_max) + "\n";
  out += "blur_min = " + fmt(c.blur_min) + "\n";
  out += "noise_max = " + fmt(c.noise_max) + "\n";
  out += "noise_min = " + fmt(c.noise_min) + "\n";
  out += "\n[io]\n";
  out += "out_dir = " + c.out_dir + "\n";
  out += "min_valid_depth = " + fmt(c.min_valid_depth) + "\n";
  return out;
}

std::string render_params(const CrfParams& params) {
  std::string out;
  out += "rows = " + std::to_string(params.betas.size()) + "\n";
  out += "kernels = " + std::to_string(params.betas.empty() ? 0 : params.betas[0].size()) + "\n";
  out += "iterations =";
  for (int t : params.iterations) out += " " + std::to_string(t);
  out += "\n";
  for (std::size_t r = 0; r < params.betas.size(); ++r) {
    out += "row_" + std::to_string(r + 1) + " =";
    for (double b : params.betas[r]) out += " " + fmt(b);
    out += "\n";
  }
  return out;
}

CrfParams parse_params(const std::string& text) {
  CrfParams params;
  int rows = -1, kernels = -1;
  std::vector<bool> seen_row;
  std::istringstream in(text);
  std::string raw;
  int line = 0;

  auto split_reals = [&](const std::string& value, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (ss >> item) out.push_back(parse_real(item, key, line));
    return out;
  };

  while (std::getline(in, raw)) {
    ++line;
    std::string stripped = trim(raw.substr(0, raw.find('#')));
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) fail_line(line, "expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));

    if (key == "rows") {
      rows = parse_int(value, key, line);
      if (rows < 1) fail_line(line, "rows must be at least 1");
      params.betas.assign(rows, {});
      seen_row.assign(rows, false);
    } else if (key == "kernels") {
      kernels = parse_int(value, key, line);
      if (kernels < 1) fail_line(line, "kernels must be at least 1");
    } else if (key == "iterations") {
      params.iterations.clear();
      std::stringstream ss(value);
      std::string item;
      while (ss >> item) params.iterations.push_back(parse_int(item, key, line));
      if (params.iterations.empty()) fail_line(line, "iterations must list at least one count");
    } else if (key.rfind("row_", 0) == 0) {
      if (rows < 1 || kernels < 1) fail_line(line, "rows and kernels must precede row lines");
      const int r = parse_int(key.substr(4), key, line);
      if (r < 1 || r > rows) fail_line(line, "row index " + std::to_string(r) + " out of range");
      if (seen_row[r - 1]) fail_line(line, "duplicate " + key);
      std::vector<double> betas = split_reals(value, key);
      if (static_cast<int>(betas.size()) != kernels)
        fail_line(line, key + " must list exactly " + std::to_string(kernels) + " weights");
      for (double b : betas)
        if (b < 0.0) fail_line(line, key + " weights must be nonnegative");
      params.betas[r - 1] = std::move(betas);
      seen_row[r - 1] = true;
    } else {
      fail_line(line, "unknown key '" + key + "'");
    }
  }

  if (rows < 1 || kernels < 1 || params.iterations.empty())
    throw std::invalid_argument("parameter file must set rows, kernels, and iterations");
  for (int r = 0; r < rows; ++r)
    if (!seen_row[r])
      throw std::invalid_argument("parameter file is missing row_" + std::to_string(r + 1));
  params.require_valid(kernels);
  return params;
}

}  // namespace crffuse
