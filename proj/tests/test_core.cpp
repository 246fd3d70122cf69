#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <stdexcept>
#include <string>

#include "crffuse/config.hpp"
#include "crffuse/types.hpp"

using namespace crffuse;

namespace {

void expect_config_error(const std::string& text, const std::string& needle) {
  try {
    parse_config(text);
    FAIL_CHECK("expected parse_config to reject: " << text);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find(needle) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("depth map validation") {
  DepthMap m(2, 2, 1.0);
  m.require_valid();
  m.require_valid(true);

  m.at(1, 0) = -0.5;
  m.require_valid();
  CHECK_THROWS_AS(m.require_valid(true), std::invalid_argument);

  m.at(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(m.require_valid(), std::invalid_argument);

  DepthMap mismatched(3, 3);
  mismatched.values.pop_back();
  CHECK_THROWS_AS(mismatched.require_valid(), std::invalid_argument);
}

TEST_CASE("image validation") {
  RgbImage img(2, 1, 0.5);
  img.require_valid();

  img.g[1] = 1.5;
  CHECK_THROWS_AS(img.require_valid(), std::invalid_argument);

  img.g[1] = -0.01;
  CHECK_THROWS_AS(img.require_valid(), std::invalid_argument);
}

TEST_CASE("side output stack flattening is scale-major, coarsest first") {
  SideOutputStack stack;
  stack.scales.push_back(DepthMap(2, 1, 1.0));
  stack.scales.push_back(DepthMap(2, 1, 2.0));
  stack.require_valid();
  CHECK(stack.levels() == 2);
  CHECK(stack.flattened() == std::vector<double>{1.0, 1.0, 2.0, 2.0});

  stack.scales.push_back(DepthMap(3, 1, 3.0));
  CHECK_THROWS_AS(stack.require_valid(), std::invalid_argument);
}

TEST_CASE("single black pixel maps to the origin feature") {
  RgbImage img(1, 1, 0.0);
  KernelSpec spec;
  spec.kernels = {KernelDesc::spatial(KernelRole::kIntraScale, 1.0)};

  const FeatureStack features = extract_features(img, spec);
  REQUIRE(features.slices.size() == 1);
  const FeatureSlice& slice = features.slices[0];
  CHECK(slice.dim == 2);
  CHECK(slice.count == 1);
  CHECK(slice.data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("spatial features divide pixel positions by the bandwidth") {
  RgbImage img(2, 1, 0.0);
  KernelSpec spec;
  spec.kernels = {KernelDesc::spatial(KernelRole::kIntraScale, 2.0)};

  const FeatureStack features = extract_features(img, spec);
  CHECK(features.slices[0].data == std::vector<double>{0.0, 0.0, 0.5, 0.0});
}

TEST_CASE("bilateral features carry scaled color channels") {
  RgbImage img(3, 2, 0.5);
  KernelSpec spec;
  spec.kernels = {KernelDesc::bilateral(KernelRole::kIntraScale, 8.0, 0.25)};

  const FeatureStack features = extract_features(img, spec);
  const FeatureSlice& slice = features.slices[0];
  CHECK(slice.dim == 5);
  CHECK(slice.count == img.size());
  for (int p = 0; p < slice.count; ++p) {
    const auto f = slice.at(p);
    CHECK(f[2] == 0.5 / 0.25);
    CHECK(f[3] == 0.5 / 0.25);
    CHECK(f[4] == 0.5 / 0.25);
  }
}

TEST_CASE("halving a bandwidth doubles the feature coordinates") {
  RgbImage img(4, 3);
  for (int i = 0; i < img.size(); ++i) {
    img.r[i] = (i % 7) / 7.0;
    img.g[i] = (i % 5) / 5.0;
    img.b[i] = (i % 3) / 3.0;
  }

  KernelSpec wide, narrow;
  wide.kernels = {KernelDesc::bilateral(KernelRole::kIntraScale, 8.0, 0.25)};
  narrow.kernels = {KernelDesc::bilateral(KernelRole::kIntraScale, 4.0, 0.125)};

  const FeatureStack fa = extract_features(img, wide);
  const FeatureStack fb = extract_features(img, narrow);
  const FeatureSlice& a = fa.slices[0];
  const FeatureSlice& b = fb.slices[0];
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(b.data[i] == 2.0 * a.data[i]);
}

TEST_CASE("feature extraction preserves pixel count per kernel") {
  RgbImage img(5, 4, 0.3);
  const KernelSpec spec = KernelSpec::unified(8.0, 0.25, 6.0, 0.5);
  const FeatureStack features = extract_features(img, spec);
  REQUIRE(features.slices.size() == 4);
  for (const FeatureSlice& slice : features.slices) {
    CHECK(slice.count == img.size());
    CHECK(slice.data.size() == static_cast<std::size_t>(slice.count) * slice.dim);
  }
}

TEST_CASE("minimal config parses to defaults") {
  const Config c = parse_config("model = unified\n");
  CHECK(c.model == ModelKind::kUnified);
  CHECK(c.structure == StructureKind::kBottomUp);
  CHECK(c.backend == FilterBackendKind::kLattice);
  CHECK(c.scales == 3);
  CHECK(c.theta_pos == 8.0);
  CHECK(c.theta_col == 0.25);
  CHECK(c.beta_init == 0.003);
  CHECK(c.out_dir == "out");

  CHECK(parse_config("model = cascade\n").model == ModelKind::kCascade);
}

TEST_CASE("config rejections name the offending key or line") {
  expect_config_error("", "missing required key: model");
  expect_config_error("structure = bottom_up\n", "missing required key: model");
  expect_config_error("model = unified\n[kernels]\ntheta_pos = -1\n", "theta_pos");
  expect_config_error("model = unified\n[kernels]\ntheta_pos = -1\n", "line 3");
  expect_config_error("model = unified\nbogus = 3\n", "line 2: unknown key 'bogus'");
  expect_config_error("model = unified\n[mystery]\n", "unknown section [mystery]");
  expect_config_error("model unified\n", "line 1: expected 'key = value'");
  expect_config_error("model = sideways\n", "model must be 'unified' or 'cascade'");
  expect_config_error("model = unified\nscales = 0\n", "scales");
  expect_config_error("model = unified\n[training]\nepochs = x\n", "epochs");
}

TEST_CASE("comments and blank lines are ignored") {
  const Config c = parse_config("# header\n\nmodel = cascade  # trailing\n\n[kernels]\n"
                                "theta_pos = 4 # note\n");
  CHECK(c.model == ModelKind::kCascade);
  CHECK(c.theta_pos == 4.0);
}

TEST_CASE("config render/parse round-trips") {
  Config c;
  c.model = ModelKind::kCascade;
  c.structure = StructureKind::kTopDown;
  c.backend = FilterBackendKind::kExact;
  c.scales = 5;
  c.iterations = 9;
  c.theta_pos = 3.75;
  c.theta_col = 0.1;
  c.cross_theta_pos = 12.0;
  c.cross_theta_col = 0.3;
  c.beta_init = 0.05;
  c.training.learning_rate = 2e-4;
  c.training.momentum = 0.8;
  c.training.weight_decay = 1e-3;
  c.training.epochs = 3;
  c.training.batch_size = 2;
  c.training.max_steps = 17;
  c.synth_width = 48;
  c.synth_height = 40;
  c.box_count = 2;
  c.depth_min = 0.5;
  c.depth_max = 7.5;
  c.blur_max = 2.0;
  c.blur_min = 0.0;
  c.noise_max = 0.2;
  c.noise_min = 0.0;
  c.out_dir = "runs/exp1";
  c.min_valid_depth = 1e-2;

  CHECK(parse_config(render_config(c)) == c);

  Config custom;
  custom.model = ModelKind::kUnified;
  custom.structure = StructureKind::kCustom;
  custom.scales = 3;
  custom.custom_edges = {{0, 2}, {1, 2}};
  CHECK(parse_config(render_config(custom)) == custom);

  const Config defaults = parse_config("model = unified\n");
  CHECK(parse_config(render_config(defaults)) == defaults);
}

TEST_CASE("custom structure edges use 1-based scales in text form") {
  const Config c = parse_config("model = unified\nstructure = custom\nscales = 3\n"
                                "edges = 1>3,2>3\n");
  REQUIRE(c.custom_edges.size() == 2);
  CHECK(c.custom_edges[0] == std::pair<int, int>{0, 2});
  CHECK(c.custom_edges[1] == std::pair<int, int>{1, 2});
}

TEST_CASE("parameter files round-trip exactly") {
  CrfParams shared;
  shared.betas = {{0.1, 0.2, 1.0 / 3.0, 0.4}};
  shared.iterations = {5};

  CrfParams parsed = parse_params(render_params(shared));
  CHECK(parsed.betas == shared.betas);
  CHECK(parsed.iterations == shared.iterations);

  CrfParams per_scale;
  per_scale.betas = {{0.1 + 0.2, 0.0}, {1e-9, 2.5}, {0.7, 0.9}};
  per_scale.iterations = {3, 4, 5};

  parsed = parse_params(render_params(per_scale));
  CHECK(parsed.betas == per_scale.betas);
  CHECK(parsed.iterations == per_scale.iterations);
}

TEST_CASE("parameter file rejects truncated input") {
  CrfParams p;
  p.betas = {{0.1, 0.2}, {0.3, 0.4}};
  p.iterations = {5};
  std::string text = render_params(p);
  text = text.substr(0, text.rfind("row_2"));
  CHECK_THROWS_AS(parse_params(text), std::invalid_argument);
}

TEST_CASE("crf params validate shapes and ranges") {
  CrfParams p;
  p.betas = {{0.1, 0.2}};
  p.iterations = {5};
  p.require_valid(2);
  CHECK_THROWS_AS(p.require_valid(3), std::invalid_argument);

  p.betas = {{0.1, -0.2}};
  CHECK_THROWS_AS(p.require_valid(2), std::invalid_argument);

  p.betas = {{0.1, 0.2}};
  p.iterations = {0};
  CHECK_THROWS_AS(p.require_valid(2), std::invalid_argument);
}

TEST_CASE("params select the shared or per-scale row") {
  CrfParams shared;
  shared.betas = {{0.5, 0.6}};
  shared.iterations = {7};
  CHECK(shared.betas_for(2)[0] == 0.5);
  CHECK(shared.iterations_for(2) == 7);

  CrfParams per_scale;
  per_scale.betas = {{0.1, 0.2}, {0.3, 0.4}};
  per_scale.iterations = {2, 9};
  CHECK(per_scale.betas_for(1)[1] == 0.4);
  CHECK(per_scale.iterations_for(1) == 9);
}

TEST_CASE("config assembles the model pieces consistently") {
  Config c = parse_config("model = cascade\nscales = 4\niterations = 6\n");
  const FusionModel m = c.fusion_model();
  CHECK(m.kind == ModelKind::kCascade);
  CHECK(m.structure.levels == 4);
  CHECK(m.kernels.count() == 2);
  CHECK(m.params.betas.size() == 4);
  CHECK(m.params.iterations_for(3) == 6);
  m.require_valid();

  Config u = parse_config("model = unified\n");
  const FusionModel mu = u.fusion_model();
  CHECK(mu.kernels.count() == 4);
  CHECK(mu.params.betas.size() == 1);
  mu.require_valid();
}
