#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "crffuse/cli.hpp"
#include "crffuse/config.hpp"
#include "crffuse/eval.hpp"
#include "crffuse/filter.hpp"
#include "crffuse/fusion.hpp"
#include "crffuse/gradcheck.hpp"
#include "crffuse/image_io.hpp"
#include "crffuse/oracle.hpp"
#include "crffuse/rng.hpp"

namespace crffuse::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Config load_config(const std::string& path) {
  if (path.empty()) {
    Config c;
    c.require_valid();
    return c;
  }
  return parse_config(read_file(path));
}

std::uint64_t resolve_seed(std::uint64_t flag_seed) {
  if (const char* env = std::getenv("CRFFUSE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw std::invalid_argument("CRFFUSE_SEED must be an unsigned integer");
    }
  }
  return flag_seed;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void write_manifest(const fs::path& dir, const std::string& command, const Config& config,
                    std::uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double seconds) {
  json m;
  m["command"] = command;
  m["seed"] = seed;
  m["config"] = render_config(config);
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["timings"] = {{"total_seconds", seconds}};
  write_file_atomic((dir / "manifest.json").string(), m.dump(2) + "\n");
}

std::string side_name(int level) { return "side_" + std::to_string(level + 1) + ".pfm"; }

int run_synth(const Config& config, std::uint64_t seed, const std::string& out_flag) {
  Timer timer;
  const fs::path dir = out_flag.empty() ? fs::path(config.out_dir) : fs::path(out_flag);
  fs::create_directories(dir);

  const SynthSpec spec = config.synth_spec(seed);
  const SynthScene scene = synth_scene(spec);
  const SideOutputStack sides = synth_side_outputs(scene.gt, spec);

  std::vector<std::string> outputs = {"scene.ppm", "gt.pfm"};
  write_ppm((dir / "scene.ppm").string(), scene.image);
  write_pfm((dir / "gt.pfm").string(), scene.gt);
  for (int l = 0; l < spec.levels; ++l) {
    write_pfm((dir / side_name(l)).string(), sides.scales[l]);
    outputs.push_back(side_name(l));
  }
  write_manifest(dir, "synth", config, seed, {}, outputs, timer.seconds());
  std::cout << "wrote " << outputs.size() << " files to " << dir.string() << "\n";
  return 0;
}

int run_fuse(const Config& config, std::uint64_t seed, const std::string& in_dir,
             std::string image_path, std::vector<std::string> side_paths,
             const std::string& params_path, const std::string& out_flag) {
  Timer timer;
  if (!in_dir.empty()) {
    if (image_path.empty()) image_path = (fs::path(in_dir) / "scene.ppm").string();
    if (side_paths.empty())
      for (int l = 0; l < config.scales; ++l)
        side_paths.push_back((fs::path(in_dir) / side_name(l)).string());
  }
  if (image_path.empty() || side_paths.empty())
    throw std::invalid_argument("fuse needs --in or both --image and --side");

  const RgbImage image = read_ppm(image_path);
  SideOutputStack sides;
  for (const std::string& p : side_paths) sides.scales.push_back(read_pfm(p));

  FusionModel model = config.fusion_model();
  if (static_cast<int>(side_paths.size()) != config.scales)
    throw std::invalid_argument("side output count does not match configured scales");
  if (!params_path.empty()) {
    model.params = parse_params(read_file(params_path));
    model.require_valid();
  }

  const FusionResult res = model_forward(sides, image, model, nullptr, false);

  const fs::path dir = out_flag.empty() ? fs::path(config.out_dir) : fs::path(out_flag);
  fs::create_directories(dir);
  write_pfm((dir / "prediction.pfm").string(), res.prediction);

  std::vector<std::string> inputs = {image_path};
  inputs.insert(inputs.end(), side_paths.begin(), side_paths.end());
  if (!params_path.empty()) inputs.push_back(params_path);
  write_manifest(dir, "fuse", config, seed, inputs, {"prediction.pfm"}, timer.seconds());
  std::cout << "wrote " << (dir / "prediction.pfm").string() << "\n";
  return 0;
}

int run_train(const Config& config, std::uint64_t seed, int count, const std::string& out_flag) {
  Timer timer;
  if (count < 1) throw std::invalid_argument("--count must be at least 1");

  Dataset data;
  for (int i = 0; i < count; ++i) {
    SynthSpec spec = config.synth_spec(seed + static_cast<std::uint64_t>(i));
    SynthScene scene = synth_scene(spec);
    Dataset::Sample sample;
    sample.sides = synth_side_outputs(scene.gt, spec);
    sample.image = std::move(scene.image);
    sample.gt = std::move(scene.gt);
    data.samples.push_back(std::move(sample));
  }

  const FusionModel model = config.fusion_model();
  const TrainResult result = train(data, model, config.training, seed);

  const fs::path dir = out_flag.empty() ? fs::path(config.out_dir) : fs::path(out_flag);
  fs::create_directories(dir);
  write_file_atomic((dir / "params.txt").string(), render_params(result.params));

  std::string csv = "step,epoch,loss\n";
  for (const LossRecord& rec : result.history)
    csv += std::to_string(rec.step) + "," + std::to_string(rec.epoch) + "," + fmt(rec.loss) + "\n";
  write_file_atomic((dir / "loss.csv").string(), csv);

  write_manifest(dir, "train", config, seed, {}, {"params.txt", "loss.csv"}, timer.seconds());
  const double last = result.history.empty() ? 0.0 : result.history.back().loss;
  std::cout << "trained " << result.history.size() << " steps, final batch loss " << fmt(last)
            << "\n";
  return 0;
}

int run_eval(const Config& config, std::uint64_t seed, const std::vector<std::string>& preds,
             const std::vector<std::string>& gts, const std::string& out_flag) {
  Timer timer;
  if (preds.empty() || preds.size() != gts.size())
    throw std::invalid_argument("eval needs matching --pred and --gt lists");

  std::string csv = metrics_csv_header() + "\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const DepthMap pred = read_pfm(preds[i]);
    const DepthMap gt = read_pfm(gts[i]);
    const MetricsReport r = compute_metrics(pred, gt, config.min_valid_depth);
    csv += metrics_csv_row(fs::path(preds[i]).filename().string(), r) + "\n";
  }

  const fs::path dir = out_flag.empty() ? fs::path(config.out_dir) : fs::path(out_flag);
  fs::create_directories(dir);
  write_file_atomic((dir / "metrics.csv").string(), csv);

  std::vector<std::string> inputs = preds;
  inputs.insert(inputs.end(), gts.begin(), gts.end());
  write_manifest(dir, "eval", config, seed, inputs, {"metrics.csv"}, timer.seconds());
  std::cout << csv;
  return 0;
}

int run_gradcheck_cmd(std::uint64_t seed, int cases, double tolerance) {
  constexpr ModelKind kModels[] = {ModelKind::kUnified, ModelKind::kCascade};
  constexpr StructureKind kStructures[] = {StructureKind::kBottomUp, StructureKind::kTopDown,
                                           StructureKind::kSkip, StructureKind::kAllToOne};
  double worst = 0.0;
  std::string worst_label;
  for (int i = 0; i < cases; ++i) {
    GradCheckCase c;
    c.model = kModels[i % 2];
    c.structure = kStructures[(i / 2) % 4];
    c.seed = seed + static_cast<std::uint64_t>(i);
    const GradCheckReport r = run_gradcheck(c);
    if (r.worst_rel_error > worst) {
      worst = r.worst_rel_error;
      worst_label = "case " + std::to_string(i) + " " + r.worst_label;
    }
  }
  std::cout << "worst relative error " << fmt(worst) << " (" << worst_label << ")\n";
  return worst <= tolerance ? 0 : 1;
}

int run_bench(const Config& config, std::uint64_t seed, const std::string& sizes_flag,
              const std::string& out_flag) {
  Timer timer;
  std::vector<int> sizes;
  std::stringstream ss(sizes_flag);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const int v = std::stoi(item);
    if (v < 1) throw std::invalid_argument("sizes must be positive");
    sizes.push_back(v);
  }
  if (sizes.empty()) throw std::invalid_argument("--sizes must list at least one size");

  Rng rng(seed);
  std::string csv = "size,backend,seconds,rel_error\n";
  for (int size : sizes) {
    const std::size_t n = static_cast<std::size_t>(size) * size;
    RgbImage image;
    image.width = size;
    image.height = size;
    image.r.resize(n);
    image.g.resize(n);
    image.b.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      image.r[i] = rng.uniform();
      image.g[i] = rng.uniform();
      image.b[i] = rng.uniform();
    }
    std::vector<double> values(n);
    for (double& v : values) v = rng.uniform();

    const KernelDesc desc =
        KernelDesc::bilateral(KernelRole::kIntraScale, config.theta_pos, config.theta_col);
    KernelSpec spec;
    spec.kernels = {desc};
    const FeatureStack features = extract_features(image, spec);

    Timer exact_timer;
    const std::vector<double> exact =
        gauss_filter_exact({values, &features.slices[0], true});
    const double exact_seconds = exact_timer.seconds();

    Timer build_timer;
    const LatticeCache cache(features.slices[0]);
    const std::vector<double> approx = gauss_filter_lattice({values, &features.slices[0], true},
                                                            cache);
    const double lattice_seconds = build_timer.seconds();

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += (approx[i] - exact[i]) * (approx[i] - exact[i]);
      den += exact[i] * exact[i];
    }
    const double rel = den > 0.0 ? std::sqrt(num / den) : 0.0;

    csv += std::to_string(size) + ",exact," + fmt(exact_seconds) + ",0\n";
    csv += std::to_string(size) + ",lattice," + fmt(lattice_seconds) + "," + fmt(rel) + "\n";
  }

  const fs::path dir = out_flag.empty() ? fs::path(config.out_dir) : fs::path(out_flag);
  fs::create_directories(dir);
  write_file_atomic((dir / "bench.csv").string(), csv);
  write_manifest(dir, "bench-filter", config, seed, {}, {"bench.csv"}, timer.seconds());
  std::cout << csv;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"multi-scale depth fusion via continuous mean-field refinement"};
  app.require_subcommand(1);

  std::string config_path, out_flag, in_dir, image_path, params_path, sizes_flag = "32,64,128";
  std::vector<std::string> side_paths, pred_paths, gt_paths;
  std::uint64_t seed = 0;
  int count = 20, cases = 20;
  double tolerance = 1e-4;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene and side outputs");
  synth->add_option("--config", config_path, "config file");
  synth->add_option("--seed", seed, "random seed");
  synth->add_option("--out", out_flag, "output directory (overrides config out_dir)");

  CLI::App* fuse = app.add_subcommand("fuse", "fuse side outputs into one depth map");
  fuse->add_option("--config", config_path, "config file");
  fuse->add_option("--seed", seed, "random seed (recorded in the manifest)");
  fuse->add_option("--in", in_dir, "directory holding scene.ppm and side_*.pfm");
  fuse->add_option("--image", image_path, "input image (PPM)");
  fuse->add_option("--side", side_paths, "side output PFM, coarsest first (repeatable)");
  fuse->add_option("--params", params_path, "trained parameter file");
  fuse->add_option("--out", out_flag, "output directory");

  CLI::App* train_cmd = app.add_subcommand("train", "train kernel weights on synthetic scenes");
  train_cmd->add_option("--config", config_path, "config file");
  train_cmd->add_option("--seed", seed, "random seed");
  train_cmd->add_option("--count", count, "number of training scenes");
  train_cmd->add_option("--out", out_flag, "output directory");

  CLI::App* eval_cmd = app.add_subcommand("eval", "compute depth metrics for pred/gt pairs");
  eval_cmd->add_option("--config", config_path, "config file");
  eval_cmd->add_option("--pred", pred_paths, "prediction PFM (repeatable)");
  eval_cmd->add_option("--gt", gt_paths, "ground-truth PFM (repeatable)");
  eval_cmd->add_option("--out", out_flag, "output directory");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gc->add_option("--seed", seed, "random seed");
  gc->add_option("--cases", cases, "number of randomized cases");
  gc->add_option("--tolerance", tolerance, "worst relative error allowed");

  CLI::App* bench = app.add_subcommand("bench-filter", "time exact vs lattice filtering");
  bench->add_option("--config", config_path, "config file");
  bench->add_option("--seed", seed, "random seed");
  bench->add_option("--sizes", sizes_flag, "comma-separated square sizes");
  bench->add_option("--out", out_flag, "output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const Config config = load_config(config_path);
    const std::uint64_t run_seed = resolve_seed(seed);
    if (synth->parsed()) return run_synth(config, run_seed, out_flag);
    if (fuse->parsed())
      return run_fuse(config, run_seed, in_dir, image_path, side_paths, params_path, out_flag);
    if (train_cmd->parsed()) return run_train(config, run_seed, count, out_flag);
    if (eval_cmd->parsed()) return run_eval(config, run_seed, pred_paths, gt_paths, out_flag);
    if (gc->parsed()) return run_gradcheck_cmd(resolve_seed(seed), cases, tolerance);
    if (bench->parsed()) return run_bench(config, run_seed, sizes_flag, out_flag);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}

}  // namespace crffuse::cli
