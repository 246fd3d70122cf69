#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "crffuse/config.hpp"
#include "crffuse/image_io.hpp"
#include "crffuse/rng.hpp"
#include "crffuse/types.hpp"

using namespace crffuse;
namespace fs = std::filesystem;

#ifndef CRFFUSE_BIN
#error "CRFFUSE_BIN must point at the crffuse binary"
#endif

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CRFFUSE_BIN) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("cli_scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string small_config(const fs::path& dir) {
  const fs::path path = dir / "config.txt";
  write_file_atomic(path.string(),
                    "model = unified\nscales = 3\n[synth]\nwidth = 24\nheight = 24\n");
  return path.string();
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  return read_file(a.string()) == read_file(b.string());
}

}  // namespace

TEST_CASE("pfm files round-trip at float precision") {
  const fs::path dir = fresh_dir("pfm");
  DepthMap m(3, 2);
  m.values = {0.0, 1.5, 2.25, 1.0 / 3.0, 1e-4, 123456.75};

  const fs::path path = dir / "map.pfm";
  write_pfm(path.string(), m);
  const DepthMap back = read_pfm(path.string());

  REQUIRE(back.width == 3);
  REQUIRE(back.height == 2);
  for (int i = 0; i < m.size(); ++i)
    CHECK(back.values[i] == static_cast<double>(static_cast<float>(m.values[i])));

  // Values already representable as float32 survive a second trip unchanged.
  const fs::path again = dir / "map2.pfm";
  write_pfm(again.string(), back);
  CHECK(read_pfm(again.string()).values == back.values);
  CHECK(same_bytes(path, again));
}

TEST_CASE("ppm files round-trip at 8-bit precision") {
  const fs::path dir = fresh_dir("ppm");
  RgbImage img(4, 3);
  Rng rng(7);
  for (int i = 0; i < img.size(); ++i) {
    // Exact 8-bit lattice values pass through unchanged.
    img.r[i] = static_cast<double>(rng.bounded(256)) / 255.0;
    img.g[i] = static_cast<double>(rng.bounded(256)) / 255.0;
    img.b[i] = static_cast<double>(rng.bounded(256)) / 255.0;
  }

  const fs::path path = dir / "img.ppm";
  write_ppm(path.string(), img);
  const RgbImage back = read_ppm(path.string());
  CHECK(back.width == 4);
  CHECK(back.height == 3);
  CHECK(back.r == img.r);
  CHECK(back.g == img.g);
  CHECK(back.b == img.b);
}

TEST_CASE("malformed inputs report the offending file") {
  const fs::path dir = fresh_dir("bad");
  const fs::path path = dir / "broken.pfm";
  write_file_atomic(path.string(), "not a pfm at all");

  try {
    read_pfm(path.string());
    FAIL_CHECK("expected read_pfm to reject garbage");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("broken.pfm") != std::string::npos);
  }

  const fs::path missing = dir / "missing.ppm";
  try {
    read_ppm(missing.string());
    FAIL_CHECK("expected read_ppm to reject a missing file");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("missing.ppm") != std::string::npos);
  }
}

TEST_CASE("synth writes the full scene bundle") {
  const fs::path dir = fresh_dir("synth");
  const std::string config = small_config(dir);
  REQUIRE(run_cli("synth --config " + config + " --seed 11 --out " + (dir / "out").string()) == 0);

  for (const char* name : {"scene.ppm", "gt.pfm", "side_1.pfm", "side_2.pfm", "side_3.pfm",
                           "manifest.json"})
    CHECK(fs::exists(dir / "out" / name));

  const DepthMap gt = read_pfm((dir / "out" / "gt.pfm").string());
  CHECK(gt.width == 24);
  CHECK(gt.height == 24);
}

TEST_CASE("fuse with zero couplings forwards the finest side output") {
  const fs::path dir = fresh_dir("fuse_zero");
  const std::string config = small_config(dir);
  const fs::path scene = dir / "scene";
  REQUIRE(run_cli("synth --config " + config + " --seed 12 --out " + scene.string()) == 0);

  CrfParams zeros;
  zeros.betas = {{0.0, 0.0, 0.0, 0.0}};
  zeros.iterations = {5};
  const fs::path params = dir / "zeros.txt";
  write_file_atomic(params.string(), render_params(zeros));

  const fs::path fused = dir / "fused";
  REQUIRE(run_cli("fuse --config " + config + " --in " + scene.string() + " --params " +
                  params.string() + " --out " + fused.string()) == 0);

  CHECK(same_bytes(fused / "prediction.pfm", scene / "side_3.pfm"));
}

TEST_CASE("eval scores a perfect prediction as zeros and ones") {
  const fs::path dir = fresh_dir("eval");
  const std::string config = small_config(dir);
  const fs::path scene = dir / "scene";
  REQUIRE(run_cli("synth --config " + config + " --seed 13 --out " + scene.string()) == 0);

  const fs::path out = dir / "metrics";
  const fs::path gt = scene / "gt.pfm";
  REQUIRE(run_cli("eval --config " + config + " --pred " + gt.string() + " --gt " + gt.string() +
                  " --out " + out.string()) == 0);

  std::ifstream csv(out / "metrics.csv");
  std::string header, row;
  REQUIRE(std::getline(csv, header));
  REQUIRE(std::getline(csv, row));
  CHECK(header == "label,pixels,rel,rms,log10,rms_sc_inv,delta1,delta2,delta3");
  CHECK(row == "gt.pfm,576,0,0,0,0,1,1,1");
}

TEST_CASE("gradcheck passes on randomized instances") {
  CHECK(run_cli("gradcheck --seed 17 --cases 4") == 0);
}

TEST_CASE("the seed environment variable overrides the flag") {
  const fs::path dir = fresh_dir("envseed");
  const std::string config = small_config(dir);

  REQUIRE(run_cli("synth --config " + config + " --seed 21 --out " + (dir / "a").string()) == 0);
  const std::string env_cmd = "CRFFUSE_SEED=21 " + std::string(CRFFUSE_BIN) + " synth --config " +
                              config + " --seed 1 --out " + (dir / "b").string() +
                              " > /dev/null 2>&1";
  REQUIRE(std::system(env_cmd.c_str()) == 0);

  CHECK(same_bytes(dir / "a" / "gt.pfm", dir / "b" / "gt.pfm"));
  CHECK(same_bytes(dir / "a" / "scene.ppm", dir / "b" / "scene.ppm"));
  CHECK(same_bytes(dir / "a" / "side_1.pfm", dir / "b" / "side_1.pfm"));
}

TEST_CASE("the pipeline reruns byte-identically") {
  const fs::path dir = fresh_dir("rerun");
  const std::string config = small_config(dir);

  auto pipeline = [&](const std::string& tag) {
    const fs::path scene = dir / ("scene_" + tag);
    const fs::path fused = dir / ("fused_" + tag);
    const fs::path metrics = dir / ("metrics_" + tag);
    REQUIRE(run_cli("synth --config " + config + " --seed 31 --out " + scene.string()) == 0);
    REQUIRE(run_cli("fuse --config " + config + " --in " + scene.string() + " --out " +
                    fused.string()) == 0);
    REQUIRE(run_cli("eval --config " + config + " --pred " +
                    (fused / "prediction.pfm").string() + " --gt " + (scene / "gt.pfm").string() +
                    " --out " + metrics.string()) == 0);
  };

  pipeline("a");
  pipeline("b");

  for (const char* name : {"gt.pfm", "scene.ppm", "side_1.pfm", "side_2.pfm", "side_3.pfm"})
    CHECK(same_bytes(dir / "scene_a" / name, dir / "scene_b" / name));
  CHECK(same_bytes(dir / "fused_a" / "prediction.pfm", dir / "fused_b" / "prediction.pfm"));
  CHECK(same_bytes(dir / "metrics_a" / "metrics.csv", dir / "metrics_b" / "metrics.csv"));
}

TEST_CASE("unknown subcommands and missing files exit nonzero") {
  CHECK(run_cli("conjure") != 0);
  CHECK(run_cli("fuse --image nowhere.ppm --side nowhere.pfm") != 0);
  CHECK(run_cli("eval --pred a.pfm") != 0);
}
