#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "crffuse/eval.hpp"
#include "crffuse/rng.hpp"

namespace crffuse {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

MetricsReport compute_metrics(const DepthMap& prediction, const DepthMap& gt,
                              double min_valid_depth) {
  prediction.require_valid(false);
  gt.require_valid(false);
  require(prediction.width == gt.width && prediction.height == gt.height,
          "metrics inputs must share dimensions");

  MetricsReport r;
  double sum_rel = 0.0, sum_sq = 0.0, sum_log10 = 0.0;
  double sum_z = 0.0, sum_z2 = 0.0;
  long d1 = 0, d2 = 0, d3 = 0;
  const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;

  for (int i = 0; i < gt.size(); ++i) {
    const double g = gt.values[i];
    if (g < min_valid_depth) continue;
    const double p = prediction.values[i];
    if (!(g > 0.0) || !(p > 0.0))
      throw std::invalid_argument("metrics require strictly positive depths inside the mask");
    ++r.pixels;
    sum_rel += std::abs(g - p) / p;
    sum_sq += (g - p) * (g - p);
    sum_log10 += std::abs(std::log10(g) - std::log10(p));
    const double z = std::log(g) - std::log(p);
    sum_z += z;
    sum_z2 += z * z;
    const double ratio = std::max(g / p, p / g);
    if (ratio < t1) ++d1;
    if (ratio < t2) ++d2;
    if (ratio < t3) ++d3;
  }
  if (r.pixels == 0) throw std::invalid_argument("no pixels pass the validity mask");

  const double inv = 1.0 / static_cast<double>(r.pixels);
  r.rel = sum_rel * inv;
  r.rms = std::sqrt(sum_sq * inv);
  r.log10 = sum_log10 * inv;
  const double mean_z = sum_z * inv;
  r.rms_sc_inv = std::sqrt(std::max(0.0, sum_z2 * inv - mean_z * mean_z));
  r.delta1 = d1 * inv;
  r.delta2 = d2 * inv;
  r.delta3 = d3 * inv;
  return r;
}

std::string metrics_csv_header() {
  return "label,pixels,rel,rms,log10,rms_sc_inv,delta1,delta2,delta3";
}

std::string metrics_csv_row(const std::string& label, const MetricsReport& r) {
  std::string row = label;
  row += "," + std::to_string(r.pixels);
  for (double v : {r.rel, r.rms, r.log10, r.rms_sc_inv, r.delta1, r.delta2, r.delta3})
    row += "," + format_double(v);
  return row;
}

double SynthSpec::blur_sigma(int level) const {
  if (levels == 1) return blur_min;
  const double t = static_cast<double>(level) / (levels - 1);
  return blur_max + (blur_min - blur_max) * t;
}

double SynthSpec::noise_std(int level) const {
  if (levels == 1) return noise_min;
  const double t = static_cast<double>(level) / (levels - 1);
  return noise_max + (noise_min - noise_max) * t;
}

void SynthSpec::require_valid() const {
  require(width >= 1 && height >= 1, "scene dimensions must be positive");
  require(levels >= 1, "scene needs at least one scale");
  require(box_count >= 0, "box count must be nonnegative");
  require(depth_min > 0.0 && depth_max >= depth_min, "depth range must be positive and ordered");
  require(blur_min >= 0.0 && blur_max >= blur_min, "blur range must be nonnegative and ordered");
  require(noise_min >= 0.0 && noise_max >= noise_min,
          "noise range must be nonnegative and ordered");
}

SynthScene synth_scene(const SynthSpec& spec) {
  spec.require_valid();
  Rng rng(spec.seed);
  const int w = spec.width, h = spec.height;

  SynthScene scene;
  scene.gt = DepthMap(w, h);
  scene.image.width = w;
  scene.image.height = h;
  scene.image.r.resize(static_cast<std::size_t>(w) * h);
  scene.image.g.resize(static_cast<std::size_t>(w) * h);
  scene.image.b.resize(static_cast<std::size_t>(w) * h);

  // Albedo per surface; the rendered color is albedo times a depth shade
  // (nearer is brighter), so the image carries the cue that guided
  // refinement exploits while albedo steps keep object boundaries visible.
  std::vector<double> albedo_r(scene.gt.values.size());
  std::vector<double> albedo_g(scene.gt.values.size());
  std::vector<double> albedo_b(scene.gt.values.size());

  const double floor_r = rng.uniform(0.25, 0.9);
  const double floor_g = rng.uniform(0.25, 0.9);
  const double floor_b = rng.uniform(0.25, 0.9);
  for (int y = 0; y < h; ++y) {
    const double d = h == 1 ? spec.depth_min
                            : spec.depth_min + (spec.depth_max - spec.depth_min) *
                                                   (static_cast<double>(y) / (h - 1));
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      scene.gt.values[i] = d;
      albedo_r[i] = floor_r;
      albedo_g[i] = floor_g;
      albedo_b[i] = floor_b;
    }
  }

  for (int k = 0; k < spec.box_count; ++k) {
    const int bw = 3 + static_cast<int>(rng.bounded(std::max(1, w / 3)));
    const int bh = 3 + static_cast<int>(rng.bounded(std::max(1, h / 3)));
    const int x0 = static_cast<int>(rng.bounded(std::max(1, w - bw + 1)));
    const int y0 = static_cast<int>(rng.bounded(std::max(1, h - bh + 1)));
    const double depth = rng.uniform(spec.depth_min, spec.depth_max);
    const double cr = rng.uniform(0.05, 0.95);
    const double cg = rng.uniform(0.05, 0.95);
    const double cb = rng.uniform(0.05, 0.95);
    for (int y = y0; y < std::min(h, y0 + bh); ++y) {
      for (int x = x0; x < std::min(w, x0 + bw); ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (depth < scene.gt.values[i]) {  // boxes occlude what is behind them
          scene.gt.values[i] = depth;
          albedo_r[i] = cr;
          albedo_g[i] = cg;
          albedo_b[i] = cb;
        }
      }
    }
  }

  const double span = std::max(spec.depth_max - spec.depth_min, 1e-12);
  for (std::size_t i = 0; i < scene.gt.values.size(); ++i) {
    const double shade =
        0.55 + 0.45 * (spec.depth_max - scene.gt.values[i]) / span;
    scene.image.r[i] = albedo_r[i] * shade;
    scene.image.g[i] = albedo_g[i] * shade;
    scene.image.b[i] = albedo_b[i] * shade;
  }
  return scene;
}

DepthMap gaussian_blur(const DepthMap& input, double sigma) {
  if (sigma <= 0.0) return input;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> weights(radius + 1);
  for (int k = 0; k <= radius; ++k) weights[k] = std::exp(-0.5 * (k * k) / (sigma * sigma));

  const int w = input.width, h = input.height;
  DepthMap horizontal(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0, wsum = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int xx = x + k;
        if (xx < 0 || xx >= w) continue;
        const double wk = weights[std::abs(k)];
        acc += wk * input.at(xx, y);
        wsum += wk;
      }
      horizontal.values[static_cast<std::size_t>(y) * w + x] = acc / wsum;
    }
  }
  DepthMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0, wsum = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int yy = y + k;
        if (yy < 0 || yy >= h) continue;
        const double wk = weights[std::abs(k)];
        acc += wk * horizontal.at(x, yy);
        wsum += wk;
      }
      out.values[static_cast<std::size_t>(y) * w + x] = acc / wsum;
    }
  }
  return out;
}

SideOutputStack synth_side_outputs(const DepthMap& gt, const SynthSpec& spec) {
  spec.require_valid();
  gt.require_valid(true);
  require(gt.width == spec.width && gt.height == spec.height, "depth map does not match the recipe");

  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  SideOutputStack stack;
  for (int l = 0; l < spec.levels; ++l) {
    DepthMap s = gaussian_blur(gt, spec.blur_sigma(l));
    const double std_dev = spec.noise_std(l);
    for (double& v : s.values) v = std::max(0.0, v + rng.normal(0.0, std_dev));
    stack.scales.push_back(std::move(s));
  }
  return stack;
}

}  // namespace crffuse
