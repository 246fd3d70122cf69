#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "crffuse/oracle.hpp"

namespace crffuse {
namespace oracle {

namespace {

constexpr int kMaxSystemSize = 8192;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

double kernel_value(const FeatureSlice& features, int i, int j) {
  const auto fi = features.at(i);
  const auto fj = features.at(j);
  double d2 = 0.0;
  for (int c = 0; c < features.dim; ++c) {
    double d = fi[c] - fj[c];
    d2 += d * d;
  }
  return std::exp(-0.5 * d2);
}

EnergySystem assemble_scale_system(const FilterBank& bank, std::span<const double> betas,
                                   Gates gates, int cross_degree) {
  const int n = bank.pixel_count();
  require(n <= kMaxSystemSize, "system too large for the dense oracle");
  require(betas.size() == static_cast<std::size_t>(bank.kernel_count()), "beta count mismatch");

  EnergySystem sys;
  sys.n = n;
  sys.matrix.assign(static_cast<std::size_t>(n) * n, 0.0);

  std::vector<double> diag(n, 1.0);
  for (int m = 0; m < bank.kernel_count(); ++m) {
    const KernelDesc& desc = bank.kernel(m);
    const FeatureSlice& features = bank.features(m);
    if (desc.role == KernelRole::kIntraScale) {
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          double k = kernel_value(features, i, j);
          diag[i] += 2.0 * betas[m] * k;
          diag[j] += 2.0 * betas[m] * k;
          double w = -2.0 * betas[m] * k;
          sys.matrix[static_cast<std::size_t>(i) * n + j] += w;
          sys.matrix[static_cast<std::size_t>(j) * n + i] += w;
        }
      }
    } else if (gates.g2 && cross_degree > 0) {
      for (int i = 0; i < n; ++i) {
        double s = 1.0;  // self term included for cross-scale sums
        for (int j = 0; j < n; ++j)
          if (j != i) s += kernel_value(features, i, j);
        diag[i] += 2.0 * cross_degree * betas[m] * s;
      }
    }
  }
  for (int i = 0; i < n; ++i) sys.matrix[static_cast<std::size_t>(i) * n + i] = diag[i];
  return sys;
}

std::vector<double> solve_system(const EnergySystem& system, std::span<const double> rhs) {
  const int n = system.n;
  require(rhs.size() == static_cast<std::size_t>(n), "rhs size mismatch");
  Eigen::Map<const Eigen::MatrixXd> a(system.matrix.data(), n, n);
  Eigen::Map<const Eigen::VectorXd> b(rhs.data(), n);

  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("energy system is not positive definite");
  Eigen::VectorXd x = llt.solve(b);

  double residual = (a * x - b).lpNorm<Eigen::Infinity>();
  double scale = 1.0 + b.lpNorm<Eigen::Infinity>();
  if (!(residual <= 1e-9 * scale))
    throw std::runtime_error("solver residual out of tolerance");
  return std::vector<double>(x.data(), x.data() + n);
}

namespace {

// rhs contribution 2 sum_cross beta_m K'_m p with the self term included.
std::vector<double> cross_rhs(const FilterBank& bank, std::span<const double> betas,
                              std::span<const double> p) {
  const int n = bank.pixel_count();
  std::vector<double> out(n, 0.0);
  for (int m = 0; m < bank.kernel_count(); ++m) {
    if (bank.kernel(m).role != KernelRole::kCrossScale) continue;
    const FeatureSlice& features = bank.features(m);
    for (int i = 0; i < n; ++i) {
      double acc = p[i];
      for (int j = 0; j < n; ++j)
        if (j != i) acc += kernel_value(features, i, j) * p[j];
      out[i] += 2.0 * betas[m] * acc;
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> map_solve_exact(const SideOutputStack& sides,
                                                 const FusionModel& model,
                                                 const FilterBank& bank) {
  model.require_valid();
  sides.require_valid();
  require(sides.levels() == model.structure.levels, "side-output count mismatch");
  require(bank.pixel_count() == sides.pixels(), "filter bank does not match the inputs");

  const std::size_t n = static_cast<std::size_t>(sides.pixels());
  const Gates gates = model.gates();
  const ScaleSchedule sch = compute_schedule(model.structure);

  std::vector<std::vector<double>> mu(model.structure.levels);
  for (int l : sch.order) {
    const std::vector<int>& inc = sch.incoming[l];
    const std::span<const double> betas = model.params.betas_for(l);
    std::vector<double> rhs = sides.scales[l].values;

    int degree = 0;
    if (!inc.empty()) {
      if (model.kind == ModelKind::kUnified) {
        degree = static_cast<int>(inc.size());
        std::vector<double> p(n, 0.0);
        for (int src : inc)
          for (std::size_t i = 0; i < n; ++i) p[i] += mu[src][i];
        std::vector<double> c = cross_rhs(bank, betas, p);
        for (std::size_t i = 0; i < n; ++i) rhs[i] += c[i];
      } else {
        for (int src : inc)
          for (std::size_t i = 0; i < n; ++i) rhs[i] += std::max(0.0, mu[src][i]);
      }
    }
    EnergySystem sys = assemble_scale_system(bank, betas, gates, degree);
    mu[l] = solve_system(sys, rhs);
  }
  return mu;
}

double conditional_scale_energy(const FilterBank& bank, std::span<const double> betas,
                                Gates gates, std::span<const double> x,
                                std::span<const double> unary,
                                const std::vector<std::vector<double>>& sources) {
  const int n = bank.pixel_count();
  require(x.size() == static_cast<std::size_t>(n) && unary.size() == x.size(),
          "assignment size mismatch");

  double e = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = x[i] - unary[i];
    e += d * d;
  }
  for (int m = 0; m < bank.kernel_count(); ++m) {
    const KernelDesc& desc = bank.kernel(m);
    const FeatureSlice& features = bank.features(m);
    if (desc.role == KernelRole::kIntraScale) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          double d = x[i] - x[j];
          acc += 2.0 * kernel_value(features, i, j) * d * d;  // ordered pairs
        }
      }
      e += betas[m] * acc;
    } else if (gates.g2 && !sources.empty()) {
      double acc = 0.0;
      for (const auto& y : sources) {
        require(y.size() == static_cast<std::size_t>(n), "source map size mismatch");
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            double k = i == j ? 1.0 : kernel_value(features, i, j);
            double d = x[i] - y[j];
            acc += k * d * d;
          }
        }
      }
      e += 2.0 * betas[m] * acc;
    }
  }
  return e;
}

double energy(const std::vector<std::vector<double>>& assignment, const SideOutputStack& sides,
              const FusionModel& model, const FilterBank& bank) {
  model.require_valid();
  require(assignment.size() == static_cast<std::size_t>(model.structure.levels),
          "assignment must cover every scale");
  const std::size_t n = static_cast<std::size_t>(sides.pixels());
  const Gates gates = model.gates();
  const ScaleSchedule sch = compute_schedule(model.structure);

  double total = 0.0;
  for (int l = 0; l < model.structure.levels; ++l) {
    const std::vector<int>& inc = sch.incoming[l];
    std::vector<double> unary = sides.scales[l].values;
    std::vector<std::vector<double>> sources;
    if (model.kind == ModelKind::kUnified) {
      for (int src : inc) sources.push_back(assignment[src]);
    } else {
      for (int src : inc)
        for (std::size_t i = 0; i < n; ++i) unary[i] += std::max(0.0, assignment[src][i]);
    }
    total += conditional_scale_energy(bank, model.params.betas_for(l), gates, assignment[l],
                                      unary, sources);
  }
  return total;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h) {
  require(h > 0.0, "step must be positive");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(point.size(), 0.0);
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    double up = f(point);
    point[i] = saved - h;
    double down = f(point);
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace oracle
}  // namespace crffuse
