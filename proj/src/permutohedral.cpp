#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "crffuse/filter.hpp"

namespace crffuse {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t bytes) {
  std::uint64_t h = 1469598103934665603ull;
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string pack_key(const int* key, int d) {
  return std::string(reinterpret_cast<const char*>(key), sizeof(int) * d);
}

// Blur sweeps per filter. Features are scaled by sqrt(kBlurPasses) so the
// composed blur keeps unit variance; a finer lattice with more passes tracks
// the target Gaussian more closely at the cost of proportionally more blur
// work.
constexpr int kBlurPasses = 2;

// Rings of ghost vertices grown around the splatted set before blurring.
constexpr int kGhostRings = 2;

// Open-addressing map from d-int lattice keys to vertex ids. Ids are stable
// across growth: keys are append-only and rehashing only rebuilds the slots.
class VertexTable {
 public:
  VertexTable(int dim, std::size_t expected) : dim_(dim) {
    std::size_t cap = 16;
    while (cap < expected * 2) cap <<= 1;
    mask_ = cap - 1;
    slots_.assign(cap, -1);
    keys_.reserve(expected * dim);
  }

  int insert(const int* key) {
    if (static_cast<std::size_t>(count_) * 2 >= slots_.size()) grow();
    std::size_t h = fnv1a(key, sizeof(int) * dim_) & mask_;
    while (true) {
      const int s = slots_[h];
      if (s < 0) {
        slots_[h] = count_;
        keys_.insert(keys_.end(), key, key + dim_);
        return count_++;
      }
      if (std::memcmp(keys_.data() + static_cast<std::size_t>(s) * dim_, key,
                      sizeof(int) * dim_) == 0)
        return s;
      h = (h + 1) & mask_;
    }
  }

  int find(const int* key) const {
    std::size_t h = fnv1a(key, sizeof(int) * dim_) & mask_;
    while (true) {
      const int s = slots_[h];
      if (s < 0) return -1;
      if (std::memcmp(keys_.data() + static_cast<std::size_t>(s) * dim_, key,
                      sizeof(int) * dim_) == 0)
        return s;
      h = (h + 1) & mask_;
    }
  }

  int count() const { return count_; }
  const int* key_at(int id) const { return keys_.data() + static_cast<std::size_t>(id) * dim_; }

 private:
  void grow() {
    slots_.assign(slots_.size() * 2, -1);
    mask_ = slots_.size() - 1;
    for (int id = 0; id < count_; ++id) {
      std::size_t h = fnv1a(key_at(id), sizeof(int) * dim_) & mask_;
      while (slots_[h] >= 0) h = (h + 1) & mask_;
      slots_[h] = id;
    }
  }

  int dim_;
  int count_ = 0;
  std::size_t mask_;
  std::vector<int> slots_;
  std::vector<int> keys_;
};

}  // namespace

LatticeCache::LatticeCache(const FeatureSlice& features) {
  if (features.count <= 0 || features.dim <= 0)
    throw std::invalid_argument("lattice requires a non-empty feature slice");
  if (features.data.size() != static_cast<std::size_t>(features.count) * features.dim)
    throw std::invalid_argument("feature slice data does not match its dimensions");

  pixel_count_ = features.count;
  dim_ = features.dim;
  feature_data_ = features.data.data();
  feature_hash_ = fnv1a(features.data.data(), features.data.size() * sizeof(double));

  const int d = dim_;
  const std::size_t n = static_cast<std::size_t>(pixel_count_);
  offsets_.resize((d + 1) * n);
  barycentric_.resize((d + 1) * n);

  // Per-dimension scaling that makes splat + blur + slice approximate a
  // unit-variance Gaussian in the pre-divided feature space.
  std::vector<double> scale(d);
  const double inv_std_dev = std::sqrt(2.0 / 3.0) * (d + 1) * std::sqrt(double(kBlurPasses));
  for (int i = 0; i < d; ++i)
    scale[i] = inv_std_dev / std::sqrt(static_cast<double>(i + 1) * (i + 2));

  // Canonical simplex: vertex for remainder r moves coordinate ranks <= d-r
  // up by r and the rest down by r-(d+1).
  std::vector<int> canonical((d + 1) * (d + 1));
  for (int i = 0; i <= d; ++i) {
    for (int j = 0; j <= d - i; ++j) canonical[i * (d + 1) + j] = i;
    for (int j = d - i + 1; j <= d; ++j) canonical[i * (d + 1) + j] = i - (d + 1);
  }

  // Interior stencil of the composed blur: convolutions commute, so one
  // dictionary convolution per direction gives the exact weight between any
  // two interior vertices as a function of their key displacement.
  std::unordered_map<std::string, double> stencil;
  {
    std::vector<int> zero(d, 0);
    stencil[pack_key(zero.data(), d)] = 1.0;
    std::vector<int> shifted(d);
    for (int pass = 0; pass < kBlurPasses; ++pass) {
      for (int j = 0; j <= d; ++j) {
        std::unordered_map<std::string, double> next;
        for (const auto& [k, w] : stencil) {
          const int* kk = reinterpret_cast<const int*>(k.data());
          next[k] += 0.5 * w;
          for (int sign : {1, -1}) {
            for (int i = 0; i < d; ++i) shifted[i] = kk[i] - sign;
            if (j < d) shifted[j] = kk[j] + sign * d;
            next[pack_key(shifted.data(), d)] += 0.25 * w;
          }
        }
        stencil = std::move(next);
      }
    }
  }

  VertexTable table(d, n * (d + 1));
  std::vector<double> elevated(d + 1);
  std::vector<int> rem0(d + 1), rank(d + 1), key(d);
  std::vector<double> bary(d + 2);
  std::vector<int> all_ranks((d + 1) * n);

  for (int p = 0; p < pixel_count_; ++p) {
    const double* feat = features.data.data() + static_cast<std::size_t>(p) * d;

    // Elevate onto the hyperplane sum(x) = 0 in d+1 dimensions.
    double sm = 0.0;
    for (int j = d; j > 0; --j) {
      double cf = feat[j - 1] * scale[j - 1];
      elevated[j] = sm - j * cf;
      sm += cf;
    }
    elevated[0] = sm;

    // Round to the nearest remainder-0 lattice point.
    int sum = 0;
    for (int i = 0; i <= d; ++i) {
      double v = elevated[i] / (d + 1);
      int up = static_cast<int>(std::ceil(v)) * (d + 1);
      int down = static_cast<int>(std::floor(v)) * (d + 1);
      rem0[i] = (up - elevated[i] < elevated[i] - down) ? up : down;
      sum += rem0[i] / (d + 1);
    }

    // Rank of each coordinate within the simplex ordering.
    std::fill(rank.begin(), rank.end(), 0);
    for (int i = 0; i < d; ++i) {
      double di = elevated[i] - rem0[i];
      for (int j = i + 1; j <= d; ++j) {
        if (di < elevated[j] - rem0[j])
          ++rank[i];
        else
          ++rank[j];
      }
    }

    // If the rounded point left the plane, walk it back.
    for (int i = 0; i <= d; ++i) {
      rank[i] += sum;
      if (rank[i] < 0) {
        rank[i] += d + 1;
        rem0[i] += d + 1;
      } else if (rank[i] > d) {
        rank[i] -= d + 1;
        rem0[i] -= d + 1;
      }
    }

    // Barycentric coordinates inside the enclosing simplex.
    std::fill(bary.begin(), bary.end(), 0.0);
    for (int i = 0; i <= d; ++i) {
      double v = (elevated[i] - rem0[i]) / (d + 1);
      bary[d - rank[i]] += v;
      bary[d - rank[i] + 1] -= v;
    }
    bary[0] += 1.0 + bary[d + 1];

    // Register the d+1 enclosing vertices; keys store d coordinates, the
    // last one is implied by the zero-sum constraint.
    for (int remainder = 0; remainder <= d; ++remainder) {
      for (int i = 0; i < d; ++i) key[i] = rem0[i] + canonical[remainder * (d + 1) + rank[i]];
      offsets_[static_cast<std::size_t>(p) * (d + 1) + remainder] = table.insert(key.data());
      barycentric_[static_cast<std::size_t>(p) * (d + 1) + remainder] = bary[remainder];
    }
    for (int i = 0; i <= d; ++i) all_ranks[static_cast<std::size_t>(p) * (d + 1) + i] = rank[i];
  }

  // Ghost vertices: unoccupied sites within a few blur hops of the splatted
  // set. They carry no splat mass and are never sliced, but letting the blur
  // pass through them keeps mass that leaves the occupied set and returns,
  // which otherwise truncates row masses unevenly across pixels.
  {
    std::vector<int> vk(d), nkey2(d);
    int first = 0;
    for (int ring = 0; ring < kGhostRings; ++ring) {
      const int last = table.count();
      for (int i = first; i < last; ++i) {
        std::copy_n(table.key_at(i), d, vk.begin());
        for (int j = 0; j <= d; ++j) {
          for (int k = 0; k < d; ++k) nkey2[k] = vk[k] - 1;
          if (j < d) nkey2[j] = vk[j] + d;
          table.insert(nkey2.data());
          for (int k = 0; k < d; ++k) nkey2[k] = vk[k] + 1;
          if (j < d) nkey2[j] = vk[j] - d;
          table.insert(nkey2.data());
        }
      }
      first = last;
    }
  }
  vertex_count_ = table.count();

  // Blur adjacency along each of the d+1 lattice directions. Direction j
  // steps by -1 in every stored coordinate except +d in coordinate j; for
  // j = d the stored part is all -1 and the implicit coordinate takes +d.
  blur_n1_.resize(static_cast<std::size_t>(d + 1) * vertex_count_);
  blur_n2_.resize(static_cast<std::size_t>(d + 1) * vertex_count_);
  std::vector<int> nkey(d);
  for (int j = 0; j <= d; ++j) {
    for (int i = 0; i < vertex_count_; ++i) {
      const int* vk = table.key_at(i);
      for (int k = 0; k < d; ++k) nkey[k] = vk[k] - 1;
      if (j < d) nkey[j] = vk[j] + d;
      blur_n1_[static_cast<std::size_t>(j) * vertex_count_ + i] = table.find(nkey.data());
      for (int k = 0; k < d; ++k) nkey[k] = vk[k] + 1;
      if (j < d) nkey[j] = vk[j] - d;
      blur_n2_[static_cast<std::size_t>(j) * vertex_count_ + i] = table.find(nkey.data());
    }
  }

  // Amplitude calibration. The realized kernel has nearly the right shape
  // but its overall mass drifts with occupancy, so match off-diagonal row
  // mass against the target Gaussian on a deterministic sample of rows.
  // Rows are spread over the feature-sorted order, which keeps the gain
  // independent of pixel enumeration; the raw diagonal of a row comes from
  // the interior blur stencil (the displacement between two enclosing
  // vertices depends only on their remainders and the coordinate ranks).
  if (pixel_count_ > 1) {
    std::vector<double> ones(n, 1.0);
    const std::vector<double> row_sums = filter(ones);

    std::vector<int> order(pixel_count_);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double* fa = features.data.data() + static_cast<std::size_t>(a) * d;
      const double* fb = features.data.data() + static_cast<std::size_t>(b) * d;
      return std::lexicographical_compare(fa, fa + d, fb, fb + d);
    });
    const int probes = std::clamp<int>(
        static_cast<int>(600000 / (n * static_cast<std::size_t>(d) + 1)), 8, 96);

    std::vector<int> disp(d);
    double target = 0.0, realized = 0.0;
    for (int t = 0; t < std::min(probes, pixel_count_); ++t) {
      const int i = order[static_cast<std::size_t>(t) * pixel_count_ / probes];
      const double* fi = features.data.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < pixel_count_; ++j) {
        if (j == i) continue;
        const double* fj = features.data.data() + static_cast<std::size_t>(j) * d;
        double q = 0.0;
        for (int k = 0; k < d; ++k) q += (fi[k] - fj[k]) * (fi[k] - fj[k]);
        if (q < 80.0) target += std::exp(-0.5 * q);
      }
      const int* ri = all_ranks.data() + static_cast<std::size_t>(i) * (d + 1);
      const double* bi = barycentric_.data() + static_cast<std::size_t>(i) * (d + 1);
      double diag = 0.0;
      for (int r1 = 0; r1 <= d; ++r1) {
        for (int r2 = 0; r2 <= d; ++r2) {
          for (int k = 0; k < d; ++k)
            disp[k] = canonical[r2 * (d + 1) + ri[k]] - canonical[r1 * (d + 1) + ri[k]];
          auto it = stencil.find(pack_key(disp.data(), d));
          if (it != stencil.end()) diag += bi[r1] * bi[r2] * it->second;
        }
      }
      realized += row_sums[i] - diag;
    }
    if (realized > 1e-12 && target > 0.0) gain_ = target / realized;
  }

  // Impulse probe: the realized K(i, i) at the probe pixel after the gain.
  // exclude_self subtracts this times the pixel's own value.
  std::vector<double> impulse(n, 0.0);
  impulse[0] = 1.0;
  self_response_ = filter(impulse)[0];
}

bool LatticeCache::matches(const FeatureSlice& features) const {
  if (features.count != pixel_count_ || features.dim != dim_) return false;
  if (features.data.data() == feature_data_) return true;
  return fnv1a(features.data.data(), features.data.size() * sizeof(double)) == feature_hash_;
}

std::vector<double> LatticeCache::blurred(const std::vector<double>& base, bool reverse) const {
  const int d = dim_, m = vertex_count_;
  std::vector<double> cur = base, nxt(base.size(), 0.0);
  for (int step = 0; step <= kBlurPasses * (d + 1) - 1; ++step) {
    int j = (reverse ? kBlurPasses * (d + 1) - 1 - step : step) % (d + 1);
    const int* n1 = &blur_n1_[static_cast<std::size_t>(j) * m];
    const int* n2 = &blur_n2_[static_cast<std::size_t>(j) * m];
    for (int i = 0; i < m; ++i)
      nxt[i + 1] = 0.5 * cur[i + 1] + 0.25 * (cur[n1[i] + 1] + cur[n2[i] + 1]);
    nxt[0] = 0.0;
    std::swap(cur, nxt);
  }
  return cur;
}

std::vector<double> LatticeCache::filter(std::span<const double> values) const {
  if (values.size() != static_cast<std::size_t>(pixel_count_))
    throw std::invalid_argument("lattice filter value count does not match the cache");
  const int d = dim_;

  // Splat; slot 0 is a zero guard for missing blur neighbors.
  std::vector<double> base(static_cast<std::size_t>(vertex_count_) + 1, 0.0);
  for (int p = 0; p < pixel_count_; ++p) {
    const double v = values[p];
    for (int k = 0; k <= d; ++k) {
      std::size_t idx = static_cast<std::size_t>(p) * (d + 1) + k;
      base[offsets_[idx] + 1] += barycentric_[idx] * v;
    }
  }

  // Averaging the two direction orders keeps the operator exactly
  // self-adjoint even where the zero guard truncates the blur.
  std::vector<double> fwd = blurred(base, false);
  std::vector<double> rev = blurred(base, true);

  std::vector<double> out(pixel_count_, 0.0);
  for (int p = 0; p < pixel_count_; ++p) {
    double acc = 0.0;
    for (int k = 0; k <= d; ++k) {
      std::size_t idx = static_cast<std::size_t>(p) * (d + 1) + k;
      acc += barycentric_[idx] * (fwd[offsets_[idx] + 1] + rev[offsets_[idx] + 1]);
    }
    out[p] = 0.5 * gain_ * acc;
  }
  return out;
}

LatticeCache build_lattice(const FeatureSlice& features) { return LatticeCache(features); }

std::vector<double> gauss_filter_lattice(const FilterRequest& request,
                                         const LatticeCache& cache) {
  if (request.features == nullptr)
    throw std::invalid_argument("filter request needs a feature slice");
  if (!cache.matches(*request.features))
    throw std::invalid_argument("lattice cache does not match the request features");
  std::vector<double> out = cache.filter(request.values);
  if (request.exclude_self) {
    const double r = cache.self_response();
    for (std::size_t p = 0; p < out.size(); ++p) out[p] -= r * request.values[p];
  }
  return out;
}

}  // namespace crffuse
