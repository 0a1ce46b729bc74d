#include "memlora/acquisition.hpp"

#include "memlora/common.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace memlora {

namespace {

// first 16 primes, enough for cube dimension 2L at desk scale
constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double halton(int index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

}  // namespace

bool dominates(const Objectives& a, const Objectives& b) {
  return a[0] >= b[0] && a[1] >= b[1] && (a[0] > b[0] || a[1] > b[1]);
}

ParetoFront pareto_filter(const std::vector<Objectives>& points) {
  if (points.empty()) throw std::invalid_argument("pareto_filter: empty input");
  ParetoFront front;
  front.ref = points[0];
  for (const auto& p : points) {
    front.ref[0] = std::min(front.ref[0], p[0]);
    front.ref[1] = std::min(front.ref[1], p[1]);
  }
  front.ref[0] -= kRefMargin;
  front.ref[1] -= kRefMargin;

  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& q : points)
      if (dominates(q, p)) {
        dominated = true;
        break;
      }
    if (!dominated) front.points.push_back(p);
  }
  std::sort(front.points.begin(), front.points.end());
  front.points.erase(std::unique(front.points.begin(), front.points.end()), front.points.end());
  return front;
}

double hypervolume_2d(const std::vector<Objectives>& front_points, const Objectives& ref) {
  if (front_points.empty()) return 0.0;
  std::vector<Objectives> pts = front_points;
  for (const auto& p : pts)
    if (!(p[0] > ref[0] && p[1] > ref[1]))
      throw std::invalid_argument("hypervolume_2d: front point does not dominate the reference");
  // descending first objective; for a front the second objective then ascends
  std::sort(pts.begin(), pts.end(), [](const Objectives& a, const Objectives& b) { return a[0] > b[0]; });
  double hv = 0.0, prev_y = ref[1];
  for (const auto& p : pts) {
    if (p[1] > prev_y) {
      hv += (p[0] - ref[0]) * (p[1] - prev_y);
      prev_y = p[1];
    }
  }
  return hv;
}

double hypervolume_2d(const ParetoFront& front) { return hypervolume_2d(front.points, front.ref); }

AcquisitionValue ehvi(const GpPosterior& post, const ParetoFront& front, const std::vector<double>& x,
                      int samples, uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("ehvi: samples must be >= 1");
  AcquisitionValue out;
  out.x = x;
  out.sample_count = samples;
  Vector xv = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  Matrix draws = sample(post, xv, samples, seed);
  const double base_hv = hypervolume_2d(front);
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    Objectives p{draws(s, 0), draws(s, 1)};
    if (!(p[0] > front.ref[0] && p[1] > front.ref[1])) continue;  // adds nothing
    std::vector<Objectives> merged = front.points;
    merged.push_back(p);
    ParetoFront f = pareto_filter(merged);
    acc += std::max(0.0, hypervolume_2d(f.points, front.ref) - base_hv);
  }
  out.ehvi = acc / samples;
  return out;
}

SearchPoint propose(const GpPosterior& post, const ParetoFront& front, const SearchSpaceDef& def,
                    const std::vector<std::vector<double>>& front_preimages, int pool_size, int samples,
                    uint64_t seed) {
  if (pool_size < 1) throw std::invalid_argument("propose: pool_size must be >= 1");
  const int D = def.dim();
  if (D > static_cast<int>(std::size(kPrimes)))
    throw std::invalid_argument("propose: cube dimension exceeds the Halton base table");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> shift(static_cast<size_t>(D));
  for (auto& s : shift) s = u(rng);

  std::vector<std::vector<double>> candidates;
  for (int i = 0; i < pool_size; ++i) {
    std::vector<double> x(static_cast<size_t>(D));
    for (int d = 0; d < D; ++d) {
      double v = halton(i + 1, kPrimes[d]) + shift[static_cast<size_t>(d)];
      x[static_cast<size_t>(d)] = v - std::floor(v);
    }
    candidates.push_back(std::move(x));
  }
  for (const auto& pre : front_preimages) {
    for (double delta : {0.05, -0.05}) {
      std::vector<double> x = pre;
      for (auto& v : x) v = std::clamp(v + delta, 0.0, 1.0);
      candidates.push_back(std::move(x));
    }
  }

  size_t best_idx = 0;
  double best = -1.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double value = ehvi(post, front, candidates[i], samples, mix_seed(seed, i)).ehvi;
    if (value > best) {
      best = value;
      best_idx = i;
    }
  }
  return make_point(candidates[best_idx], def);
}

}  // namespace memlora
