#pragma once

#include "memlora/gp.hpp"
#include "memlora/search_space.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace memlora {

using Objectives = std::array<double, 2>;  // both maximized

struct ParetoFront {
  std::vector<Objectives> points;  // non-dominated, lexicographically sorted
  Objectives ref{0.0, 0.0};        // componentwise worst observed minus margin
};

constexpr double kRefMargin = 0.1;

bool dominates(const Objectives& a, const Objectives& b);

// Exactly the non-dominated subset (duplicates collapsed), with ref set to the
// componentwise minimum of `points` minus the margin. Throws on empty input.
ParetoFront pareto_filter(const std::vector<Objectives>& points);

// Exact dominated area above ref via a rectangle sweep. Throws when a front
// member fails to dominate ref.
double hypervolume_2d(const ParetoFront& front);
double hypervolume_2d(const std::vector<Objectives>& front_points, const Objectives& ref);

struct AcquisitionValue {
  std::vector<double> x;
  double ehvi = 0.0;
  int sample_count = 0;
};

// Monte-Carlo expected hypervolume improvement: mean over S posterior draws of
// max(0, HV(front u {draw}) - HV(front)); deterministic under seed.
AcquisitionValue ehvi(const GpPosterior& post, const ParetoFront& front, const std::vector<double>& x,
                      int samples, uint64_t seed);

// Evaluates ehvi on `pool_size` quasi-uniform cube points (Halton sequence
// with a seeded shift) plus +-0.05 all-coordinate perturbations of the given
// front pre-images; returns the maximizer, ties to the lowest pool index.
SearchPoint propose(const GpPosterior& post, const ParetoFront& front, const SearchSpaceDef& def,
                    const std::vector<std::vector<double>>& front_preimages, int pool_size, int samples,
                    uint64_t seed);

}  // namespace memlora
