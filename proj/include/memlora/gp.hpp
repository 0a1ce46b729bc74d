#pragma once

#include "memlora/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace memlora {

struct GpFitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ARD squared-exponential kernel k(x,x') = sf2 * exp(-0.5 * sum_d rho_d
// (x_d-x'_d)^2) with per-dimension inverse squared lengthscales rho_d. A
// half-Cauchy prior on each rho_d shrinks irrelevant dimensions (SAAS
// structure); log-normal priors sit on the signal and noise variances.
struct GpHyperparams {
  Vector rho;        // >= 0, one per input dimension
  double sf2 = 1.0;  // signal variance
  double sn2 = 1e-2; // noise variance
  double tau = 0.1;  // global sparsity scale of the half-Cauchy prior
};

struct GpModel {
  GpHyperparams hp;
  Matrix X;              // n x D training inputs
  Vector alpha;          // (K + sn2 I + jitter I)^{-1} y, standardized y
  Eigen::LLT<Eigen::MatrixXd> llt;
  double y_mean = 0.0, y_std = 1.0;
  double jitter = 0.0;
  double map_objective = 0.0;  // log marginal likelihood + log prior at hp
};

// One independent GP per objective.
struct GpPosterior {
  Matrix X;
  std::vector<GpModel> models;
  int n_objectives() const { return static_cast<int>(models.size()); }
};

struct GpFitOptions {
  int n_starts = 8;
  int iterations = 150;
  double learning_rate = 0.05;
  double tau = 0.1;
};

// MAP fit of (log marginal likelihood + log prior) by multi-start Adam over
// log-parameters; deterministic under seed. Y is n x m (one column per
// objective, modeled independently); columns are standardized internally.
// Throws GpFitError when the kernel stays singular after jitter escalation.
GpPosterior fit_gp(const Matrix& X, const Matrix& Y, uint64_t seed, const GpFitOptions& opts = {});

// De-standardized predictive mean and (latent) variance per objective.
void predict(const GpPosterior& post, const Vector& x, Vector& mean, Vector& var);

// Independent Gaussian draws per objective; count x m, deterministic under seed.
Matrix sample(const GpPosterior& post, const Vector& x, int count, uint64_t seed);

// Exposed for tests: the MAP objective at given log-parameters.
double gp_map_objective(const Matrix& X, const Vector& y_std, const Vector& log_params, double tau,
                        double jitter);

}  // namespace memlora
