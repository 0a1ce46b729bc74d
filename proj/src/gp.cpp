#include "memlora/gp.hpp"

#include "memlora/common.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace memlora {

namespace {

constexpr double kJitterLow = 1e-6;
constexpr double kJitterHigh = 1e-4;

// Pairwise squared distances per dimension are reused across every objective
// evaluation of one fit.
std::vector<Matrix> squared_diffs(const Matrix& X) {
  const Eigen::Index n = X.rows(), D = X.cols();
  std::vector<Matrix> d2(static_cast<size_t>(D));
  for (Eigen::Index d = 0; d < D; ++d) {
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const double diff = X(i, d) - X(j, d);
        m(i, j) = diff * diff;
      }
    d2[static_cast<size_t>(d)] = std::move(m);
  }
  return d2;
}

Matrix se_kernel(const std::vector<Matrix>& d2, const Vector& rho, double sf2) {
  const Eigen::Index n = d2.empty() ? 0 : d2[0].rows();
  Matrix q = Matrix::Zero(n, n);
  for (size_t d = 0; d < d2.size(); ++d) q += rho(static_cast<Eigen::Index>(d)) * d2[d];
  return sf2 * (-0.5 * q.array()).exp().matrix();
}

struct Objective {
  double value = -std::numeric_limits<double>::infinity();
  Vector grad;  // d/dlog_params
  bool ok = false;
};

double log_prior(const Vector& rho, double sf2, double sn2, double tau) {
  double lp = 0.0;
  for (Eigen::Index d = 0; d < rho.size(); ++d) {
    const double r = rho(d) / tau;
    lp += std::log(2.0 / (M_PI * tau)) - std::log1p(r * r);
  }
  for (double v : {sf2, sn2}) {
    const double lv = std::log(v);
    lp += -lv - 0.5 * lv * lv - 0.5 * std::log(2.0 * M_PI);
  }
  return lp;
}

// log marginal likelihood + log prior and its gradient w.r.t. log-params
// [log rho_0.., log sf2, log sn2].
Objective evaluate(const Matrix& X, const Vector& y, const std::vector<Matrix>& d2,
                   const Vector& log_params, double tau, double jitter, bool want_grad) {
  Objective out;
  const Eigen::Index n = X.rows(), D = X.cols();
  Vector rho(D);
  for (Eigen::Index d = 0; d < D; ++d) rho(d) = std::exp(log_params(d));
  const double sf2 = std::exp(log_params(D));
  const double sn2 = std::exp(log_params(D + 1));
  if (!rho.allFinite() || !std::isfinite(sf2) || !std::isfinite(sn2)) return out;

  Matrix Kse = se_kernel(d2, rho, sf2);
  Matrix K = Kse + (sn2 + jitter) * Matrix::Identity(n, n);
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) return out;

  Vector alpha = llt.solve(y);
  double log_det = 0.0;
  const auto& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(L(i, i));
  const double lml = -0.5 * y.dot(alpha) - log_det - 0.5 * n * std::log(2.0 * M_PI);
  out.value = lml + log_prior(rho, sf2, sn2, tau);
  if (!std::isfinite(out.value)) {
    out.value = -std::numeric_limits<double>::infinity();
    return out;
  }
  out.ok = true;
  if (!want_grad) return out;

  Matrix Kinv = llt.solve(Matrix::Identity(n, n));
  Matrix W = alpha * alpha.transpose() - Kinv;
  out.grad = Vector::Zero(D + 2);
  for (Eigen::Index d = 0; d < D; ++d) {
    // dK/dlog rho_d = Kse .* (-0.5 d2_d) * rho_d
    const double g = 0.5 * rho(d) * (W.array() * Kse.array() * (-0.5) * d2[static_cast<size_t>(d)].array()).sum();
    const double gp = -2.0 * rho(d) * rho(d) / (tau * tau + rho(d) * rho(d));
    out.grad(d) = g + gp;
  }
  out.grad(D) = 0.5 * (W.array() * Kse.array()).sum() + (-1.0 - std::log(sf2));
  out.grad(D + 1) = 0.5 * sn2 * W.trace() + (-1.0 - std::log(sn2));
  return out;
}

}  // namespace

double gp_map_objective(const Matrix& X, const Vector& y_std, const Vector& log_params, double tau,
                        double jitter) {
  auto d2 = squared_diffs(X);
  return evaluate(X, y_std, d2, log_params, tau, jitter, false).value;
}

GpPosterior fit_gp(const Matrix& X, const Matrix& Y, uint64_t seed, const GpFitOptions& opts) {
  const Eigen::Index n = X.rows(), D = X.cols(), m = Y.cols();
  if (n < 2) throw std::invalid_argument("fit_gp: need at least 2 observations");
  if (Y.rows() != n) throw std::invalid_argument("fit_gp: X/Y row mismatch");

  GpPosterior post;
  post.X = X;
  const auto d2 = squared_diffs(X);

  for (Eigen::Index obj = 0; obj < m; ++obj) {
    const double y_mean = Y.col(obj).mean();
    double y_std = std::sqrt((Y.col(obj).array() - y_mean).square().mean());
    if (y_std < 1e-12) y_std = 1.0;
    Vector y = (Y.col(obj).array() - y_mean) / y_std;

    std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(obj)));
    std::normal_distribution<double> gauss(0.0, 1.0);

    Vector best_params;
    double best_value = -std::numeric_limits<double>::infinity();
    double best_jitter = kJitterLow;

    auto eval_with_escalation = [&](const Vector& lp, bool grad, double& jitter_used) {
      jitter_used = kJitterLow;
      Objective o = evaluate(X, y, d2, lp, opts.tau, kJitterLow, grad);
      if (!o.ok) {
        jitter_used = kJitterHigh;
        o = evaluate(X, y, d2, lp, opts.tau, kJitterHigh, grad);
      }
      return o;
    };

    for (int start = 0; start < opts.n_starts; ++start) {
      Vector lp(D + 2);
      for (Eigen::Index d = 0; d < D; ++d) lp(d) = std::log(0.3) + gauss(rng);
      lp(D) = 0.5 * gauss(rng);
      lp(D + 1) = std::log(0.01) + 0.5 * gauss(rng);

      Vector mom = Vector::Zero(D + 2), vel = Vector::Zero(D + 2);
      for (int it = 0; it <= opts.iterations; ++it) {
        double jit;
        Objective o = eval_with_escalation(lp, it < opts.iterations, jit);
        if (o.ok && o.value > best_value) {
          best_value = o.value;
          best_params = lp;
          best_jitter = jit;
        }
        if (it == opts.iterations) break;
        if (!o.ok) break;  // abandon a start whose kernel cannot factorize
        // Adam ascent on log-params
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        mom = b1 * mom + (1 - b1) * o.grad;
        vel = b2 * vel.array() + (1 - b2) * o.grad.array().square();
        const double bc1 = 1 - std::pow(b1, it + 1), bc2 = 1 - std::pow(b2, it + 1);
        lp.array() += opts.learning_rate * (mom.array() / bc1) /
                      ((vel.array() / bc2).sqrt() + eps);
      }
    }
    if (!best_params.size())
      throw GpFitError("fit_gp: kernel singular for every start even after jitter escalation");

    GpModel model;
    model.hp.rho = best_params.head(D).array().exp();
    model.hp.sf2 = std::exp(best_params(D));
    model.hp.sn2 = std::exp(best_params(D + 1));
    model.hp.tau = opts.tau;
    model.X = X;
    model.y_mean = y_mean;
    model.y_std = y_std;
    model.jitter = best_jitter;
    model.map_objective = best_value;
    Matrix K = se_kernel(d2, model.hp.rho, model.hp.sf2) +
               (model.hp.sn2 + best_jitter) * Matrix::Identity(n, n);
    model.llt.compute(K);
    if (model.llt.info() != Eigen::Success) {
      model.jitter = kJitterHigh;
      K.diagonal().array() += kJitterHigh - best_jitter;
      model.llt.compute(K);
      if (model.llt.info() != Eigen::Success)
        throw GpFitError("fit_gp: final kernel factorization failed");
    }
    model.alpha = model.llt.solve(y);
    post.models.push_back(std::move(model));
  }
  return post;
}

void predict(const GpPosterior& post, const Vector& x, Vector& mean, Vector& var) {
  const Eigen::Index m = post.n_objectives();
  mean.resize(m);
  var.resize(m);
  for (Eigen::Index obj = 0; obj < m; ++obj) {
    const GpModel& g = post.models[static_cast<size_t>(obj)];
    const Eigen::Index n = g.X.rows();
    Vector ks(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double q = 0.0;
      for (Eigen::Index d = 0; d < g.X.cols(); ++d) {
        const double diff = x(d) - g.X(i, d);
        q += g.hp.rho(d) * diff * diff;
      }
      ks(i) = g.hp.sf2 * std::exp(-0.5 * q);
    }
    const double mu = ks.dot(g.alpha);
    const double v = std::max(0.0, g.hp.sf2 - ks.dot(g.llt.solve(ks)));
    mean(obj) = mu * g.y_std + g.y_mean;
    var(obj) = v * g.y_std * g.y_std;
  }
}

Matrix sample(const GpPosterior& post, const Vector& x, int count, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  Vector mean, var;
  predict(post, x, mean, var);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix out(count, mean.size());
  for (int s = 0; s < count; ++s)
    for (Eigen::Index obj = 0; obj < mean.size(); ++obj)
      out(s, obj) = mean(obj) + std::sqrt(var(obj)) * gauss(rng);
  return out;
}

}  // namespace memlora
