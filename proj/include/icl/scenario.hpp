#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <stdexcept>
#include <string>
#include <utility>

#include "icl/rng.hpp"

namespace icl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Scenario { Base, Prior, Noisy, Correlated, Local, LocalShifted };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::Base: return "base";
    case Scenario::Prior: return "prior";
    case Scenario::Noisy: return "noisy";
    case Scenario::Correlated: return "correlated";
    case Scenario::Local: return "local";
    case Scenario::LocalShifted: return "local_shifted";
  }
  return "?";
}

// ================================================================
// One in-context regression task: D example columns, a query, the
// latent coefficient that generated the labels.
// ================================================================
struct Prompt {
  MatrixXd X;      // d x D inputs, one example per column
  VectorXd y;      // labels, length D
  VectorXd x_q;    // query input
  double y_q = 0;  // query label (ground truth, never shown to a predictor)
  VectorXd theta;  // latent coefficient of this task

  void resize(int d, int D) {
    X.resize(d, D);
    y.resize(D);
    x_q.resize(d);
    theta.resize(d);
  }
};

// ================================================================
// Data-generation regime. Fields outside the active variant keep their
// documented defaults; factories validate everything once so sampling
// never has to.
// ================================================================
struct ScenarioConfig {
  int d = 1;
  int D = 1;
  Scenario variant = Scenario::Base;
  double sigma_eps = 0.0;    // label-noise std (Noisy)
  VectorXd theta0;           // prior mean (Prior); zero otherwise
  double sigma_prior = 1.0;  // prior spread (Prior)
  MatrixXd sigma_cov;        // feature covariance (Correlated); identity otherwise
  double sigma_x = 0.0;      // neighbor spread (Local / LocalShifted)

  MatrixXd chol;  // lower Cholesky factor of sigma_cov (Correlated)

  static ScenarioConfig base(int d, int D) {
    return make(d, D, Scenario::Base, 0.0, VectorXd::Zero(d), 1.0,
                MatrixXd::Identity(d, d), 0.0);
  }
  static ScenarioConfig prior(int d, int D, VectorXd theta0, double sigma) {
    return make(d, D, Scenario::Prior, 0.0, std::move(theta0), sigma,
                MatrixXd::Identity(d, d), 0.0);
  }
  static ScenarioConfig noisy(int d, int D, double sigma_eps) {
    return make(d, D, Scenario::Noisy, sigma_eps, VectorXd::Zero(d), 1.0,
                MatrixXd::Identity(d, d), 0.0);
  }
  static ScenarioConfig correlated(int d, int D, MatrixXd sigma) {
    return make(d, D, Scenario::Correlated, 0.0, VectorXd::Zero(d), 1.0,
                std::move(sigma), 0.0);
  }
  static ScenarioConfig local(int d, int D, double sigma_x) {
    return make(d, D, Scenario::Local, 0.0, VectorXd::Zero(d), 1.0,
                MatrixXd::Identity(d, d), sigma_x);
  }
  static ScenarioConfig local_shifted(int d, int D, double sigma_x) {
    return make(d, D, Scenario::LocalShifted, 0.0, VectorXd::Zero(d), 1.0,
                MatrixXd::Identity(d, d), sigma_x);
  }

  static ScenarioConfig make(int d, int D, Scenario variant, double sigma_eps,
                             VectorXd theta0, double sigma_prior,
                             MatrixXd sigma_cov, double sigma_x) {
    if (d < 1) throw std::invalid_argument("ScenarioConfig: d must be >= 1");
    if (D < 1) throw std::invalid_argument("ScenarioConfig: D must be >= 1");
    if (sigma_eps < 0 || sigma_prior < 0 || sigma_x < 0)
      throw std::invalid_argument("ScenarioConfig: negative spread parameter");
    if (theta0.size() != d)
      throw std::invalid_argument("ScenarioConfig: theta0 must have length d");
    if (sigma_cov.rows() != d || sigma_cov.cols() != d)
      throw std::invalid_argument("ScenarioConfig: sigma_cov must be d x d");
    if (!sigma_cov.isApprox(sigma_cov.transpose(), 1e-12))
      throw std::invalid_argument("ScenarioConfig: sigma_cov must be symmetric");

    ScenarioConfig cfg;
    cfg.d = d;
    cfg.D = D;
    cfg.variant = variant;
    cfg.sigma_eps = sigma_eps;
    cfg.theta0 = std::move(theta0);
    cfg.sigma_prior = sigma_prior;
    cfg.sigma_cov = std::move(sigma_cov);
    cfg.sigma_x = sigma_x;

    Eigen::LLT<MatrixXd> llt(cfg.sigma_cov);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument(
          "ScenarioConfig: sigma_cov is not positive definite");
    cfg.chol = llt.matrixL();
    return cfg;
  }
};

// Symmetric square root pair of an SPD matrix, for whitening.
struct SymmetricRoot {
  MatrixXd root;      // Sigma^{1/2}
  MatrixXd inv_root;  // Sigma^{-1/2}
};

inline SymmetricRoot symmetric_root(const MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() ||
      !sigma.isApprox(sigma.transpose(), 1e-12))
    throw std::invalid_argument("symmetric_root: matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("symmetric_root: eigendecomposition failed");
  const VectorXd& ev = es.eigenvalues();
  if ((ev.array() <= 0.0).any())
    throw std::invalid_argument("symmetric_root: matrix is not positive definite");
  SymmetricRoot out;
  out.root = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
             es.eigenvectors().transpose();
  out.inv_root = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                 es.eigenvectors().transpose();
  return out;
}

// ================================================================
// Sampling. All operations are pure in (config, rng); a fresh stream per
// Monte-Carlo repetition makes parallel runs reproducible.
// ================================================================

// theta ~ N(0, I/d), or theta0 + N(0, sigma^2 I/d) under the prior regime.
inline VectorXd sample_theta(const ScenarioConfig& cfg, RngStream& rng) {
  VectorXd z(cfg.d);
  rng.fill_normal(z.data(), cfg.d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  if (cfg.variant == Scenario::Prior)
    return cfg.theta0 + (cfg.sigma_prior * scale) * z;
  return scale * z;
}

inline void sample_prompt_into(const ScenarioConfig& cfg, const VectorXd& theta,
                               RngStream& rng, Prompt& p) {
  if (theta.size() != cfg.d)
    throw std::invalid_argument("sample_prompt: theta has wrong length");
  const int d = cfg.d, D = cfg.D;
  p.resize(d, D);
  p.theta = theta;

  switch (cfg.variant) {
    case Scenario::Base:
    case Scenario::Prior:
    case Scenario::Noisy:
      rng.fill_normal(p.X.data(), static_cast<long>(d) * D);
      rng.fill_normal(p.x_q.data(), d);
      break;
    case Scenario::Correlated: {
      rng.fill_normal(p.X.data(), static_cast<long>(d) * D);
      rng.fill_normal(p.x_q.data(), d);
      p.X = (cfg.chol * p.X).eval();
      p.x_q = (cfg.chol * p.x_q).eval();
      break;
    }
    case Scenario::Local:
    case Scenario::LocalShifted: {
      rng.fill_normal(p.x_q.data(), d);
      rng.fill_normal(p.X.data(), static_cast<long>(d) * D);
      p.X = (cfg.sigma_x * p.X).colwise() + p.x_q;
      break;
    }
  }

  p.y.noalias() = p.X.transpose() * theta;
  p.y_q = theta.dot(p.x_q);
  if (cfg.variant == Scenario::Noisy && cfg.sigma_eps > 0) {
    for (int i = 0; i < D; ++i) p.y[i] += cfg.sigma_eps * rng.normal();
    p.y_q += cfg.sigma_eps * rng.normal();
  }
}

inline Prompt sample_prompt(const ScenarioConfig& cfg, const VectorXd& theta,
                            RngStream& rng) {
  Prompt p;
  sample_prompt_into(cfg, theta, rng, p);
  return p;
}

// Applies the read-in map Sigma^{-1/2} to all inputs. Labels are untouched;
// theta becomes Sigma^{1/2} theta so the label identity y = theta^T x still
// holds for the returned prompt.
inline void whiten_prompt_into(const Prompt& in, const SymmetricRoot& sr,
                               Prompt& out) {
  out.X.noalias() = sr.inv_root * in.X;
  out.x_q.noalias() = sr.inv_root * in.x_q;
  out.theta.noalias() = sr.root * in.theta;
  out.y = in.y;
  out.y_q = in.y_q;
}

inline Prompt whiten_prompt(const Prompt& p, const MatrixXd& sigma_cov) {
  Prompt out;
  whiten_prompt_into(p, symmetric_root(sigma_cov), out);
  return out;
}

}  // namespace icl
