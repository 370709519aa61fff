#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "icl/estimator.hpp"

namespace icl {

// ================================================================
// Gradient-descent recovery of the single-head optimum on the
// Monte-Carlo loss. The read-out (v, u) stays frozen while (A, b) move,
// mirroring the lazy-training split; gradients are central finite
// differences on a per-step batch, so all coordinate perturbations see
// the same prompts (common random numbers).
// ================================================================

struct FitReport {
  SingleHeadParams params;
  std::vector<std::pair<int, double>> trajectory;  // (step, smoothed loss)
  double distance_to_theory = 0.0;  // ||vA - I||_F + ||v b|| at termination
  bool diverged = false;
};

inline VectorXd finite_diff_grad(
    const std::function<double(const VectorXd&)>& objective, const VectorXd& x,
    double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  VectorXd grad(x.size());
  VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = objective(probe);
    probe[i] = x[i] - h;
    const double fm = objective(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_grad: non-finite objective at coordinate " +
                               std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

namespace detail {

inline void unpack_params(const VectorXd& x, int d, SingleHeadParams& p) {
  p.A = Eigen::Map<const MatrixXd>(x.data(), d, d);
  p.b = x.segment(static_cast<Eigen::Index>(d) * d, d);
}

inline VectorXd pack_params(const SingleHeadParams& p) {
  const auto d = p.A.rows();
  VectorXd x(d * d + d);
  Eigen::Map<MatrixXd>(x.data(), d, d) = p.A;
  x.segment(d * d, d) = p.b;
  return x;
}

}  // namespace detail

struct FitOptions {
  double grad_h = 1e-4;
  int workers = 0;
  int trajectory_stride = 10;
};

// SGD with a constant step, decayed 10x at 80% of the run. Each step draws
// a fresh batch of tasks from derive_seed(seed, step); a smoothed loss
// trails the batch losses for the convergence record and the divergence
// guard (smoothed > 10x initial for 100 consecutive steps aborts).
inline FitReport fit_single_head(const ScenarioConfig& cfg, double v_fixed,
                                 const SingleHeadParams& init, double lr,
                                 int steps, int batch, std::uint64_t seed,
                                 const FitOptions& opts = {}) {
  if (steps < 1 || batch < 1)
    throw std::invalid_argument("fit_single_head: steps and batch must be >= 1");
  if (init.A.rows() != cfg.d || init.A.cols() != cfg.d ||
      init.b.size() != cfg.d)
    throw std::invalid_argument("fit_single_head: init shapes do not match config");

  const int d = cfg.d;
  SingleHeadParams current = init;
  current.v = v_fixed;
  VectorXd x = detail::pack_params(current);

  std::vector<Prompt> batch_prompts(batch);
  const int workers = detail::resolve_workers(opts.workers);

  auto draw_batch = [&](int step) {
    const std::uint64_t step_seed = derive_seed(seed, static_cast<std::uint64_t>(step));
    for (int j = 0; j < batch; ++j) {
      RngStream rng(step_seed, static_cast<std::uint64_t>(j));
      const VectorXd theta = sample_theta(cfg, rng);
      sample_prompt_into(cfg, theta, rng, batch_prompts[j]);
    }
  };

  auto batch_loss = [&](const VectorXd& params) {
    // fixed chunking keeps the partial-sum order independent of scheduling
    const int chunk = 32;
    const int n_chunks = (batch + chunk - 1) / chunk;
    std::vector<double> sums(n_chunks, 0.0);
    std::atomic<int> next{0};
    auto body = [&] {
      thread_local SingleHeadParams local;
      local.v = v_fixed;
      local.u = init.u;
      detail::unpack_params(params, d, local);
      for (;;) {
        const int cidx = next.fetch_add(1);
        if (cidx >= n_chunks) break;
        double s = 0.0;
        const int lo = cidx * chunk, hi = std::min(batch, lo + chunk);
        for (int j = lo; j < hi; ++j) {
          const double e = predict_single(batch_prompts[j], local) -
                           batch_prompts[j].y_q;
          s += e * e;
        }
        sums[cidx] = s;
      }
    };
    if (workers <= 1 || n_chunks <= 1) {
      body();
    } else {
      std::vector<std::thread> pool;
      const int nw = std::min(workers, n_chunks);
      pool.reserve(nw);
      for (int t = 0; t < nw; ++t) pool.emplace_back(body);
      for (auto& th : pool) th.join();
    }
    double total = 0.0;
    for (double s : sums) total += s;
    return total / batch;
  };

  FitReport report;
  double smoothed = 0.0;
  double smoothed_init = 0.0;
  int high_steps = 0;

  for (int step = 0; step < steps; ++step) {
    draw_batch(step);
    const double f0 = batch_loss(x);
    smoothed = step == 0 ? f0 : 0.98 * smoothed + 0.02 * f0;
    if (step == 0) smoothed_init = smoothed;
    if (step % opts.trajectory_stride == 0)
      report.trajectory.emplace_back(step, smoothed);

    if (smoothed > 10.0 * smoothed_init) {
      if (++high_steps >= 100) {
        report.diverged = true;
        break;
      }
    } else {
      high_steps = 0;
    }

    const VectorXd grad = finite_diff_grad(batch_loss, x, opts.grad_h);
    const double step_lr = step < static_cast<int>(0.8 * steps) ? lr : 0.1 * lr;
    x -= step_lr * grad;
  }
  report.trajectory.emplace_back(steps, smoothed);

  detail::unpack_params(x, d, current);
  report.params = current;
  report.distance_to_theory =
      (v_fixed * current.A - MatrixXd::Identity(d, d)).norm() +
      (v_fixed * current.b).norm();
  return report;
}

}  // namespace icl
