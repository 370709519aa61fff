#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "icl/attention.hpp"
#include "icl/scenario.hpp"
#include "icl/theory.hpp"

namespace icl {

using Predictor = std::variant<SingleHeadParams, GeneralHeads>;

struct LossEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long n_reps = 0;
  std::uint64_t master_seed = 0;
};

// One-pass mean/variance state (Welford); merges are exact in the
// Chan et al. sense, so block-wise accumulation is order-stable.
struct RunningMoments {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / n;
    m2 += delta * (x - mean);
  }

  void merge(const RunningMoments& o) {
    if (o.n == 0) return;
    if (n == 0) { *this = o; return; }
    const double delta = o.mean - mean;
    const long total = n + o.n;
    mean += delta * o.n / total;
    m2 += o.m2 + delta * delta * (static_cast<double>(n) * o.n / total);
    n = total;
  }

  double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
  double std_error() const { return n > 1 ? std::sqrt(variance() / n) : 0.0; }
};

inline int predictor_dim(const Predictor& p) {
  if (const auto* s = std::get_if<SingleHeadParams>(&p))
    return static_cast<int>(s->A.rows());
  const auto& g = std::get<GeneralHeads>(p);
  if (g.heads.empty())
    throw std::invalid_argument("predictor: no heads");
  return static_cast<int>(g.heads.front().A.rows());
}

inline double predict(const Prompt& prompt, const Predictor& p) {
  if (const auto* s = std::get_if<SingleHeadParams>(&p))
    return predict_single(prompt, *s);
  const auto& g = std::get<GeneralHeads>(p);
  return predict_multi(prompt, g);
}

struct McOptions {
  int workers = 0;      // 0 = hardware concurrency
  bool whiten = false;  // apply the Sigma^{-1/2} read-in (Correlated only)
};

namespace detail {

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Repetitions are grouped into fixed blocks; each block is consumed by
// exactly one worker in rep order and the block states are merged in
// block order afterwards. The result is bit-identical for any worker
// count.
constexpr long kMcBlock = 4096;

template <typename PerRep>
RunningMoments run_blocked(long n_reps, int workers, const PerRep& per_rep) {
  const long n_blocks = (n_reps + kMcBlock - 1) / kMcBlock;
  std::vector<RunningMoments> blocks(n_blocks);
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto body = [&] {
    try {
      for (;;) {
        const long blk = next.fetch_add(1);
        if (blk >= n_blocks) break;
        const long lo = blk * kMcBlock;
        const long hi = std::min(n_reps, lo + kMcBlock);
        RunningMoments acc;
        for (long k = lo; k < hi; ++k) acc.add(per_rep(k));
        blocks[blk] = acc;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(n_blocks);
    }
  };

  const int nw = std::min<long>(resolve_workers(workers), n_blocks);
  if (nw <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (int t = 0; t < nw; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  RunningMoments total;
  for (const auto& b : blocks) total.merge(b);
  return total;
}

}  // namespace detail

// Monte-Carlo estimate of E (yhat_q - y_q)^2 over fresh tasks. Repetition k
// draws theta and a prompt from stream k of master_seed, so the estimate is
// reproducible for any worker count.
inline LossEstimate mc_loss(const ScenarioConfig& cfg, const Predictor& predictor,
                            long n_reps, std::uint64_t master_seed,
                            const McOptions& opts = {}) {
  if (n_reps < 2)
    throw std::invalid_argument("mc_loss: n_reps must be >= 2");
  if (predictor_dim(predictor) != cfg.d)
    throw std::invalid_argument("mc_loss: predictor dimension != config d");
  if (opts.whiten && cfg.variant != Scenario::Correlated)
    throw std::invalid_argument("mc_loss: whiten requires the correlated scenario");

  std::optional<SymmetricRoot> root;
  if (opts.whiten) root = symmetric_root(cfg.sigma_cov);

  struct Workspace {
    Prompt prompt;
    Prompt whitened;
  };

  auto per_rep = [&](long k) {
    thread_local Workspace ws;
    RngStream rng(master_seed, static_cast<std::uint64_t>(k));
    const VectorXd theta = sample_theta(cfg, rng);
    sample_prompt_into(cfg, theta, rng, ws.prompt);
    const Prompt* active = &ws.prompt;
    if (root) {
      whiten_prompt_into(ws.prompt, *root, ws.whitened);
      active = &ws.whitened;
    }
    const double err = predict(*active, predictor) - active->y_q;
    return err * err;
  };

  const RunningMoments total =
      detail::run_blocked(n_reps, opts.workers, per_rep);
  return {total.mean, total.std_error(), n_reps, master_seed};
}

inline double z_score(const LossEstimate& est, const TheoryValue& theory) {
  if (!theory.valid)
    throw std::invalid_argument("z_score: theory value is not valid");
  if (!(est.std_error > 0.0))
    throw std::invalid_argument("z_score: standard error must be positive");
  return (est.mean - theory.value) / est.std_error;
}

// Least-squares slope of log(mean) against log(D); -1 for exact 1/D decay.
inline double decay_slope(const std::vector<std::pair<long, double>>& points) {
  if (points.size() < 3)
    throw std::invalid_argument("decay_slope: need at least 3 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].second > 0.0))
      throw std::invalid_argument("decay_slope: nonpositive mean");
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (points[i].first == points[j].first)
        throw std::invalid_argument("decay_slope: duplicate D value");
  }
  double sx = 0, sy = 0;
  for (const auto& [D, m] : points) {
    sx += std::log(static_cast<double>(D));
    sy += std::log(m);
  }
  const double mx = sx / points.size(), my = sy / points.size();
  double num = 0, den = 0;
  for (const auto& [D, m] : points) {
    const double dx = std::log(static_cast<double>(D)) - mx;
    num += dx * (std::log(m) - my);
    den += dx * dx;
  }
  return num / den;
}

// ================================================================
// Parameter sweeps.
// ================================================================

enum class SweepAxis { V, C, Examples, Dim, SigmaEps, SigmaX, PriorScale };

inline const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::V: return "v";
    case SweepAxis::C: return "c";
    case SweepAxis::Examples: return "D";
    case SweepAxis::Dim: return "d";
    case SweepAxis::SigmaEps: return "sigma_eps";
    case SweepAxis::SigmaX: return "sigma_x";
    case SweepAxis::PriorScale: return "prior_scale";
  }
  return "?";
}

struct SweepRow {
  double value = 0;
  LossEstimate estimate;
  TheoryValue theory;
  double z = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

// Returns the template with the axis value applied. Axes that live on the
// predictor (v, c) leave the config untouched.
inline ScenarioConfig apply_axis(const ScenarioConfig& tmpl, SweepAxis axis,
                                 double value) {
  auto rebuilt = [&](int d, long D, double sigma_eps, double sigma_x,
                     double prior_scale) {
    VectorXd theta0 = tmpl.theta0;
    MatrixXd cov = tmpl.sigma_cov;
    if (d != tmpl.d) {
      if (tmpl.variant == Scenario::Prior || tmpl.variant == Scenario::Correlated)
        throw std::invalid_argument(
            "sweep: d axis is not supported with vector/matrix scenario parameters");
      theta0 = VectorXd::Zero(d);
      cov = MatrixXd::Identity(d, d);
    }
    if (prior_scale >= 0.0) {
      const double norm = theta0.norm();
      theta0 = norm > 0 ? VectorXd(theta0 * (prior_scale / norm))
                        : VectorXd(prior_scale * VectorXd::Unit(d, 0));
    }
    return ScenarioConfig::make(d, static_cast<int>(D), tmpl.variant, sigma_eps,
                                std::move(theta0), tmpl.sigma_prior,
                                std::move(cov), sigma_x);
  };

  switch (axis) {
    case SweepAxis::V:
    case SweepAxis::C:
      return tmpl;
    case SweepAxis::Examples:
      return rebuilt(tmpl.d, static_cast<long>(value), tmpl.sigma_eps,
                     tmpl.sigma_x, -1.0);
    case SweepAxis::Dim:
      return rebuilt(static_cast<int>(value), tmpl.D, tmpl.sigma_eps,
                     tmpl.sigma_x, -1.0);
    case SweepAxis::SigmaEps:
      return rebuilt(tmpl.d, tmpl.D, value, tmpl.sigma_x, -1.0);
    case SweepAxis::SigmaX:
      return rebuilt(tmpl.d, tmpl.D, tmpl.sigma_eps, value, -1.0);
    case SweepAxis::PriorScale:
      return rebuilt(tmpl.d, tmpl.D, tmpl.sigma_eps, tmpl.sigma_x, value);
  }
  throw std::logic_error("apply_axis: bad axis");
}

using PredictorFactory =
    std::function<Predictor(const ScenarioConfig&, double axis_value)>;
using TheoryFn =
    std::function<TheoryValue(const ScenarioConfig&, double axis_value)>;

// One row per axis value, in input order. Rows get independent sub-seeds
// derived from (seed, row index); per-row failures land in the status
// field instead of aborting the sweep.
inline std::vector<SweepRow> sweep(const ScenarioConfig& tmpl,
                                   const PredictorFactory& factory,
                                   SweepAxis axis,
                                   const std::vector<double>& values,
                                   long n_reps, std::uint64_t seed,
                                   const TheoryFn& theory_fn = nullptr,
                                   const McOptions& opts = {}) {
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepRow row;
    row.value = values[i];
    try {
      const ScenarioConfig cfg = apply_axis(tmpl, axis, values[i]);
      const Predictor pred = factory(cfg, values[i]);
      row.estimate = mc_loss(cfg, pred, n_reps, derive_seed(seed, i), opts);
      if (theory_fn) {
        row.theory = theory_fn(cfg, values[i]);
        if (row.theory.valid && row.estimate.std_error > 0.0)
          row.z = z_score(row.estimate, row.theory);
      }
    } catch (const std::exception& e) {
      row.status = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace icl
