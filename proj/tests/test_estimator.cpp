#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "icl/estimator.hpp"

using namespace icl;

TEST_CASE("running moments match direct formulas and merge exactly") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd(2.0, 3.0);
  std::vector<double> xs(5000);
  for (auto& x : xs) x = nd(gen);

  RunningMoments all;
  for (double x : xs) all.add(x);

  double mean = 0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= (xs.size() - 1);

  CHECK(all.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(all.variance() == doctest::Approx(var).epsilon(1e-10));

  RunningMoments a, b;
  for (std::size_t i = 0; i < xs.size(); ++i)
    (i < 1700 ? a : b).add(xs[i]);
  a.merge(b);
  CHECK(a.n == all.n);
  CHECK(a.mean == doctest::Approx(all.mean).epsilon(1e-13));
  CHECK(a.variance() == doctest::Approx(all.variance()).epsilon(1e-12));
}

TEST_CASE("mc_loss is bit-identical across worker counts") {
  const auto cfg = ScenarioConfig::base(3, 50);
  const Predictor pred = SingleHeadParams::identity_over_v(3, 3.0);
  McOptions one;
  one.workers = 1;
  McOptions four;
  four.workers = 4;
  const LossEstimate a = mc_loss(cfg, pred, 9000, 123, one);
  const LossEstimate b = mc_loss(cfg, pred, 9000, 123, four);
  CHECK(a.mean == b.mean);
  CHECK(a.std_error == b.std_error);
  const LossEstimate c = mc_loss(cfg, pred, 9000, 123, four);
  CHECK(c.mean == a.mean);
}

TEST_CASE("zero predictor estimates E y_q^2 = 1") {
  const auto cfg = ScenarioConfig::base(5, 20);
  SingleHeadParams p{MatrixXd::Zero(5, 5), VectorXd::Zero(5), 0.0, VectorXd()};
  const LossEstimate est = mc_loss(cfg, p, 100000, 7);
  CHECK(std::abs(est.mean - 1.0) < 3 * est.std_error);
  // Var((theta^T x_q)^2) = 3 E||theta||^4 - 1 = 3(d+2)/d - 1
  const double expect_se = std::sqrt((3.0 * 1.4 - 1.0) / 100000);
  CHECK(est.std_error == doctest::Approx(expect_se).epsilon(0.1));
}

TEST_CASE("identical local neighbors leave only the self-weight gap") {
  const auto cfg = ScenarioConfig::local(3, 100, 0.0);
  SingleHeadParams p{MatrixXd::Zero(3, 3), VectorXd::Zero(3), 1.0, VectorXd()};
  const LossEstimate est = mc_loss(cfg, p, 5000, 11);
  CHECK(est.mean < 1e-3);
  // exact mean is E y_q^2 / (D+1)^2
  CHECK(est.mean == doctest::Approx(1.0 / (101.0 * 101.0)).epsilon(0.2));
}

TEST_CASE("mc within four stderr of theory at the canonical point") {
  const auto cfg = ScenarioConfig::base(5, 1000);
  const Predictor pred = SingleHeadParams::identity_over_v(5, 3.0);
  const LossEstimate est = mc_loss(cfg, pred, 20000, 2024);
  const TheoryValue t = loss_single(5, 1000, 3.0);
  CHECK(std::abs(z_score(est, t)) <= 4.0);
}

TEST_CASE("z_score") {
  LossEstimate est{1.5, 1.0, 100, 0};
  TheoryValue t{1.5, true, 1.0};
  CHECK(z_score(est, t) == 0.0);
  est.mean = t.value + 2.0 * est.std_error;
  CHECK(z_score(est, t) == doctest::Approx(2.0));
  TheoryValue bad;
  CHECK_THROWS_AS(z_score(est, bad), std::invalid_argument);
  est.std_error = 0.0;
  CHECK_THROWS_AS(z_score(est, t), std::invalid_argument);
}

TEST_CASE("decay_slope") {
  std::vector<std::pair<long, double>> pts;
  for (long D : {250L, 500L, 1000L, 2000L})
    pts.emplace_back(D, loss_single(5, D, 3.0).value);
  CHECK(decay_slope(pts) == doctest::Approx(-1.0).epsilon(1e-6));

  std::vector<std::pair<long, double>> flat{{100, 2.0}, {200, 2.0}, {400, 2.0}};
  CHECK(decay_slope(flat) == doctest::Approx(0.0));

  CHECK_THROWS_AS(decay_slope({{100, 1.0}, {200, 0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(decay_slope({{100, 1.0}, {200, -0.5}, {400, 0.2}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(decay_slope({{100, 1.0}, {100, 0.5}, {400, 0.2}}),
                  std::invalid_argument);
}

TEST_CASE("argument validation") {
  const auto cfg = ScenarioConfig::base(3, 10);
  const Predictor pred = SingleHeadParams::identity_over_v(3, 3.0);
  CHECK_THROWS_AS(mc_loss(cfg, pred, 1, 0), std::invalid_argument);
  const Predictor wrong = SingleHeadParams::identity_over_v(4, 3.0);
  CHECK_THROWS_AS(mc_loss(cfg, wrong, 100, 0), std::invalid_argument);
  McOptions w;
  w.whiten = true;
  CHECK_THROWS_AS(mc_loss(cfg, pred, 100, 0, w), std::invalid_argument);
}

TEST_CASE("noise floor sigma_eps^2 holds for any predictor") {
  for (double se : {0.5, 1.0}) {
    const auto cfg = ScenarioConfig::noisy(5, 100, se);
    const Predictor canonical = SingleHeadParams::identity_over_v(5, 3.0);
    SingleHeadParams zero{MatrixXd::Zero(5, 5), VectorXd::Zero(5), 0.0,
                          VectorXd()};
    const Predictor two = two_head_from_c(0.5, 3.0, 5);
    for (const Predictor& p : {canonical, Predictor(zero), two}) {
      const LossEstimate est = mc_loss(cfg, p, 10000, 31);
      CHECK(est.mean > se * se);
    }
  }
}

TEST_CASE("prior scaling of the mc loss") {
  const int d = 5;
  const int D = 200;
  const double v = 3.0;
  const Predictor pred = SingleHeadParams::identity_over_v(d, v);
  const auto base = mc_loss(ScenarioConfig::base(d, D), pred, 40000, 17);
  const auto prior = mc_loss(
      ScenarioConfig::prior(d, D, VectorXd::Unit(d, 0), 1.0), pred, 40000, 18);
  const double ratio = prior.mean / base.mean;
  const double se_ratio =
      ratio * std::hypot(prior.std_error / prior.mean,
                         base.std_error / base.mean);
  CHECK(std::abs(ratio - 2.0) <= 4.0 * se_ratio);
}

TEST_CASE("whitening equivalence in distribution") {
  const int d = 3, D = 100;
  MatrixXd sigma(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) sigma(i, j) = std::pow(0.5, std::abs(i - j));
  const auto cfg = ScenarioConfig::correlated(d, D, sigma);
  const Predictor pred = SingleHeadParams::identity_over_v(d, 3.0);

  McOptions w;
  w.whiten = true;
  const LossEstimate whitened = mc_loss(cfg, pred, 30000, 5, w);

  // isotropic twin with theta -> Sigma^{1/2} theta
  const SymmetricRoot root = symmetric_root(sigma);
  const auto iso = ScenarioConfig::base(d, D);
  RunningMoments acc;
  for (long k = 0; k < 30000; ++k) {
    RngStream rng(5, k);
    const VectorXd theta = root.root * sample_theta(iso, rng);
    const Prompt p = sample_prompt(iso, theta, rng);
    const double e = predict(p, pred) - p.y_q;
    acc.add(e * e);
  }
  const double combined = std::hypot(whitened.std_error, acc.std_error());
  CHECK(std::abs(whitened.mean - acc.mean) <= 3.0 * combined);
}

TEST_CASE("sweep fills rows, statuses and derived seeds") {
  const auto cfg = ScenarioConfig::base(3, 60);
  PredictorFactory factory = [](const ScenarioConfig& c, double v) {
    return Predictor(SingleHeadParams::identity_over_v(c.d, v));
  };
  TheoryFn theory = [](const ScenarioConfig& c, double v) {
    return loss_single(c.d, c.D, v);
  };
  const auto rows =
      sweep(cfg, factory, SweepAxis::V, {1.2, 2.0, 3.0}, 2000, 99, theory);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].status == "ok");
  CHECK_FALSE(rows[0].theory.valid);  // v^2 < 2
  CHECK(rows[1].theory.valid);
  CHECK(std::isfinite(rows[1].z));
  CHECK(rows[1].estimate.master_seed != rows[2].estimate.master_seed);

  // per-row failures are reported, not thrown
  const auto pcfg = ScenarioConfig::prior(3, 60, VectorXd::Unit(3, 0), 1.0);
  const auto rows2 =
      sweep(pcfg, factory, SweepAxis::Dim, {3.0, 4.0}, 500, 99, nullptr);
  CHECK(rows2[0].status == "ok");
  CHECK(rows2[1].status != "ok");
}

TEST_CASE("sweep reproduces the qualitative figure shapes") {
  const auto cfg = ScenarioConfig::base(5, 300);
  PredictorFactory factory = [](const ScenarioConfig& c, double) {
    return Predictor(SingleHeadParams::identity_over_v(c.d, 3.0));
  };
  // MSE decreasing in D at fixed v
  const auto d_rows = sweep(cfg, factory, SweepAxis::Examples,
                            {100, 400, 1600}, 20000, 7, nullptr);
  CHECK(d_rows[0].estimate.mean > d_rows[1].estimate.mean);
  CHECK(d_rows[1].estimate.mean > d_rows[2].estimate.mean);

  // MSE increasing in d at fixed v
  const auto dim_rows =
      sweep(cfg, factory, SweepAxis::Dim, {2, 6, 12}, 20000, 8, nullptr);
  CHECK(dim_rows[0].estimate.mean < dim_rows[1].estimate.mean);
  CHECK(dim_rows[1].estimate.mean < dim_rows[2].estimate.mean);
}
