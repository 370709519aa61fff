#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "icl/theory.hpp"

using namespace icl;

namespace {

const std::vector<int> kDims{1, 2, 5, 10};
const std::vector<double> kVs{1.5, 1.8, 2.2, 3.0, 4.5, 7.0};  // v^2 in (2.25, 49)
const std::vector<long> kDs{100, 1000};

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("moment_theta4") {
  CHECK(moment_theta4(1) == 3.0);
  CHECK(moment_theta4(2) == 2.0);
  CHECK(moment_theta4(1000) == doctest::Approx(1.002).epsilon(1e-15));
  CHECK_THROWS_AS(moment_theta4(0), std::invalid_argument);
}

TEST_CASE("quadratic_loss") {
  const int d = 3;
  const double v = 2.0;
  CHECK(quadratic_loss(MatrixXd::Identity(d, d) / v, VectorXd::Zero(d), v, d) ==
        doctest::Approx(0.0));
  CHECK(quadratic_loss(MatrixXd::Zero(d, d), VectorXd::Zero(d), 5.0, d) ==
        doctest::Approx(1.0));
  // d=1, A=0, b=1, v=2: trace term 1 plus v^2 b^2 E theta^4 = 4*3
  MatrixXd A0(1, 1);
  A0 << 0.0;
  VectorXd b1(1);
  b1 << 1.0;
  CHECK(quadratic_loss(A0, b1, 2.0, 1) == doctest::Approx(13.0).epsilon(1e-14));
  CHECK_THROWS_AS(
      quadratic_loss(MatrixXd::Identity(2, 2), VectorXd::Zero(3), 1.0, 2),
      std::invalid_argument);
}

TEST_CASE("loss_single") {
  CHECK_FALSE(loss_single(5, 1000, 1.2).valid);
  CHECK_FALSE(loss_single(5, 1000, std::nextafter(std::sqrt(2.0), 0.0)).valid);

  const TheoryValue t = loss_single(1, 1000, 2.0);
  REQUIRE(t.valid);
  CHECK(rel_diff(t.value, 8.485281374238571e-3) < 1e-12);
  CHECK(t.condition_margin == doctest::Approx(2.0));

  // frozen reference values
  CHECK(rel_diff(loss_single(5, 1000, 3.0).value, 0.019279493935187873) < 1e-12);
  CHECK(rel_diff(loss_single(10, 1000, 3.0).value, 0.036137391733036414) < 1e-12);

  // exact 1/D homogeneity
  for (int d : {1, 5}) {
    const double a = loss_single(d, 500, 3.0).value * 500;
    const double b = loss_single(d, 2000, 3.0).value * 2000;
    CHECK(rel_diff(a, b) < 1e-12);
  }
}

TEST_CASE("loss_multi reduces to loss_single at c = 1") {
  for (int d : kDims)
    for (double v : kVs)
      for (long D : kDs) {
        const TheoryValue s = loss_single(d, D, v);
        const TheoryValue m = loss_multi(d, D, v, 1.0);
        REQUIRE(s.valid);
        REQUIRE(m.valid);
        CHECK(rel_diff(s.value, m.value) < 1e-12);
      }
}

TEST_CASE("loss_multi closed cases") {
  // c = 1/2 collapses the second head
  const int d = 5;
  const long D = 1000;
  const double v = 3.0;
  const double v2 = v * v;
  const double r1 = v2 / (v2 - 0.5);
  const double expect = 4.0 * v2 / D * (std::pow(r1, 2.5) - 1.0) + v2 / D +
                        std::pow(r1, 3.5) / D;
  CHECK(rel_diff(loss_multi(d, D, v, 0.5).value, expect) < 1e-12);
  CHECK(rel_diff(loss_multi(d, D, v, 0.5).value, 0.015751424220584863) < 1e-12);

  CHECK_FALSE(loss_multi(d, D, 1.0, 0.8).valid);

  // 1/D homogeneity
  CHECK(rel_diff(loss_multi(d, 500, v, 0.3).value * 500,
                 loss_multi(d, 2000, v, 0.3).value * 2000) < 1e-12);
}

TEST_CASE("noisy losses") {
  // sigma_eps = 0 reduction, exact algebra
  for (int d : kDims)
    for (double v : kVs)
      CHECK(rel_diff(loss_single_noisy(d, 1000, v, 0.0).value,
                     loss_single(d, 1000, v).value) < 1e-12);
  CHECK(rel_diff(loss_single_noisy(5, 1000, 3.0, 0.0).value,
                 loss_single(5, 1000, 3.0).value) < 1e-12);

  CHECK(rel_diff(loss_single_noisy(5, 1000, 3.0, 0.5).value,
                 0.2734968832335102) < 1e-12);

  // irreducible floor as D grows
  CHECK(loss_single_noisy(5, 1000000000L, 3.0, 1.0).value ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK_FALSE(loss_single_noisy(5, 1000, 1.0, 0.5).valid);

  for (double c : {0.3, 0.65, 1.0}) {
    CHECK(rel_diff(loss_multi_noisy(5, 1000, 3.0, c, 0.0).value,
                   loss_multi(5, 1000, 3.0, c).value) < 1e-12);
    CHECK(rel_diff(loss_multi_noisy(5, 1000, 3.0, 1.0, 0.7).value,
                   loss_single_noisy(5, 1000, 3.0, 0.7).value) < 1e-12);
  }
  CHECK(loss_multi_noisy(5, 1000000000L, 3.0, 0.5, 2.0).value ==
        doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("prior scaling") {
  const int d = 5;
  const long D = 1000;
  const double v = 3.0;
  {
    const TheoryValue base = loss_single(d, D, v);
    const TheoryValue p = loss_prior(d, D, v, VectorXd::Zero(d), 1.0);
    CHECK(rel_diff(base.value, p.value) < 1e-14);
  }
  {
    const TheoryValue base = loss_single(d, D, v);
    const TheoryValue p = loss_prior(d, D, v, VectorXd::Unit(d, 0), 1.0);
    CHECK(rel_diff(p.value, 2.0 * base.value) < 1e-14);
  }
  {
    // affine in t^2 with slope loss_single
    const double s = loss_single(d, D, v).value;
    for (double t : {0.5, 1.5, 3.0}) {
      const TheoryValue p = loss_prior(d, D, v, t * VectorXd::Unit(d, 0), 1.0);
      CHECK(rel_diff(p.value, (t * t + 1.0) * s) < 1e-12);
    }
  }
  {
    const TheoryValue m = loss_multi(d, D, v, 0.4);
    const TheoryValue p =
        loss_prior(d, D, v, VectorXd::Unit(d, 0), 1.0, 0.4, true);
    CHECK(rel_diff(p.value, 2.0 * m.value) < 1e-14);
  }
}

TEST_CASE("curvature at c = 1") {
  CHECK_THROWS_AS(curvature_at_c1(5, 1000, 1.0), std::domain_error);

  CHECK(rel_diff(curvature_at_c1(5, 1000, 3.0), -0.07987218916006406) < 1e-12);

  for (int d : kDims)
    for (double v : kVs) {
      const long D = 1000;
      const double analytic = curvature_at_c1(d, D, v);
      CHECK(analytic < 0.0);
      const double h = 1e-4;
      const double fd = (loss_multi(d, D, v, 1.0 + h).value -
                         2.0 * loss_multi(d, D, v, 1.0).value +
                         loss_multi(d, D, v, 1.0 - h).value) /
                        (h * h);
      CHECK(rel_diff(analytic, fd) < 1e-4);
    }

  // output scales exactly as 1/D
  CHECK(rel_diff(curvature_at_c1(5, 500, 3.0) * 500,
                 curvature_at_c1(5, 2000, 3.0) * 2000) < 1e-12);
}

TEST_CASE("optimal_c beats the single head") {
  const auto [c_star, loss_star] = optimal_c(5, 1000, 3.0);
  CHECK(c_star > 0.0);
  CHECK(c_star < 1.0);
  const double single = loss_single(5, 1000, 3.0).value;
  CHECK(loss_star < single - 1e-6);

  const auto [c2, loss2] = optimal_c(5, 1000, 3.0, 0.01, 1.0, 10000);
  CHECK(rel_diff(loss_star, loss2) < 1e-8);

  CHECK_THROWS(optimal_c(5, 1000, 3.0, 0.5, 0.4));
}

TEST_CASE("local optimality residual") {
  const int d = 3;
  const VectorXd theta = VectorXd::Constant(d, 0.7);
  CHECK(local_optimum_check(MatrixXd::Zero(d, d), VectorXd::Zero(d), 1.0,
                            theta, 2.0) == doctest::Approx(0.0));
  const double sx = 1.3;
  CHECK(local_optimum_check(MatrixXd::Identity(d, d), VectorXd::Zero(d),
                            1.0 / (1.0 + sx * sx), theta, sx) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(local_optimum_check(MatrixXd::Identity(d, d), VectorXd::Zero(d), 1.0,
                            theta, 1.0) ==
        doctest::Approx(std::sqrt(static_cast<double>(d))).epsilon(1e-12));
}

TEST_CASE("shifted local limit") {
  CHECK(shifted_local_limit(1.0, 0.0) == 0.0);
  CHECK(shifted_local_limit(3.0, 1.0) == doctest::Approx(9.0));
  for (double sx : {0.1, 0.5, 1.0})
    CHECK(shifted_local_limit(1.0 - sx * sx, sx) ==
          doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("loss_single is U-shaped in v") {
  for (int d : {2, 5, 10}) {
    std::vector<double> grid;
    for (double v = 1.6; v <= 10.0 + 1e-9; v += 0.1) grid.push_back(v);
    std::size_t best = 0;
    double best_val = 1e300;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const TheoryValue t = loss_single(d, 1000, grid[i]);
      if (t.valid && t.value < best_val) {
        best_val = t.value;
        best = i;
      }
    }
    CHECK(best > 0);
    CHECK(best < grid.size() - 1);
  }
}
