#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "support/toys.hpp"
#include "vswing/dae.hpp"

using namespace vswing;
using Catch::Approx;

namespace {

// least-squares slope of log(err) against log(h)
double fit_slope(const std::vector<double>& h, const std::vector<double>& e) {
  const int n = static_cast<int>(h.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(h[i]), y = std::log(e[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void integrate_to(const DaeSystem& sys, Eigen::VectorXd& x, Eigen::VectorXd& y,
                  double t_end, double h) {
  const int steps = static_cast<int>(std::lround(t_end / h));
  for (int i = 0; i < steps; ++i) {
    const NewtonReport rep = trapezoidal_step(sys, x, y, h, 1e-12, 50);
    REQUIRE(rep.converged);
  }
}

}  // namespace

TEST_CASE("trapezoidal scalar decay matches the closed form") {
  toys::ScalarDecay sys;
  Eigen::VectorXd x(1), y(0);
  x << 1.0;
  const NewtonReport rep = trapezoidal_step(sys, x, y, 0.1, 1e-14, 50);
  REQUIRE(rep.converged);
  CHECK(x(0) == Approx(0.95 / 1.05).margin(1e-12));
}

TEST_CASE("trapezoidal step leaves a fixed point unchanged") {
  toys::Pendulum sys;
  Eigen::VectorXd x(2), y(0);
  x << 0.0, 0.0;  // hanging at rest
  const NewtonReport rep = trapezoidal_step(sys, x, y, 0.05, 1e-12, 50);
  REQUIRE(rep.converged);
  CHECK(x(0) == Approx(0.0).margin(1e-12));
  CHECK(x(1) == Approx(0.0).margin(1e-12));
}

TEST_CASE("second-order convergence on the oscillator") {
  const double t_end = 2.0 * kPi;
  std::vector<double> hs = {0.2, 0.1, 0.05, 0.025};
  std::vector<double> errs;
  for (double h : hs) {
    toys::Oscillator sys;
    Eigen::VectorXd x(2), y(0);
    x << 1.0, 0.0;
    integrate_to(sys, x, y, t_end, h);
    // exact solution returns to (1, 0) after one period
    errs.push_back(std::max(std::abs(x(0) - 1.0), std::abs(x(1))));
  }
  const double slope = fit_slope(hs, errs);
  CHECK(slope == Approx(2.0).margin(0.1));
}

TEST_CASE("second-order convergence on the swing-pair DAE") {
  const double t_end = 1.0;
  const auto run = [&](double h) {
    toys::SwingPairDae sys;
    Eigen::VectorXd x(4), y(2);
    x << 0.3, 1.0005, -0.1, 0.9995;
    y << 0.05, 1.0;
    // consistent algebraic start
    REQUIRE(solve_algebraic(sys, x, y, 1e-13, 100).converged);
    integrate_to(sys, x, y, t_end, h);
    return x;
  };
  const Eigen::VectorXd ref = run(1.0 / 4096.0);
  std::vector<double> hs = {1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
  std::vector<double> errs;
  for (double h : hs)
    errs.push_back((run(h) - ref).lpNorm<Eigen::Infinity>());
  const double slope = fit_slope(hs, errs);
  CHECK(slope == Approx(2.0).margin(0.1));
}

TEST_CASE("swing pair energy drift shrinks quadratically with the step") {
  toys::SwingPair sys;
  const auto drift = [&](double h) {
    Eigen::VectorXd x(4), y(0);
    x << 0.6, 1.0, 0.0, 1.0;
    const double e0 = sys.energy(x);
    integrate_to(sys, x, y, 2.0, h);
    return std::abs(sys.energy(x) - e0);
  };
  const double d1 = drift(0.004);
  const double d2 = drift(0.002);
  CHECK(d1 / d2 == Approx(4.0).margin(0.8));
}

TEST_CASE("pendulum energy drift is second order over one swing") {
  toys::Pendulum sys;
  const auto drift = [&](double h) {
    Eigen::VectorXd x(2), y(0);
    x << 2.2, 0.0;  // wide swing, clearly nonlinear
    const double e0 = toys::Pendulum::energy(x);
    integrate_to(sys, x, y, 4.0, h);
    return std::abs(toys::Pendulum::energy(x) - e0);
  };
  const double d1 = drift(0.02);
  const double d2 = drift(0.01);
  CHECK(d1 / d2 == Approx(4.0).margin(0.8));
}

TEST_CASE("algebraic solve finds the root and reports failures") {
  toys::SquareRoot sys;
  Eigen::VectorXd x(0), y(1);
  y << 1.0;
  const NewtonReport rep = solve_algebraic(sys, x, y, 1e-12, 100);
  REQUIRE(rep.converged);
  CHECK(y(0) == Approx(2.0).margin(1e-10));

  y << -1.0;  // converges to the other branch
  REQUIRE(solve_algebraic(sys, x, y, 1e-12, 100).converged);
  CHECK(y(0) == Approx(-2.0).margin(1e-10));
}

TEST_CASE("newton reports the worst residual row on failure") {
  toys::SquareRoot sys;
  Eigen::VectorXd x(0), y(1);
  y << 1.0;
  const NewtonReport rep = solve_algebraic(sys, x, y, 1e-12, 1);  // too few
  CHECK_FALSE(rep.converged);
  CHECK(rep.worst_row == 0);
  CHECK(rep.residual > 0.0);
}
