#pragma once

// Small closed-form systems for exercising the integrator.

#include <cmath>

#include "vswing/dae.hpp"

namespace toys {

/// x' = -x
struct ScalarDecay : vswing::DaeSystem {
  int nx() const override { return 1; }
  int ny() const override { return 0; }
  void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd&,
              Eigen::VectorXd& out) const override {
    out.resize(1);
    out(0) = -x(0);
  }
  void eval_g(const Eigen::VectorXd&, const Eigen::VectorXd&,
              Eigen::VectorXd&) const override {}
  void eval_jacobian(const Eigen::VectorXd&, const Eigen::VectorXd&,
                     std::vector<Eigen::Triplet<double>>& out) const override {
    out.emplace_back(0, 0, -1.0);
  }
};

/// q' = p, p' = -sin(q): pendulum with energy p^2/2 - cos(q)
struct Pendulum : vswing::DaeSystem {
  int nx() const override { return 2; }
  int ny() const override { return 0; }
  void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd&,
              Eigen::VectorXd& out) const override {
    out.resize(2);
    out(0) = x(1);
    out(1) = -std::sin(x(0));
  }
  void eval_g(const Eigen::VectorXd&, const Eigen::VectorXd&,
              Eigen::VectorXd&) const override {}
  void eval_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd&,
                     std::vector<Eigen::Triplet<double>>& out) const override {
    out.emplace_back(0, 1, 1.0);
    out.emplace_back(1, 0, -std::cos(x(0)));
  }
  static double energy(const Eigen::VectorXd& x) {
    return 0.5 * x(1) * x(1) - std::cos(x(0));
  }
};

/// Harmonic oscillator q' = p, p' = -q with analytic solution.
struct Oscillator : vswing::DaeSystem {
  int nx() const override { return 2; }
  int ny() const override { return 0; }
  void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd&,
              Eigen::VectorXd& out) const override {
    out.resize(2);
    out(0) = x(1);
    out(1) = -x(0);
  }
  void eval_g(const Eigen::VectorXd&, const Eigen::VectorXd&,
              Eigen::VectorXd&) const override {}
  void eval_jacobian(const Eigen::VectorXd&, const Eigen::VectorXd&,
                     std::vector<Eigen::Triplet<double>>& out) const override {
    out.emplace_back(0, 1, 1.0);
    out.emplace_back(1, 0, -1.0);
  }
};

/// Two undamped swing rotors joined by a lossless tie:
///   delta_i' = omega_s (omega_i - 1)
///   2 H_i omega_i' = -(+/-) b sin(delta_1 - delta_2)
/// Conserved: H1 (w1-1)^2 + H2 (w2-1)^2 - (b/omega_s) cos(delta_1 - delta_2).
struct SwingPair : vswing::DaeSystem {
  double h1 = 4.0, h2 = 2.5, b = 1.8, omega_s = 2.0 * 3.14159265358979 * 60.0;

  int nx() const override { return 4; }
  int ny() const override { return 0; }
  void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd&,
              Eigen::VectorXd& out) const override {
    const double pe = b * std::sin(x(0) - x(2));
    out.resize(4);
    out(0) = omega_s * (x(1) - 1.0);
    out(1) = -pe / (2.0 * h1);
    out(2) = omega_s * (x(3) - 1.0);
    out(3) = pe / (2.0 * h2);
  }
  void eval_g(const Eigen::VectorXd&, const Eigen::VectorXd&,
              Eigen::VectorXd&) const override {}
  void eval_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd&,
                     std::vector<Eigen::Triplet<double>>& out) const override {
    const double c = b * std::cos(x(0) - x(2));
    out.emplace_back(0, 1, omega_s);
    out.emplace_back(1, 0, -c / (2.0 * h1));
    out.emplace_back(1, 2, c / (2.0 * h1));
    out.emplace_back(2, 3, omega_s);
    out.emplace_back(3, 0, c / (2.0 * h2));
    out.emplace_back(3, 2, -c / (2.0 * h2));
  }
  double energy(const Eigen::VectorXd& x) const {
    return h1 * (x(1) - 1.0) * (x(1) - 1.0) +
           h2 * (x(3) - 1.0) * (x(3) - 1.0) -
           (b / omega_s) * std::cos(x(0) - x(2));
  }
};

/// Same pair but coupled through an algebraic middle bus, making a genuine
/// semi-explicit DAE. Source i injects e_i v sin(delta_i - theta)/x_i and
/// reactive (e_i v cos(delta_i - theta) - v^2)/x_i; both must balance.
struct SwingPairDae : vswing::DaeSystem {
  double h1 = 4.0, h2 = 2.5, e1 = 1.05, e2 = 1.0, x1 = 0.4, x2 = 0.6,
         omega_s = 2.0 * 3.14159265358979 * 60.0;

  int nx() const override { return 4; }
  int ny() const override { return 2; }  // theta, v

  void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
              Eigen::VectorXd& out) const override {
    const double p1 = e1 * y(1) * std::sin(x(0) - y(0)) / x1;
    const double p2 = e2 * y(1) * std::sin(x(2) - y(0)) / x2;
    out.resize(4);
    out(0) = omega_s * (x(1) - 1.0);
    out(1) = -p1 / (2.0 * h1);
    out(2) = omega_s * (x(3) - 1.0);
    out(3) = -p2 / (2.0 * h2);
  }
  void eval_g(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
              Eigen::VectorXd& out) const override {
    const double th = y(0), v = y(1);
    out.resize(2);
    out(0) = e1 * v * std::sin(x(0) - th) / x1 +
             e2 * v * std::sin(x(2) - th) / x2;
    out(1) = (e1 * v * std::cos(x(0) - th) - v * v) / x1 +
             (e2 * v * std::cos(x(2) - th) - v * v) / x2;
  }
  void eval_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     std::vector<Eigen::Triplet<double>>& out) const override {
    const double th = y(0), v = y(1);
    const double c1 = e1 * v * std::cos(x(0) - th) / x1;
    const double c2 = e2 * v * std::cos(x(2) - th) / x2;
    const double s1 = e1 * std::sin(x(0) - th) / x1;
    const double s2 = e2 * std::sin(x(2) - th) / x2;
    // f rows
    out.emplace_back(0, 1, omega_s);
    out.emplace_back(1, 0, -c1 / (2.0 * h1));
    out.emplace_back(1, 4, c1 / (2.0 * h1));
    out.emplace_back(1, 5, -s1 / (2.0 * h1));
    out.emplace_back(2, 3, omega_s);
    out.emplace_back(3, 2, -c2 / (2.0 * h2));
    out.emplace_back(3, 4, c2 / (2.0 * h2));
    out.emplace_back(3, 5, -s2 / (2.0 * h2));
    // g rows
    out.emplace_back(4, 0, c1);
    out.emplace_back(4, 2, c2);
    out.emplace_back(4, 4, -c1 - c2);
    out.emplace_back(4, 5, s1 + s2);
    out.emplace_back(5, 0, -v * s1);
    out.emplace_back(5, 2, -v * s2);
    out.emplace_back(5, 4, v * (s1 + s2));
    out.emplace_back(5, 5, (e1 * std::cos(x(0) - th) - 2.0 * v) / x1 +
                               (e2 * std::cos(x(2) - th) - 2.0 * v) / x2);
  }
};

/// Pure algebraic problem g(y) = y^2 - 4.
struct SquareRoot : vswing::DaeSystem {
  int nx() const override { return 0; }
  int ny() const override { return 1; }
  void eval_f(const Eigen::VectorXd&, const Eigen::VectorXd&,
              Eigen::VectorXd& out) const override {
    out.resize(0);
  }
  void eval_g(const Eigen::VectorXd&, const Eigen::VectorXd& y,
              Eigen::VectorXd& out) const override {
    out.resize(1);
    out(0) = y(0) * y(0) - 4.0;
  }
  void eval_jacobian(const Eigen::VectorXd&, const Eigen::VectorXd& y,
                     std::vector<Eigen::Triplet<double>>& out) const override {
    out.emplace_back(0, 0, 2.0 * y(0));
  }
};

}  // namespace toys
