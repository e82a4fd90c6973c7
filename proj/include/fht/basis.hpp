#pragma once

// Orthonormal sine-cosine Fourier basis on [-B, B].
//
// Ordering: index 0 is the constant 1/sqrt(2B); index 2j-1 is
// sin(j pi x / B)/sqrt(B); index 2j is cos(j pi x / B)/sqrt(B), j = 1..q.

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace fht {

struct FourierBasis {
  double B = 2.5;
  int q = 1;

  FourierBasis() = default;
  FourierBasis(double half_width, int max_degree) : B(half_width), q(max_degree) {
    if (B <= 0.0) throw std::invalid_argument("FourierBasis: B must be positive");
    if (q < 0) throw std::invalid_argument("FourierBasis: q must be nonnegative");
  }

  int size() const { return 2 * q + 1; }

  // Fourier degree of a basis index: 0 -> 0, 2j-1 and 2j -> j.
  static int degree_of(int i) { return (i + 1) / 2; }
  static int sine_index(int degree) { return 2 * degree - 1; }
  static int cosine_index(int degree) { return 2 * degree; }

  double eval_one(int i, double x) const {
    if (i == 0) return 1.0 / std::sqrt(2.0 * B);
    int j = degree_of(i);
    double arg = j * M_PI * x / B;
    double s = 1.0 / std::sqrt(B);
    return (i % 2 == 1) ? s * std::sin(arg) : s * std::cos(arg);
  }

  Eigen::VectorXd eval(double x) const {
    Eigen::VectorXd v(size());
    v(0) = 1.0 / std::sqrt(2.0 * B);
    double s = 1.0 / std::sqrt(B);
    for (int j = 1; j <= q; ++j) {
      double arg = j * M_PI * x / B;
      v(2 * j - 1) = s * std::sin(arg);
      v(2 * j) = s * std::cos(arg);
    }
    return v;
  }

  // e_i = integral of psi_i over [-B, B]; only the constant survives.
  Eigen::VectorXd integral_vector() const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(size());
    e(0) = std::sqrt(2.0 * B);
    return e;
  }

  // m1_i = integral of x psi_i(x); nonzero on sine entries only.
  // m2_i = integral of x^2 psi_i(x); nonzero on constant and cosine entries.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> moment_vectors() const {
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(size());
    m2(0) = (2.0 * B * B * B / 3.0) / std::sqrt(2.0 * B);
    for (int j = 1; j <= q; ++j) {
      double sign = (j % 2 == 0) ? 1.0 : -1.0;  // (-1)^j
      m1(2 * j - 1) = -sign * 2.0 * B * B / (j * M_PI) / std::sqrt(B);
      m2(2 * j) = sign * 4.0 * B * B * B / (j * j * M_PI * M_PI) / std::sqrt(B);
    }
    return {m1, m2};
  }

  bool operator==(const FourierBasis& o) const { return B == o.B && q == o.q; }
};

}  // namespace fht
