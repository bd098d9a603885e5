#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// These deliberately avoid the library's own solvers where it matters.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "zapq/rng.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix random_matrix(zapq::Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline Vector random_vector(zapq::Rng& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
  return random_matrix(rng, n, 1, lo, hi);
}

/// Stable matrix -(L L^T + I/2) + K with K skew: the symmetric part is
/// negative definite, so every eigenvalue has real part <= -1/2.
inline Matrix random_hurwitz(zapq::Rng& rng, Eigen::Index d) {
  const Matrix l = random_matrix(rng, d, d);
  const Matrix k = random_matrix(rng, d, d);
  return -(l * l.transpose() + 0.5 * Matrix::Identity(d, d)) + (k - k.transpose());
}

inline Matrix random_psd(zapq::Rng& rng, Eigen::Index d) {
  const Matrix b = random_matrix(rng, d, d);
  return b * b.transpose();
}

/// exp(A t) by scaling and squaring of a Taylor series.
inline Matrix expm(const Matrix& a, double t) {
  const Matrix at = a * t;
  int squarings = 0;
  double norm = at.lpNorm<1>();
  while (norm > 0.5) {
    norm /= 2;
    ++squarings;
  }
  const Matrix s = at / std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(a.rows(), a.cols()), sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * s / k;
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// int_0^inf exp(A t) S exp(A^T t) dt by adaptive Simpson on [0, T] with T
/// chosen so the tail is negligible.
inline Matrix lyapunov_quadrature(const Matrix& a, const Matrix& s, double tol = 1e-10) {
  auto integrand = [&](double t) {
    const Matrix e = expm(a, t);
    return Matrix(e * s * e.transpose());
  };
  double horizon = 1.0;
  while (expm(a, horizon).norm() > 1e-9) horizon *= 2.0;
  std::function<Matrix(double, double, const Matrix&, const Matrix&, const Matrix&, const Matrix&, double, int)> rec =
      [&](double lo, double hi, const Matrix& flo, const Matrix& fmid, const Matrix& fhi, const Matrix& whole,
          double eps, int depth) -> Matrix {
    const double mid = 0.5 * (lo + hi);
    const Matrix fl = integrand(0.5 * (lo + mid)), fr = integrand(0.5 * (mid + hi));
    const Matrix left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid);
    const Matrix right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi);
    if (depth > 40 || (left + right - whole).lpNorm<Eigen::Infinity>() <= 15.0 * eps)
      return Matrix(left + right + (left + right - whole) / 15.0);
    return Matrix(rec(lo, mid, flo, fl, fmid, left, eps / 2, depth + 1) +
                  rec(mid, hi, fmid, fr, fhi, right, eps / 2, depth + 1));
  };
  const Matrix f0 = integrand(0.0), fm = integrand(horizon / 2), f1 = integrand(horizon);
  return rec(0.0, horizon, f0, fm, f1, horizon / 6.0 * (f0 + 4.0 * fm + f1), tol, 0);
}

/// Left Perron vector of a stochastic matrix from the eigen-decomposition of T^T.
inline Vector perron_vector(const Matrix& t) {
  Eigen::EigenSolver<Matrix> es(t.transpose());
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()[i] - 1.0) < std::abs(es.eigenvalues()[best] - 1.0)) best = i;
  Vector v = es.eigenvectors().col(best).real();
  return v / v.sum();
}

/// Truncated autocovariance sum sum_{|k| <= K} E[g(c_k) g(c_0)^T] for a
/// function g of the current state of a chain with transition T, via powers.
inline Matrix truncated_autocovariance(const Matrix& t, const Vector& pi, const Matrix& g, int lags) {
  Matrix sum = g.transpose() * pi.asDiagonal() * g;
  Matrix ahead = g;  // T^k g
  for (int k = 1; k <= lags; ++k) {
    ahead = t * ahead;
    const Matrix ck = ahead.transpose() * pi.asDiagonal() * g;  // E[g(c_k) g(c_0)^T]
    sum += ck + ck.transpose();
  }
  return sum;
}

}  // namespace oracle
