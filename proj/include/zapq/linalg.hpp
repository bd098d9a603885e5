#pragma once

// Dense kernels used throughout: Lyapunov solves, spectra, and the
// regularized matrix gain. Everything is value-in/value-out on Eigen types.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "zapq/error.hpp"

namespace zapq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

/// Default absolute tolerance on residuals.
inline constexpr double kResidualTol = 1e-10;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline void require_square(const Matrix& a, const char* who) {
  require(a.rows() == a.cols(), ErrorCode::InvalidArgument, std::string(who) + ": matrix must be square");
}

/// All eigenvalues of a real square matrix (Hessenberg reduction + shifted QR).
inline ComplexVector eigenvalues(const Matrix& a) {
  require_square(a, "eigenvalues");
  require(all_finite(a), ErrorCode::NonFinite, "eigenvalues: input contains NaN or Inf");
  if (a.size() == 0) return {};
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  require(solver.info() == Eigen::Success, ErrorCode::NonFinite, "eigenvalues: QR iteration did not converge");
  return solver.eigenvalues();
}

/// Real parts of the eigenvalues of `a`, sorted descending, multiplicity kept.
inline std::vector<double> eig_real_parts(const Matrix& a) {
  const ComplexVector ev = eigenvalues(a);
  std::vector<double> re(static_cast<std::size_t>(ev.size()));
  for (Eigen::Index i = 0; i < ev.size(); ++i) re[static_cast<std::size_t>(i)] = ev[i].real();
  std::sort(re.begin(), re.end(), std::greater<>());
  return re;
}

inline bool is_hurwitz(const Matrix& a) {
  const auto re = eig_real_parts(a);
  return re.empty() || re.front() < 0.0;
}

/// Eigenvalues of a symmetric matrix, ascending.
inline Vector symmetric_eigenvalues(const Matrix& s) {
  require_square(s, "symmetric_eigenvalues");
  require(all_finite(s), ErrorCode::NonFinite, "symmetric_eigenvalues: input contains NaN or Inf");
  if (s.size() == 0) return {};
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

inline bool is_symmetric(const Matrix& s, double tol = kResidualTol) {
  return s.rows() == s.cols() && (s - s.transpose()).norm() <= tol * (1.0 + s.norm());
}

/// Solves M X = B for symmetric positive definite M by Cholesky.
inline Matrix spd_solve(const Matrix& m, const Matrix& b) {
  require_square(m, "spd_solve");
  require(m.rows() == b.rows(), ErrorCode::InvalidArgument, "spd_solve: dimension mismatch");
  require(all_finite(m) && all_finite(b), ErrorCode::NonFinite, "spd_solve: input contains NaN or Inf");
  Eigen::LLT<Matrix> llt(m);
  require(llt.info() == Eigen::Success, ErrorCode::NotSPD, "spd_solve: nonpositive pivot in Cholesky factorization");
  return llt.solve(b);
}

/// Regularized Zap gain G = -[eps I + A^T A]^{-1} A^T, computed by a Cholesky
/// solve; no inverse is formed. Finite for every finite A, including A = 0.
/// When eps is below the rounding level of A^T A the Cholesky pivots can go
/// nonpositive; the solve then falls back to an eigendecomposition of A^T A
/// with its spectrum clipped at 0.
inline Matrix zap_gain(const Matrix& a_hat, double eps) {
  require_square(a_hat, "zap_gain");
  require(eps > 0.0, ErrorCode::InvalidArgument, "zap_gain: eps must be positive");
  require(all_finite(a_hat), ErrorCode::NonFinite, "zap_gain: input contains NaN or Inf");
  Matrix normal = a_hat.transpose() * a_hat;
  normal.diagonal().array() += eps;
  Eigen::LLT<Matrix> llt(normal);
  if (llt.info() == Eigen::Success) return -llt.solve(a_hat.transpose());
  Matrix ata = a_hat.transpose() * a_hat;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (ata + ata.transpose()));
  const Vector scale = (eig.eigenvalues().array().max(0.0) + eps).inverse();
  const Matrix& v = eig.eigenvectors();
  return -(v * scale.asDiagonal() * (v.transpose() * a_hat.transpose()));
}

/// Solves A X + X A^T + S = 0 for Hurwitz A and symmetric PSD S via the
/// Kronecker system (I (x) A + A (x) I) vec X = -vec S. Intended for d <= 64;
/// the linear system has d^2 unknowns.
inline Matrix solve_lyapunov(const Matrix& a, const Matrix& s, double tol = kResidualTol) {
  require_square(a, "solve_lyapunov");
  require(a.rows() == s.rows() && a.cols() == s.cols(), ErrorCode::InvalidArgument,
          "solve_lyapunov: A and S must have equal size");
  require(all_finite(a) && all_finite(s), ErrorCode::NonFinite, "solve_lyapunov: input contains NaN or Inf");
  require(is_symmetric(s, tol), ErrorCode::Asymmetric, "solve_lyapunov: S is not symmetric");
  const auto re = eig_real_parts(a);
  require(re.empty() || re.front() < 0.0, ErrorCode::NotHurwitz,
          "solve_lyapunov: A has an eigenvalue with real part " + std::to_string(re.empty() ? 0.0 : re.front()));

  const Eigen::Index d = a.rows();
  if (d == 0) return Matrix(0, 0);
  const Eigen::Index n = d * d;
  Matrix kron = Matrix::Zero(n, n);
  // Column-major vec: vec(A X) = (I (x) A) vec X, vec(X A^T) = (A (x) I) vec X.
  for (Eigen::Index j = 0; j < d; ++j) kron.block(j * d, j * d, d, d) += a;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      if (a(i, j) != 0.0) kron.block(i * d, j * d, d, d).diagonal().array() += a(i, j);

  const Matrix s_sym = 0.5 * (s + s.transpose());
  const Vector rhs = -Eigen::Map<const Vector>(s_sym.data(), n);
  Eigen::PartialPivLU<Matrix> lu(kron);
  Vector x = lu.solve(rhs);
  x += lu.solve(rhs - kron * x);  // one step of iterative refinement

  Matrix sigma = Eigen::Map<const Matrix>(x.data(), d, d);
  sigma = (0.5 * (sigma + sigma.transpose())).eval();
  const double residual = (a * sigma + sigma * a.transpose() + s_sym).norm();
  require(residual <= tol * (1.0 + s_sym.norm()), ErrorCode::Diverged,
          "solve_lyapunov: residual " + std::to_string(residual) + " above tolerance");
  return sigma;
}

}  // namespace zapq
