#pragma once

// Exact stationary mean field fbar(theta) and its Jacobian by enumeration,
// Monte-Carlo estimates, asymptotic covariance reports, the epsilon expansion
// of the regularized gain, the GQ linearization, the dist_N diagnostic, and
// the Watkins rate probe.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zapq/algorithms.hpp"
#include "zapq/error.hpp"
#include "zapq/funcapprox.hpp"
#include "zapq/io.hpp"
#include "zapq/linalg.hpp"
#include "zapq/mdp.hpp"
#include "zapq/rng.hpp"

namespace zapq {

/// Steady-state expectations for (mdp, family, stationary policy). Holds its
/// own copies, so it may outlive its arguments.
class MeanField {
 public:
  MeanField(FiniteMdp mdp, QFamily fam, BehaviorPolicy policy)
      : mdp_(std::move(mdp)), fam_(std::move(fam)), policy_(std::move(policy)) {
    require(policy_.is_stationary(), ErrorCode::InvalidArgument, "MeanField: policy must be stationary");
    require(fam_.num_states() == mdp_.num_states() && fam_.num_actions() == mdp_.num_actions(),
            ErrorCode::InvalidArgument, "MeanField: family does not match the MDP");
    transition_ = joint_transition(mdp_, policy_);
    pi_ = stationary_of(transition_);
    const auto m = static_cast<Eigen::Index>(mdp_.num_pairs()), nx = static_cast<Eigen::Index>(mdp_.num_states());
    pair_kernel_.resize(m, nx);
    for (std::size_t x = 0; x < mdp_.num_states(); ++x)
      for (std::size_t u = 0; u < mdp_.num_actions(); ++u)
        pair_kernel_.row(static_cast<Eigen::Index>(mdp_.pair(x, u))) = mdp_.kernel(u).row(static_cast<Eigen::Index>(x));
  }

  const FiniteMdp& mdp() const { return mdp_; }
  const QFamily& family() const { return fam_; }
  const BehaviorPolicy& policy() const { return policy_; }
  /// Stationary pmf over pairs, indexed x * num_actions + u.
  const Vector& pi() const { return pi_; }
  Matrix Pi() const { return pi_.asDiagonal(); }
  const Matrix& joint() const { return transition_; }
  /// P((x,u), x') as a num_pairs x num_states matrix.
  const Matrix& P() const { return pair_kernel_; }

  /// S_phi: num_states x num_pairs selector of (x', phi(x')), with rows of
  /// terminal states zeroed.
  Matrix selector(const std::vector<std::size_t>& policy) const {
    Matrix s = Matrix::Zero(static_cast<Eigen::Index>(mdp_.num_states()), static_cast<Eigen::Index>(mdp_.num_pairs()));
    for (std::size_t x = 0; x < mdp_.num_states(); ++x)
      s(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(mdp_.pair(x, policy[x]))) = mdp_.continuation(x);
    return s;
  }

  /// fbar(theta) = E[D(theta, Phi) zeta], zeta taken at theta.
  Vector fbar(const Theta& theta) const {
    const Matrix q = q_table(fam_, theta);
    const Vector v = continuation_values(q);
    const Vector ahead = pair_kernel_ * v;
    Vector out = Vector::Zero(theta.size());
    for (std::size_t x = 0; x < mdp_.num_states(); ++x)
      for (std::size_t u = 0; u < mdp_.num_actions(); ++u) {
        const auto k = static_cast<Eigen::Index>(mdp_.pair(x, u));
        if (pi_[k] == 0.0) continue;
        const double td = mdp_.reward(x, u) + mdp_.gamma() * ahead[k] - q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u));
        accumulate(out, theta, x, u, pi_[k] * td);
      }
    return out;
  }

  /// A(theta) = E[zeta (gamma 1{x'} grad Q(x', phi_theta(x')) - grad Q(x,u))^T]
  /// with lowest-index tie-breaking for phi_theta. For networks the
  /// D * d(zeta) term is not included.
  Matrix fbar_jacobian(const Theta& theta) const {
    const auto d = theta.size();
    const auto policy = greedy_policy(fam_, theta);
    if (fam_.kind() == FamilyKind::Tabular)
      return Pi() * (mdp_.gamma() * pair_kernel_ * selector(policy) - Matrix::Identity(d, d));
    std::vector<Vector> next_grad(mdp_.num_states());
    for (std::size_t x = 0; x < mdp_.num_states(); ++x)
      next_grad[x] = mdp_.continuation(x) * q_gradient(fam_, theta, x, policy[x]);
    Matrix a = Matrix::Zero(d, d);
    for (std::size_t x = 0; x < mdp_.num_states(); ++x)
      for (std::size_t u = 0; u < mdp_.num_actions(); ++u) {
        const auto k = static_cast<Eigen::Index>(mdp_.pair(x, u));
        if (pi_[k] == 0.0) continue;
        const Vector zeta = q_gradient(fam_, theta, x, u);
        Vector direction = -zeta;
        for (std::size_t xn = 0; xn < mdp_.num_states(); ++xn) {
          const double p = pair_kernel_(k, static_cast<Eigen::Index>(xn));
          if (p != 0.0) direction += (mdp_.gamma() * p) * next_grad[xn];
        }
        a.noalias() += pi_[k] * zeta * direction.transpose();
      }
    return a;
  }

  /// Same field with the reward set to zero.
  MeanField reward_free() const {
    FiniteMdp zero(mdp_.kernels(), Matrix::Zero(mdp_.rewards().rows(), mdp_.rewards().cols()), mdp_.gamma(),
                   mdp_.terminal(), mdp_.horizon_cap(), mdp_.initial());
    return MeanField(std::move(zero), fam_, policy_);
  }

 private:
  Vector continuation_values(const Matrix& q) const {
    Vector v = q.rowwise().maxCoeff();
    for (std::size_t x = 0; x < mdp_.num_states(); ++x) v[static_cast<Eigen::Index>(x)] *= mdp_.continuation(x);
    return v;
  }

  void accumulate(Vector& out, const Theta& theta, std::size_t x, std::size_t u, double weight) const {
    switch (fam_.kind()) {
      case FamilyKind::Tabular: out[static_cast<Eigen::Index>(fam_.pair(x, u))] += weight; return;
      case FamilyKind::Linear: out += weight * fam_.basis().row(static_cast<Eigen::Index>(fam_.pair(x, u))).transpose(); return;
      case FamilyKind::Mlp: out += weight * q_gradient(fam_, theta, x, u); return;
    }
  }

  FiniteMdp mdp_;
  QFamily fam_;
  BehaviorPolicy policy_;
  Matrix transition_;
  Vector pi_;
  Matrix pair_kernel_;
};

/// Batch-means estimate of fbar from a simulated stationary chain.
struct MonteCarloEstimate {
  Vector mean;
  Vector std_error;  // per-coordinate standard error
  std::size_t samples = 0;
};

inline MonteCarloEstimate fbar_monte_carlo(const MeanField& mf, const Theta& theta, std::size_t n, std::uint64_t seed,
                                           std::size_t batches = 100, std::size_t burn_in = 1000) {
  require(batches >= 2 && n >= batches, ErrorCode::InvalidArgument, "fbar_monte_carlo: need n >= batches >= 2");
  const QFamily& fam = mf.family();
  ChainSimulator sim(mf.mdp(), mf.policy(), seed);
  for (std::size_t i = 0; i < burn_in; ++i) sim.next();
  const std::size_t per_batch = n / batches;
  const auto d = theta.size();
  Matrix batch_means(d, static_cast<Eigen::Index>(batches));
  for (std::size_t b = 0; b < batches; ++b) {
    Vector acc = Vector::Zero(d);
    for (std::size_t i = 0; i < per_batch; ++i) {
      const ChainSample s = sim.next();
      acc += td_error(mf.mdp(), fam, theta, s) * eligibility(fam, theta, s.state, s.action);
    }
    batch_means.col(static_cast<Eigen::Index>(b)) = acc / static_cast<double>(per_batch);
  }
  MonteCarloEstimate out;
  out.samples = per_batch * batches;
  out.mean = batch_means.rowwise().mean();
  const Matrix centered = batch_means.colwise() - out.mean;
  const double nb = static_cast<double>(batches);
  out.std_error = (centered.array().square().rowwise().sum() / (nb - 1.0) / nb).sqrt();
  return out;
}

/// Root of fbar for tabular/linear families by Newton iteration on the
/// piecewise-affine field (policy iteration in disguise).
inline Theta find_root(const MeanField& mf, Theta theta, double tol = 1e-12, std::size_t max_iterations = 200) {
  require(mf.family().is_linear(), ErrorCode::NotLinearFamily, "find_root: needs a tabular or linear family");
  for (std::size_t it = 0; it < max_iterations; ++it) {
    const Vector f = mf.fbar(theta);
    if (f.lpNorm<Eigen::Infinity>() <= tol) return theta;
    Eigen::FullPivLU<Matrix> lu(mf.fbar_jacobian(theta));
    require(lu.isInvertible(), ErrorCode::SingularJacobian, "find_root: singular Jacobian");
    theta -= lu.solve(f);
  }
  const Vector f = mf.fbar(theta);
  require(f.lpNorm<Eigen::Infinity>() <= 1e3 * tol, ErrorCode::Diverged, "find_root: Newton iteration did not converge");
  return theta;
}

/// Long-run covariance of the centered update D(theta, Phi) zeta at theta.
inline Matrix update_noise_covariance(const MeanField& mf, const Theta& theta) {
  const Vector mean = mf.fbar(theta);
  const FiniteMdp& mdp = mf.mdp();
  const QFamily& fam = mf.family();
  return noise_covariance(mdp, mf.policy(), [&](const ChainSample& s) -> Vector {
    return td_error(mdp, fam, theta, s) * eligibility(fam, theta, s.state, s.action) - mean;
  });
}

/// Q table as a tabular parameter vector.
inline Theta table_to_theta(const Matrix& q) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = q;
  return Eigen::Map<const Vector>(rm.data(), rm.size());
}

// ---- asymptotic covariance ---------------------------------------------------

struct CovarianceReport {
  Matrix a_star;
  Matrix sigma_delta;
  Matrix gain;
  std::optional<Matrix> sigma_theta;  // empty means infinite
  std::vector<double> eig_real_parts;  // of I/2 + G A*, descending
  std::optional<Matrix> sigma_optimal;
  std::optional<Matrix> gap;

  bool finite() const { return sigma_theta.has_value(); }
};

inline bool is_singular(const Matrix& a) {
  if (a.size() == 0) return false;
  Eigen::FullPivLU<Matrix> lu(a);
  return lu.rank() < a.rows() || !lu.isInvertible();
}

/// Sigma_theta for the linearized recursion with gain G, the optimal
/// covariance A*^{-1} Sigma_Delta A*^{-T}, and the gap between them. The gap
/// is solved from its own Lyapunov equation, which avoids the cancellation
/// of subtracting two nearby matrices.
inline CovarianceReport asymptotic_covariance(const Matrix& a_star, const Matrix& sigma_delta, const Matrix& gain,
                                              bool with_optimal = true) {
  require_square(a_star, "asymptotic_covariance");
  const auto d = a_star.rows();
  require(sigma_delta.rows() == d && sigma_delta.cols() == d && gain.rows() == d && gain.cols() == d,
          ErrorCode::InvalidArgument, "asymptotic_covariance: dimension mismatch");
  require(is_symmetric(sigma_delta), ErrorCode::Asymmetric, "asymptotic_covariance: Sigma_Delta is not symmetric");
  CovarianceReport r{a_star, sigma_delta, gain, std::nullopt, {}, std::nullopt, std::nullopt};
  const Matrix m = 0.5 * Matrix::Identity(d, d) + gain * a_star;
  r.eig_real_parts = eig_real_parts(m);
  if (with_optimal) {
    require(!is_singular(a_star), ErrorCode::SingularAstar, "asymptotic_covariance: A* is singular");
    const Matrix inv = a_star.fullPivLu().inverse();
    r.sigma_optimal = inv * sigma_delta * inv.transpose();
    *r.sigma_optimal = (0.5 * (*r.sigma_optimal + r.sigma_optimal->transpose())).eval();
  }
  if (r.eig_real_parts.empty() || r.eig_real_parts.front() < 0.0) {
    Matrix noise = gain * sigma_delta * gain.transpose();
    r.sigma_theta = solve_lyapunov(m, 0.5 * (noise + noise.transpose()));
    if (with_optimal) {
      const Matrix g_tilde = gain + a_star.fullPivLu().inverse();
      Matrix gap_noise = g_tilde * sigma_delta * g_tilde.transpose();
      r.gap = solve_lyapunov(m, 0.5 * (gap_noise + gap_noise.transpose()));
    }
  }
  return r;
}

inline io::Json report_to_json(const CovarianceReport& r) {
  io::Json j;
  j["A_star"] = io::to_json(r.a_star);
  j["Sigma_Delta"] = io::to_json(r.sigma_delta);
  j["gain"] = io::to_json(r.gain);
  j["Sigma_theta"] = r.sigma_theta ? io::to_json(*r.sigma_theta) : io::Json("infinite");
  j["eig_real_parts"] = r.eig_real_parts;
  j["Sigma_optimal"] = r.sigma_optimal ? io::to_json(*r.sigma_optimal) : io::Json(nullptr);
  j["gap"] = r.gap ? io::to_json(*r.gap) : io::Json(nullptr);
  return j;
}

// ---- epsilon expansion ---------------------------------------------------------

struct EpsilonTerm {
  double epsilon;
  Matrix sigma;      // Sigma_theta^eps
  Matrix remainder;  // Sigma^eps - Sigma* - eps^2 Sigma2
  std::vector<double> eig_real_parts;
  bool eig_real = true;  // eigenvalues of I/2 + G_eps A* all real
};

struct EpsilonExpansion {
  Matrix sigma_optimal;
  Matrix sigma2;  // (A A^T A)^{-1} Sigma_Delta (A^T A A^T)^{-1}
  std::vector<EpsilonTerm> terms;
  std::vector<double> ratios;  // ||R(eps_k)|| / ||R(eps_{k+1})||
  double fitted_order = std::numeric_limits<double>::quiet_NaN();
};

inline EpsilonExpansion zap_epsilon_expansion(const Matrix& a_star, const Matrix& sigma_delta,
                                              const std::vector<double>& eps_list) {
  require_square(a_star, "zap_epsilon_expansion");
  const auto d = a_star.rows();
  require(!is_singular(a_star), ErrorCode::SingularAstar, "zap_epsilon_expansion: A* is singular");
  const Matrix ata = a_star.transpose() * a_star;
  const double lam_min = symmetric_eigenvalues(ata)[0];
  const Matrix inv = a_star.fullPivLu().inverse();

  EpsilonExpansion out;
  out.sigma_optimal = inv * sigma_delta * inv.transpose();
  const Matrix left = (a_star * a_star.transpose() * a_star).fullPivLu().inverse();
  out.sigma2 = left * sigma_delta * left.transpose();

  for (double eps : eps_list) {
    require(eps > 0.0 && eps < lam_min, ErrorCode::EpsilonTooLarge,
            "zap_epsilon_expansion: eps = " + std::to_string(eps) + " is not in (0, lambda_min(A^T A) = " +
                std::to_string(lam_min) + ")");
    Matrix normal = ata;
    normal.diagonal().array() += eps;
    const Matrix g = -spd_solve(normal, a_star.transpose());
    // G_eps + A^{-1} = eps (eps I + A^T A)^{-1} A^{-1}, formed without cancellation.
    const Matrix g_tilde = eps * spd_solve(normal, inv);
    const Matrix m = 0.5 * Matrix::Identity(d, d) + g * a_star;
    EpsilonTerm term;
    term.epsilon = eps;
    const ComplexVector ev = eigenvalues(m);
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (std::abs(ev[i].imag()) > 1e-9 * (1.0 + std::abs(ev[i].real()))) term.eig_real = false;
    term.eig_real_parts = eig_real_parts(m);
    Matrix gap_noise = g_tilde * sigma_delta * g_tilde.transpose();
    const Matrix gap = solve_lyapunov(m, 0.5 * (gap_noise + gap_noise.transpose()));
    term.sigma = out.sigma_optimal + gap;
    term.remainder = gap - eps * eps * out.sigma2;
    out.terms.push_back(std::move(term));
  }
  for (std::size_t k = 0; k + 1 < out.terms.size(); ++k)
    out.ratios.push_back(out.terms[k].remainder.norm() / out.terms[k + 1].remainder.norm());
  if (out.terms.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(out.terms.size());
    for (const auto& t : out.terms) {
      const double x = std::log(t.epsilon), y = std::log(t.remainder.norm());
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    out.fitted_order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return out;
}

// ---- GQ linearization ----------------------------------------------------------

struct GqLinearization {
  Matrix a_gq;  // -H^T H with H = Pi^{1/2} [I - gamma P S_{phi*}]
  double lambda_max;
  double bound;  // -(1 - gamma)^2
  bool bound_holds;
};

inline GqLinearization gq_linearization(const FiniteMdp& mdp, const BehaviorPolicy& policy) {
  const QFamily fam = QFamily::tabular(mdp.num_states(), mdp.num_actions());
  const MeanField mf(mdp, fam, policy);
  const Theta theta = table_to_theta(q_star(mdp));
  const auto m = static_cast<Eigen::Index>(mdp.num_pairs());
  const Matrix h = mf.pi().cwiseSqrt().asDiagonal() *
                   (Matrix::Identity(m, m) - mdp.gamma() * mf.P() * mf.selector(greedy_policy(fam, theta)));
  GqLinearization out;
  out.a_gq = -(h.transpose() * h);
  out.lambda_max = symmetric_eigenvalues(out.a_gq)[m - 1];
  out.bound = -(1.0 - mdp.gamma()) * (1.0 - mdp.gamma());
  out.bound_holds = out.lambda_max >= out.bound - 1e-10;
  return out;
}

// ---- dist_N --------------------------------------------------------------------

/// Lower bound on sup_{|v| <= 1} max_i [A-hat v - (fbar(theta + v) - fbar(theta))]_i,
/// clipped at 0. Probes: the 2d directions +-e_i first, then uniform draws
/// from the unit ball.
inline double dist_n_estimate(const MeanField& mf, const Matrix& a_hat, const Theta& theta, std::size_t num_probes,
                              std::uint64_t seed) {
  require(mf.family().is_linear(), ErrorCode::NotLinearFamily, "dist_n_estimate: needs a tabular or linear family");
  const auto d = theta.size();
  const Vector base = mf.fbar(theta);
  Rng rng(seed);
  double best = 0.0;
  for (std::size_t k = 0; k < num_probes; ++k) {
    Vector v = Vector::Zero(d);
    if (k < static_cast<std::size_t>(2 * d)) {
      v[static_cast<Eigen::Index>(k / 2)] = k % 2 == 0 ? 1.0 : -1.0;
    } else {
      for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
      v *= std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / v.norm();
    }
    const Vector gap = a_hat * v - (mf.fbar(theta + v) - base);
    best = std::max(best, gap.maxCoeff());
  }
  return best;
}

// ---- Watkins rate probe ----------------------------------------------------------

enum class WatkinsNormalization {
  PerVisit,  // step size scaled by inverse visit frequency: A = gamma P S - I
  Global,    // common step size: A = Pi (gamma P S - I)
};

struct RateProbe {
  Matrix a;                           // linearization at Q*
  std::vector<double> eig_real_parts;  // of I/2 + g A, descending
  bool condition_holds;               // all real parts negative
};

inline RateProbe watkins_rate_probe(const FiniteMdp& mdp, double g,
                                    WatkinsNormalization normalization = WatkinsNormalization::PerVisit,
                                    std::optional<BehaviorPolicy> policy = std::nullopt) {
  require(g > 0.0, ErrorCode::InvalidArgument, "watkins_rate_probe: gain must be positive");
  const QFamily fam = QFamily::tabular(mdp.num_states(), mdp.num_actions());
  const MeanField mf(mdp, fam, policy ? *policy : BehaviorPolicy::uniform(mdp.num_states(), mdp.num_actions()));
  const Theta theta = table_to_theta(q_star(mdp));
  const auto m = static_cast<Eigen::Index>(mdp.num_pairs());
  Matrix a = mdp.gamma() * mf.P() * mf.selector(greedy_policy(fam, theta)) - Matrix::Identity(m, m);
  if (normalization == WatkinsNormalization::Global) a = mf.Pi() * a;
  RateProbe out;
  out.eig_real_parts = eig_real_parts(0.5 * Matrix::Identity(m, m) + g * a);
  out.condition_holds = out.eig_real_parts.front() < 0.0;
  out.a = std::move(a);
  return out;
}

}  // namespace zapq
