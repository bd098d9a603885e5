#pragma once

// Learning recursions: Watkins Q-learning, GQ, the generic Zap SA step, and
// Zap Q-learning built on it. Each step is a pure function of its inputs.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "zapq/error.hpp"
#include "zapq/funcapprox.hpp"
#include "zapq/linalg.hpp"
#include "zapq/mdp.hpp"

namespace zapq {

/// Step sizes alpha_n and beta_n for n >= 1.
///   diminishing: alpha_n = g / (n + n0),  beta_n = (1 / (n + n0))^rho
///   constant:    alpha_n = alpha,         beta_n = k_ratio * alpha
class StepSchedule {
 public:
  enum class Kind { Diminishing, Constant };

  static StepSchedule diminishing(double n0 = 100.0, double rho = 0.85, double gain = 1.0) {
    require(n0 >= 0.0 && std::isfinite(n0), ErrorCode::InvalidArgument, "StepSchedule: n0 must be >= 0");
    require(rho > 0.5 && rho < 1.0, ErrorCode::InvalidArgument, "StepSchedule: rho must lie in (0.5, 1)");
    require(gain > 0.0 && std::isfinite(gain), ErrorCode::InvalidArgument, "StepSchedule: gain must be positive");
    StepSchedule s;
    s.kind_ = Kind::Diminishing;
    s.n0_ = n0;
    s.rho_ = rho;
    s.gain_ = gain;
    return s;
  }

  static StepSchedule constant(double alpha, double k_ratio = 100.0) {
    require(alpha > 0.0 && std::isfinite(alpha), ErrorCode::InvalidArgument, "StepSchedule: alpha must be positive");
    require(k_ratio >= 1.0 && std::isfinite(k_ratio), ErrorCode::InvalidArgument, "StepSchedule: k_ratio must be >= 1");
    StepSchedule s;
    s.kind_ = Kind::Constant;
    s.alpha_ = alpha;
    s.k_ratio_ = k_ratio;
    return s;
  }

  Kind kind() const { return kind_; }
  double n0() const { return n0_; }
  double rho() const { return rho_; }
  double gain() const { return gain_; }
  double constant_alpha() const { return alpha_; }
  double k_ratio() const { return k_ratio_; }

  double alpha(std::uint64_t n) const {
    if (kind_ == Kind::Constant) return alpha_;
    return gain_ / (static_cast<double>(n) + n0_);
  }

  double beta(std::uint64_t n) const {
    if (kind_ == Kind::Constant) return k_ratio_ * alpha_;
    return std::pow(1.0 / (static_cast<double>(n) + n0_), rho_);
  }

  /// beta_n / alpha_n; grows like (n + n0)^(1 - rho) for the diminishing kind.
  double ratio(std::uint64_t n) const { return beta(n) / alpha(n); }

 private:
  StepSchedule() = default;
  Kind kind_ = Kind::Diminishing;
  double n0_ = 100.0;
  double rho_ = 0.85;
  double gain_ = 1.0;
  double alpha_ = 0.005;
  double k_ratio_ = 100.0;
};

/// max_u Q(x,u) together with the (lowest-index) maximizing action.
struct GreedyValue {
  double value;
  std::size_t action;
};

inline GreedyValue greedy_value(const QFamily& fam, const Theta& theta, std::size_t x) {
  GreedyValue best{q_value(fam, theta, x, 0), 0};
  for (std::size_t u = 1; u < fam.num_actions(); ++u) {
    const double q = q_value(fam, theta, x, u);
    if (q > best.value) best = {q, u};
  }
  return best;
}

/// D = r(x,u) + gamma * 1{x' not terminal} * max_u' Q(x',u') - Q(x,u).
inline double td_error(const FiniteMdp& mdp, const QFamily& fam, const Theta& theta, const ChainSample& s) {
  const double cont = mdp.continuation(s.next_state);
  const double ahead = cont == 0.0 ? 0.0 : mdp.gamma() * greedy_value(fam, theta, s.next_state).value;
  return mdp.reward(s.state, s.action) + ahead - q_value(fam, theta, s.state, s.action);
}

// ---- Watkins -----------------------------------------------------------------

struct WatkinsState {
  Theta theta;
  std::uint64_t n = 0;
};

/// theta_{n+1} = theta_n + alpha_{n+1} D zeta_n.
inline WatkinsState watkins_step(WatkinsState state, const FiniteMdp& mdp, const QFamily& fam, const ChainSample& s,
                                 const StepSchedule& schedule) {
  const double d = td_error(mdp, fam, state.theta, s);
  const double a = schedule.alpha(state.n + 1);
  if (fam.kind() == FamilyKind::Tabular)
    state.theta[static_cast<Eigen::Index>(fam.pair(s.state, s.action))] += a * d;
  else
    state.theta += (a * d) * eligibility(fam, state.theta, s.state, s.action);
  ++state.n;
  return state;
}

// ---- GQ ----------------------------------------------------------------------

struct GqState {
  Theta theta;
  Vector phi;  // fast iterate, approximately M fbar(theta)
  std::uint64_t n = 0;
};

inline GqState gq_init(const QFamily& fam, Theta theta) {
  return {std::move(theta), Vector::Zero(static_cast<Eigen::Index>(fam.dim())), 0};
}

/// Fast step phi += beta zeta (D - zeta^T phi), then the slow step
/// theta += alpha [D zeta - gamma 1{x'} (phi_{n+1}^T zeta) psi(x', greedy)].
inline GqState gq_step(GqState state, const FiniteMdp& mdp, const QFamily& fam, const ChainSample& s,
                       const StepSchedule& schedule) {
  require(fam.is_linear(), ErrorCode::NotLinearFamily, "gq_step: GQ is defined for linear families only");
  const std::uint64_t n = state.n + 1;
  const Vector zeta = eligibility(fam, state.theta, s.state, s.action);
  const double d = td_error(mdp, fam, state.theta, s);
  state.phi += schedule.beta(n) * (d - zeta.dot(state.phi)) * zeta;
  Vector step = d * zeta;
  const double cont = mdp.continuation(s.next_state);
  if (cont != 0.0) {
    const std::size_t greedy = greedy_value(fam, state.theta, s.next_state).action;
    step -= (mdp.gamma() * state.phi.dot(zeta)) * q_gradient(fam, state.theta, s.next_state, greedy);
  }
  state.theta += schedule.alpha(n) * step;
  state.n = n;
  return state;
}

// ---- Zap ---------------------------------------------------------------------

struct ZapOptions {
  double epsilon = 1e-6;
  std::uint64_t gain_period = 50;           // N_d
  std::uint64_t eligibility_period = 2000;  // N_zeta
  double projection_radius = 1e6;           // <= 0 disables the projection
};

struct ZapState {
  Theta theta;
  Matrix a_hat;
  Matrix gain;  // zap_gain(a_hat at last refresh, epsilon)
  Theta anchor;
  std::uint64_t n = 0;
  bool projected = false;  // projection ever activated
  ZapOptions options;
};

inline ZapState zap_init(Theta theta, Matrix a_hat, ZapOptions options = {}) {
  require(options.epsilon > 0.0, ErrorCode::InvalidArgument, "zap_init: epsilon must be positive");
  require(options.gain_period >= 1 && options.eligibility_period >= 1, ErrorCode::InvalidArgument,
          "zap_init: N_d and N_zeta must be >= 1");
  require(a_hat.rows() == theta.size() && a_hat.cols() == theta.size(), ErrorCode::InvalidArgument,
          "zap_init: A-hat must be d x d");
  ZapState s;
  s.gain = zap_gain(a_hat, options.epsilon);
  s.anchor = theta;
  s.theta = std::move(theta);
  s.a_hat = std::move(a_hat);
  s.options = options;
  return s;
}

/// Generic Zap SA step:
///   A-hat_{n+1} = A-hat_n + beta_{n+1} (A_{n+1} - A-hat_n)
///   G refreshed from A-hat_{n+1} when n = 0 mod N_d
///   theta_{n+1} = theta_n + alpha_{n+1} G f_{n+1}
inline void zap_sa_update(ZapState& state, const Vector& f_sample, const Matrix& a_sample, const StepSchedule& schedule) {
  const std::uint64_t n = state.n + 1;
  state.a_hat += schedule.beta(n) * (a_sample - state.a_hat);
  if (state.n % state.options.gain_period == 0) state.gain = zap_gain(state.a_hat, state.options.epsilon);
  state.theta.noalias() += schedule.alpha(n) * (state.gain * f_sample);
  const double radius = state.options.projection_radius;
  if (radius > 0.0) {
    const double norm = state.theta.norm();
    if (norm > radius) {
      state.theta *= radius / norm;
      state.projected = true;
    }
  }
  require(all_finite(state.theta), ErrorCode::NonFinite, "zap step produced a non-finite parameter");
  state.n = n;
}

inline ZapState zap_sa_step(ZapState state, const Vector& f_sample, const Matrix& a_sample,
                            const StepSchedule& schedule) {
  zap_sa_update(state, f_sample, a_sample, schedule);
  return state;
}

/// Per-sample pair (f, A) for Q-learning at parameter theta with eligibility
/// taken at `anchor`:
///   f = D zeta,  A = zeta [gamma 1{x'} grad Q(x', greedy(x')) - zeta]^T.
/// The D * d(zeta)/d(theta) term vanishes for tabular and linear families and
/// is left out for networks.
struct ZapSample {
  Vector f;
  Matrix a;
  double td = 0.0;
};

inline ZapSample zap_q_sample(const FiniteMdp& mdp, const QFamily& fam, const Theta& theta, const Theta& anchor,
                              const ChainSample& s) {
  ZapSample out;
  const Vector zeta = eligibility(fam, anchor, s.state, s.action);
  const double cont = mdp.continuation(s.next_state);
  const GreedyValue next = greedy_value(fam, theta, s.next_state);
  out.td = mdp.reward(s.state, s.action) + (cont == 0.0 ? 0.0 : mdp.gamma() * next.value) -
           q_value(fam, theta, s.state, s.action);
  out.f = out.td * zeta;
  Vector direction = -zeta;
  if (cont != 0.0) direction += mdp.gamma() * q_gradient(fam, theta, s.next_state, next.action);
  out.a = zeta * direction.transpose();
  return out;
}

/// One Zap Q-learning step: refresh the eligibility anchor when
/// n = 0 mod N_zeta, form the sample pair, then apply the Zap SA step.
inline void zap_q_update(ZapState& state, const FiniteMdp& mdp, const QFamily& fam, const ChainSample& s,
                         const StepSchedule& schedule) {
  if (state.n % state.options.eligibility_period == 0) state.anchor = state.theta;
  const ZapSample sample = zap_q_sample(mdp, fam, state.theta, state.anchor, s);
  zap_sa_update(state, sample.f, sample.a, schedule);
}

inline ZapState zap_q_step(ZapState state, const FiniteMdp& mdp, const QFamily& fam, const ChainSample& s,
                           const StepSchedule& schedule) {
  zap_q_update(state, mdp, fam, s, schedule);
  return state;
}

}  // namespace zapq
