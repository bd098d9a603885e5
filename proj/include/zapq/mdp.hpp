#pragma once

// Finite MDP model, behavior policies, chain simulation, and the exact
// ground-truth oracles (stationary law, Q*, long-run noise covariance).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zapq/error.hpp"
#include "zapq/linalg.hpp"
#include "zapq/rng.hpp"

namespace zapq {

/// Finite MDP with per-action kernels P_u, reward table r(x,u), discount,
/// optional terminal set and optional horizon cap.
class FiniteMdp {
 public:
  FiniteMdp() = default;

  /// Validates on construction. `initial` may be empty, meaning uniform over
  /// the non-terminal states.
  FiniteMdp(std::vector<Matrix> kernels, Matrix rewards, double gamma,
            std::vector<std::size_t> terminal = {},
            std::optional<std::uint64_t> horizon_cap = std::nullopt, Vector initial = {})
      : kernels_(std::move(kernels)),
        rewards_(std::move(rewards)),
        gamma_(gamma),
        terminal_(std::move(terminal)),
        horizon_cap_(horizon_cap),
        initial_(std::move(initial)) {
    std::sort(terminal_.begin(), terminal_.end());
    terminal_.erase(std::unique(terminal_.begin(), terminal_.end()), terminal_.end());
    validate();
  }

  std::size_t num_states() const { return static_cast<std::size_t>(rewards_.rows()); }
  std::size_t num_actions() const { return static_cast<std::size_t>(rewards_.cols()); }
  std::size_t num_pairs() const { return num_states() * num_actions(); }
  std::size_t pair(std::size_t x, std::size_t u) const { return x * num_actions() + u; }

  const Matrix& kernel(std::size_t u) const { return kernels_[u]; }
  const std::vector<Matrix>& kernels() const { return kernels_; }
  double transition(std::size_t u, std::size_t x, std::size_t next) const {
    return kernels_[u](static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(next));
  }
  const Matrix& rewards() const { return rewards_; }
  double reward(std::size_t x, std::size_t u) const {
    return rewards_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u));
  }
  double gamma() const { return gamma_; }
  const std::vector<std::size_t>& terminal() const { return terminal_; }
  bool episodic() const { return !terminal_.empty(); }
  bool is_terminal(std::size_t x) const { return std::binary_search(terminal_.begin(), terminal_.end(), x); }
  /// 1 if the continuation value at `next` counts, 0 if `next` is terminal.
  double continuation(std::size_t next) const { return is_terminal(next) ? 0.0 : 1.0; }
  std::optional<std::uint64_t> horizon_cap() const { return horizon_cap_; }
  /// The initial distribution as given (possibly empty).
  const Vector& initial() const { return initial_; }

  /// Initial-state distribution used for restarts and rollouts.
  Vector initial_distribution() const {
    if (initial_.size() > 0) return initial_;
    Vector mu = Vector::Zero(static_cast<Eigen::Index>(num_states()));
    std::size_t count = 0;
    for (std::size_t x = 0; x < num_states(); ++x)
      if (!is_terminal(x)) ++count;
    for (std::size_t x = 0; x < num_states(); ++x)
      if (!is_terminal(x)) mu[static_cast<Eigen::Index>(x)] = 1.0 / static_cast<double>(count);
    return mu;
  }

 private:
  void validate() const {
    const auto nx = rewards_.rows();
    require(nx > 0 && rewards_.cols() > 0, ErrorCode::InvalidArgument, "FiniteMdp: empty state or action set");
    require(kernels_.size() == static_cast<std::size_t>(rewards_.cols()), ErrorCode::InvalidArgument,
            "FiniteMdp: need one kernel per action");
    require(all_finite(rewards_), ErrorCode::NonFinite, "FiniteMdp: rewards must be finite");
    for (std::size_t u = 0; u < kernels_.size(); ++u) {
      const Matrix& p = kernels_[u];
      require(p.rows() == nx && p.cols() == nx, ErrorCode::InvalidArgument, "FiniteMdp: kernel shape mismatch");
      require(all_finite(p), ErrorCode::NonFinite, "FiniteMdp: kernel entries must be finite");
      require((p.array() >= 0.0).all(), ErrorCode::InvalidArgument, "FiniteMdp: negative transition probability");
      for (Eigen::Index x = 0; x < nx; ++x)
        require(std::abs(p.row(x).sum() - 1.0) <= 1e-12, ErrorCode::InvalidArgument,
                "FiniteMdp: kernel row " + std::to_string(x) + " of action " + std::to_string(u) +
                    " does not sum to 1");
    }
    require(gamma_ >= 0.0 && gamma_ <= 1.0, ErrorCode::InvalidArgument, "FiniteMdp: gamma must lie in [0,1]");
    require(gamma_ < 1.0 || !terminal_.empty(), ErrorCode::InvalidArgument,
            "FiniteMdp: gamma = 1 requires a nonempty terminal set");
    for (auto x : terminal_)
      require(x < num_states(), ErrorCode::InvalidArgument, "FiniteMdp: terminal state out of range");
    require(!horizon_cap_ || *horizon_cap_ >= 1, ErrorCode::InvalidArgument, "FiniteMdp: horizon_cap must be >= 1");
    require(terminal_.size() < num_states() || initial_.size() > 0, ErrorCode::InvalidArgument,
            "FiniteMdp: every state is terminal and no initial distribution is given");
    if (initial_.size() > 0) {
      require(initial_.size() == nx, ErrorCode::InvalidArgument, "FiniteMdp: initial distribution has wrong size");
      require((initial_.array() >= 0.0).all() && std::abs(initial_.sum() - 1.0) <= 1e-12,
              ErrorCode::InvalidArgument, "FiniteMdp: initial distribution is not a pmf");
    }
  }

  std::vector<Matrix> kernels_;
  Matrix rewards_;
  double gamma_ = 0.0;
  std::vector<std::size_t> terminal_;
  std::optional<std::uint64_t> horizon_cap_;
  Vector initial_;
};

/// Per-state greedy action lookup supplied by a learner.
using GreedyFn = std::function<std::size_t(std::size_t state)>;

/// Behavior policy: a fixed randomized table, or epsilon-greedy around the
/// learner's current greedy policy.
class BehaviorPolicy {
 public:
  enum class Kind { Stationary, EpsilonGreedy };

  static BehaviorPolicy uniform(std::size_t num_states, std::size_t num_actions) {
    return randomized(Matrix::Constant(static_cast<Eigen::Index>(num_states), static_cast<Eigen::Index>(num_actions),
                                       1.0 / static_cast<double>(num_actions)));
  }

  static BehaviorPolicy randomized(Matrix table) {
    require(table.size() > 0 && all_finite(table) && (table.array() >= 0.0).all(), ErrorCode::InvalidArgument,
            "BehaviorPolicy: table must be a nonnegative finite matrix");
    for (Eigen::Index x = 0; x < table.rows(); ++x)
      require(std::abs(table.row(x).sum() - 1.0) <= 1e-12, ErrorCode::InvalidArgument,
              "BehaviorPolicy: action pmf of state " + std::to_string(x) + " does not sum to 1");
    BehaviorPolicy p;
    p.kind_ = Kind::Stationary;
    p.table_ = std::move(table);
    return p;
  }

  static BehaviorPolicy epsilon_greedy(double epsilon) {
    require(epsilon >= 0.0 && epsilon <= 1.0, ErrorCode::InvalidArgument, "BehaviorPolicy: epsilon must lie in [0,1]");
    BehaviorPolicy p;
    p.kind_ = Kind::EpsilonGreedy;
    p.epsilon_ = epsilon;
    return p;
  }

  Kind kind() const { return kind_; }
  bool is_stationary() const { return kind_ == Kind::Stationary; }
  const Matrix& table() const { return table_; }
  double epsilon() const { return epsilon_; }

  double prob(std::size_t x, std::size_t u) const {
    return table_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u));
  }

  /// Stationary policy obtained by fixing the greedy actions.
  BehaviorPolicy frozen(const std::vector<std::size_t>& greedy, std::size_t num_actions) const {
    if (is_stationary()) return *this;
    Matrix t = Matrix::Constant(static_cast<Eigen::Index>(greedy.size()), static_cast<Eigen::Index>(num_actions),
                                epsilon_ / static_cast<double>(num_actions));
    for (std::size_t x = 0; x < greedy.size(); ++x)
      t(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(greedy[x])) += 1.0 - epsilon_;
    return randomized(std::move(t));
  }

 private:
  BehaviorPolicy() = default;
  Kind kind_ = Kind::Stationary;
  Matrix table_;
  double epsilon_ = 0.0;
};

/// One transition Phi_{n+1} = (X_{n+1}, X_n, U_{n+1}, U_n).
struct ChainSample {
  std::size_t next_state = 0;
  std::size_t state = 0;
  std::size_t next_action = 0;
  std::size_t action = 0;

  friend bool operator==(const ChainSample&, const ChainSample&) = default;
};

/// Simulates the joint (state, action) chain. With a nonempty terminal set
/// the chain restarts from the initial distribution after a terminal state is
/// observed or after `horizon_cap` steps; the terminal transition itself is
/// still emitted. Holds a reference to the MDP.
class ChainSimulator {
 public:
  ChainSimulator(const FiniteMdp& mdp, BehaviorPolicy policy, std::uint64_t seed, GreedyFn greedy = {})
      : mdp_(&mdp), policy_(std::move(policy)), rng_(seed), greedy_(std::move(greedy)) {
    require(policy_.is_stationary() || static_cast<bool>(greedy_), ErrorCode::InvalidArgument,
            "ChainSimulator: epsilon-greedy exploration needs a greedy-action callback");
    if (policy_.is_stationary())
      require(static_cast<std::size_t>(policy_.table().rows()) == mdp.num_states() &&
                  static_cast<std::size_t>(policy_.table().cols()) == mdp.num_actions(),
              ErrorCode::InvalidArgument, "ChainSimulator: policy table shape mismatch");
    initial_ = mdp.initial_distribution();
    restart();
  }

  void set_greedy(GreedyFn greedy) { greedy_ = std::move(greedy); }

  ChainSample next() {
    const FiniteMdp& m = *mdp_;
    const std::size_t x_next = rng_.categorical(m.kernel(action_).row(static_cast<Eigen::Index>(state_)));
    const std::size_t u_next = act(x_next);
    const ChainSample sample{x_next, state_, u_next, action_};
    ++episode_steps_;
    const bool capped = m.horizon_cap() && episode_steps_ >= *m.horizon_cap();
    if (m.episodic() && (m.is_terminal(x_next) || capped)) {
      ++restarts_;
      restart();
    } else {
      state_ = x_next;
      action_ = u_next;
    }
    return sample;
  }

  std::uint64_t restarts() const { return restarts_; }

 private:
  std::size_t act(std::size_t x) {
    if (policy_.is_stationary()) return rng_.categorical(policy_.table().row(static_cast<Eigen::Index>(x)));
    if (rng_.uniform() < policy_.epsilon()) return rng_.index(mdp_->num_actions());
    return greedy_(x);
  }

  void restart() {
    state_ = rng_.categorical(initial_);
    action_ = act(state_);
    episode_steps_ = 0;
  }

  const FiniteMdp* mdp_;
  BehaviorPolicy policy_;
  Rng rng_;
  GreedyFn greedy_;
  Vector initial_;
  std::size_t state_ = 0;
  std::size_t action_ = 0;
  std::uint64_t episode_steps_ = 0;
  std::uint64_t restarts_ = 0;
};

inline std::vector<ChainSample> simulate_chain(const FiniteMdp& mdp, const BehaviorPolicy& policy, std::uint64_t seed,
                                               std::size_t n, GreedyFn greedy = {}) {
  ChainSimulator sim(mdp, policy, seed, std::move(greedy));
  std::vector<ChainSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sim.next());
  return out;
}

/// Joint (x,u) -> (x',u') transition matrix under a stationary policy, with
/// terminal restarts folded in. The horizon cap is not represented.
inline Matrix joint_transition(const FiniteMdp& mdp, const BehaviorPolicy& policy) {
  require(policy.is_stationary(), ErrorCode::InvalidArgument, "joint_transition: policy must be stationary");
  const std::size_t nx = mdp.num_states(), nu = mdp.num_actions(), m = mdp.num_pairs();
  const Vector mu = mdp.initial_distribution();
  Vector restart = Vector::Zero(static_cast<Eigen::Index>(m));
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t u = 0; u < nu; ++u)
      restart[static_cast<Eigen::Index>(mdp.pair(x, u))] = mu[static_cast<Eigen::Index>(x)] * policy.prob(x, u);

  Matrix t = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t u = 0; u < nu; ++u) {
      const auto row = static_cast<Eigen::Index>(mdp.pair(x, u));
      for (std::size_t xn = 0; xn < nx; ++xn) {
        const double p = mdp.transition(u, x, xn);
        if (p == 0.0) continue;
        if (mdp.is_terminal(xn)) {
          t.row(row) += p * restart.transpose();
        } else {
          for (std::size_t un = 0; un < nu; ++un)
            t(row, static_cast<Eigen::Index>(mdp.pair(xn, un))) += p * policy.prob(xn, un);
        }
      }
    }
  return t;
}

/// Invariant pmf of a row-stochastic matrix: solves pi^T (T - I) = 0 with a
/// normalization row appended.
inline Vector stationary_of(const Matrix& t) {
  const Eigen::Index m = t.rows();
  Matrix sys(m + 1, m);
  sys.topRows(m) = t.transpose() - Matrix::Identity(m, m);
  sys.row(m).setOnes();
  Vector rhs = Vector::Zero(m + 1);
  rhs[m] = 1.0;
  Eigen::ColPivHouseholderQR<Matrix> qr(sys);
  qr.setThreshold(1e-10);
  require(qr.rank() == m, ErrorCode::NotIrreducible, "stationary pmf is not unique (unit eigenvalue is repeated)");
  Vector pi = qr.solve(rhs);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  return pi;
}

/// Invariant pmf of the joint (x,u) chain, indexed by mdp.pair(x,u).
inline Vector stationary_pmf(const FiniteMdp& mdp, const BehaviorPolicy& policy) {
  return stationary_of(joint_transition(mdp, policy));
}

/// Applies the Bellman operator to a Q table (num_states x num_actions).
inline Matrix bellman_operator(const FiniteMdp& mdp, const Matrix& q) {
  Vector v = q.rowwise().maxCoeff();
  for (std::size_t x = 0; x < mdp.num_states(); ++x)
    if (mdp.is_terminal(x)) v[static_cast<Eigen::Index>(x)] = 0.0;
  Matrix out(q.rows(), q.cols());
  for (std::size_t u = 0; u < mdp.num_actions(); ++u)
    out.col(static_cast<Eigen::Index>(u)) = mdp.rewards().col(static_cast<Eigen::Index>(u)) + mdp.gamma() * mdp.kernel(u) * v;
  return out;
}

/// Q* by value iteration, stopping once the Bellman residual is <= tol.
inline Matrix q_star(const FiniteMdp& mdp, double tol = 1e-12, std::uint64_t max_iterations = 10'000'000) {
  Matrix q = mdp.rewards();
  for (std::uint64_t it = 0; it < max_iterations; ++it) {
    Matrix next = bellman_operator(mdp, q);
    const double residual = (next - q).cwiseAbs().maxCoeff();
    require(std::isfinite(residual), ErrorCode::Diverged, "q_star: value iteration produced non-finite values");
    if (residual <= tol) return q;
    q = std::move(next);
  }
  fail(ErrorCode::Diverged, "q_star: value iteration exceeded the iteration cap");
}

/// Observable of a transition, h(x', x, u', u) -> R^d.
using SampleFunction = std::function<Vector(const ChainSample&)>;

/// Long-run covariance sum_k E[Delta_k Delta_0^T] of Delta = h(Phi) in steady
/// state, in closed form through the fundamental matrix of the joint chain.
/// h must be centered under the stationary law.
inline Matrix noise_covariance(const FiniteMdp& mdp, const BehaviorPolicy& policy, const SampleFunction& h,
                               double center_tol = 1e-8) {
  const Matrix t = joint_transition(mdp, policy);
  const Vector pi = stationary_of(t);
  const std::size_t nx = mdp.num_states(), nu = mdp.num_actions(), m = mdp.num_pairs();
  const auto mi = static_cast<Eigen::Index>(m);
  const Vector mu = mdp.initial_distribution();

  struct Term {
    std::size_t from;   // current pair
    std::size_t to;     // next current pair (ignored when restarting)
    bool restart;
    double weight;      // pi(from) * P(x'|x,u) * policy(u'|x')
    Vector value;
  };
  std::vector<Term> terms;
  Eigen::Index dim = -1;
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t u = 0; u < nu; ++u) {
      const std::size_t from = mdp.pair(x, u);
      for (std::size_t xn = 0; xn < nx; ++xn) {
        const double p = mdp.transition(u, x, xn);
        if (p == 0.0) continue;
        for (std::size_t un = 0; un < nu; ++un) {
          const double w = pi[static_cast<Eigen::Index>(from)] * p * policy.prob(xn, un);
          if (w == 0.0) continue;
          Vector val = h(ChainSample{xn, x, un, u});
          if (dim < 0) dim = val.size();
          require(val.size() == dim && all_finite(val), ErrorCode::InvalidArgument,
                  "noise_covariance: h must return finite vectors of constant size");
          terms.push_back({from, mdp.pair(xn, un), mdp.is_terminal(xn), w, std::move(val)});
        }
      }
    }
  if (dim <= 0) return Matrix::Zero(std::max<Eigen::Index>(dim, 0), std::max<Eigen::Index>(dim, 0));

  // g(c) = E[h | current pair c]; mean under pi must vanish.
  Matrix g = Matrix::Zero(mi, dim);
  Vector mean = Vector::Zero(dim);
  for (const auto& term : terms) {
    const double pf = pi[static_cast<Eigen::Index>(term.from)];
    g.row(static_cast<Eigen::Index>(term.from)) += (term.weight / pf) * term.value.transpose();
    mean += term.weight * term.value;
  }
  require(mean.norm() <= center_tol, ErrorCode::NotCentered,
          "noise_covariance: h has nonzero stationary mean (norm " + std::to_string(mean.norm()) + ")");

  // Poisson solution ghat = Z g with Z = (I - T + 1 pi^T)^{-1}.
  Matrix fundamental = Matrix::Identity(mi, mi) - t + Vector::Ones(mi) * pi.transpose();
  Eigen::PartialPivLU<Matrix> lu(fundamental);
  const Matrix ghat = lu.solve(g);

  Vector restart_ghat = Vector::Zero(dim);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t u = 0; u < nu; ++u)
      restart_ghat += mu[static_cast<Eigen::Index>(x)] * policy.prob(x, u) *
                      ghat.row(static_cast<Eigen::Index>(mdp.pair(x, u))).transpose();

  Matrix c0 = Matrix::Zero(dim, dim);
  Matrix tail = Matrix::Zero(dim, dim);  // sum_{k>=1} E[Delta_k Delta_0^T]
  for (const auto& term : terms) {
    c0 += term.weight * term.value * term.value.transpose();
    const Vector ahead = term.restart ? restart_ghat : Vector(ghat.row(static_cast<Eigen::Index>(term.to)).transpose());
    tail += term.weight * ahead * term.value.transpose();
  }
  Matrix sigma = c0 + tail + tail.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace zapq
