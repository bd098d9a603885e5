#pragma once

// Monte-Carlo performance of the greedy policy of Q^theta: the undiscounted
// reward collected over tau = min(horizon, first entrance to the terminal set).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "zapq/error.hpp"
#include "zapq/funcapprox.hpp"
#include "zapq/mdp.hpp"
#include "zapq/rng.hpp"

namespace zapq {

struct PolicyValue {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t rollouts = 0;
};

/// Rollouts of a fixed deterministic policy started from the MDP's initial
/// distribution.
inline PolicyValue evaluate_actions(const FiniteMdp& mdp, const std::vector<std::size_t>& policy,
                                    std::size_t num_rollouts, std::uint64_t horizon, std::uint64_t seed) {
  require(num_rollouts > 0, ErrorCode::InvalidArgument, "evaluate_policy: need at least one rollout");
  require(horizon > 0, ErrorCode::InvalidArgument, "evaluate_policy: horizon must be positive");
  require(policy.size() == mdp.num_states(), ErrorCode::InvalidArgument, "evaluate_policy: policy size mismatch");
  Rng rng(seed);
  const Vector mu = mdp.initial_distribution();
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < num_rollouts; ++i) {
    std::size_t x = rng.categorical(mu);
    double total = 0.0;
    for (std::uint64_t n = 0; n < horizon; ++n) {
      const std::size_t u = policy[x];
      total += mdp.reward(x, u);
      x = rng.categorical(mdp.kernel(u).row(static_cast<Eigen::Index>(x)));
      if (mdp.is_terminal(x)) break;
    }
    sum += total;
    sum_sq += total * total;
  }
  const double n = static_cast<double>(num_rollouts);
  PolicyValue out;
  out.rollouts = num_rollouts;
  out.mean = sum / n;
  if (num_rollouts > 1) out.std_error = std::sqrt(std::max(0.0, (sum_sq - n * out.mean * out.mean) / (n - 1.0)) / n);
  return out;
}

inline PolicyValue evaluate_policy(const FiniteMdp& mdp, const QFamily& fam, const Theta& theta,
                                   std::size_t num_rollouts, std::uint64_t horizon, std::uint64_t seed) {
  return evaluate_actions(mdp, greedy_policy(fam, theta), num_rollouts, horizon, seed);
}

}  // namespace zapq
