#pragma once

// Training driver: runs one learner on a simulated chain and records
// checkpoints with exact mean-field diagnostics.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "zapq/algorithms.hpp"
#include "zapq/analysis.hpp"
#include "zapq/error.hpp"
#include "zapq/evaluation.hpp"
#include "zapq/funcapprox.hpp"
#include "zapq/mdp.hpp"
#include "zapq/rng.hpp"

namespace zapq {

enum class Algorithm { Watkins, Gq, ZapQ };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Watkins: return "watkins";
    case Algorithm::Gq: return "gq";
    case Algorithm::ZapQ: return "zapq";
  }
  return "unknown";
}

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "watkins") return Algorithm::Watkins;
  if (s == "gq") return Algorithm::Gq;
  if (s == "zapq" || s == "zap") return Algorithm::ZapQ;
  fail(ErrorCode::Config, "unknown algorithm '" + s + "'");
}

// Sub-stream indices for derive_seed.
inline constexpr std::uint64_t kChainStream = 1;
inline constexpr std::uint64_t kInitStream = 2;
inline constexpr std::uint64_t kEvalStream = 3;

struct TrainConfig {
  Algorithm algorithm = Algorithm::ZapQ;
  StepSchedule schedule = StepSchedule::diminishing();
  ZapOptions zap;
  std::uint64_t n_steps = 0;
  std::uint64_t checkpoint_every = 1000;
  std::uint64_t seed = 0;
  /// Zap only: number of A-samples averaged into A-hat_0 before the first
  /// parameter update. Default max(d, 100).
  std::optional<std::size_t> warmup;
  std::optional<Theta> theta0;  // default: initial_theta(fam, derived seed)
  /// Greedy-policy rollouts at each checkpoint; 0 disables.
  std::size_t num_rollouts = 0;
  std::uint64_t horizon = 200;
};

struct LearnRecord {
  std::uint64_t n = 0;
  Theta theta;
  double fbar_norm = std::numeric_limits<double>::quiet_NaN();
  double bellman_error = std::numeric_limits<double>::quiet_NaN();
  double mse_to_qstar = std::numeric_limits<double>::quiet_NaN();
  double avg_reward = std::numeric_limits<double>::quiet_NaN();
  double reward_std_error = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
  bool projected = false;
};

/// The exact mean field at theta under `policy`; an epsilon-greedy policy is
/// frozen at the greedy policy of theta.
inline MeanField mean_field_at(const FiniteMdp& mdp, const QFamily& fam, const BehaviorPolicy& policy,
                               const Theta& theta) {
  return MeanField(mdp, fam, policy.frozen(greedy_policy(fam, theta), mdp.num_actions()));
}

namespace detail {

struct Diagnostics {
  const FiniteMdp& mdp;
  const QFamily& fam;
  const BehaviorPolicy& policy;
  std::optional<Matrix> qstar;

  void fill(LearnRecord& rec, const TrainConfig& cfg) const {
    rec.fbar_norm = mean_field_at(mdp, fam, policy, rec.theta).fbar(rec.theta).norm();
    const Matrix q = q_table(fam, rec.theta);
    rec.bellman_error = (bellman_operator(mdp, q) - q).cwiseAbs().maxCoeff();
    if (qstar) rec.mse_to_qstar = (q - *qstar).array().square().mean();
    if (cfg.num_rollouts > 0) {
      const PolicyValue v =
          evaluate_policy(mdp, fam, rec.theta, cfg.num_rollouts, cfg.horizon, derive_seed(cfg.seed, kEvalStream));
      rec.avg_reward = v.mean;
      rec.reward_std_error = v.std_error;
    }
  }
};

}  // namespace detail

/// Runs `cfg.n_steps` updates and returns checkpoints at n = 0, every
/// `checkpoint_every` steps, and at n_steps. Deterministic given cfg.seed.
inline std::vector<LearnRecord> run_training(const FiniteMdp& mdp, const QFamily& fam, const BehaviorPolicy& policy,
                                             const TrainConfig& cfg) {
  require(fam.num_states() == mdp.num_states() && fam.num_actions() == mdp.num_actions(), ErrorCode::InvalidArgument,
          "run_training: family does not match the MDP");
  require(cfg.algorithm != Algorithm::Gq || fam.is_linear(), ErrorCode::NotLinearFamily,
          "run_training: GQ needs a tabular or linear family");
  require(cfg.checkpoint_every >= 1, ErrorCode::InvalidArgument, "run_training: checkpoint_every must be >= 1");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();

  detail::Diagnostics diag{mdp, fam, policy, std::nullopt};
  try {
    diag.qstar = q_star(mdp);
  } catch (const Error&) {
    diag.qstar.reset();
  }

  Theta theta0 = cfg.theta0 ? *cfg.theta0 : initial_theta(fam, derive_seed(cfg.seed, kInitStream));
  require(static_cast<std::size_t>(theta0.size()) == fam.dim(), ErrorCode::InvalidArgument,
          "run_training: theta0 has the wrong dimension");

  // The behavior policy reads the learner's current parameter through this pointer.
  const Theta* current = &theta0;
  GreedyFn greedy;
  if (!policy.is_stationary()) greedy = [&fam, &current](std::size_t x) { return greedy_action(fam, *current, x); };
  ChainSimulator sim(mdp, policy, derive_seed(cfg.seed, kChainStream), greedy);

  std::vector<LearnRecord> records;
  auto checkpoint = [&](std::uint64_t n, const Theta& theta, bool projected) {
    LearnRecord rec;
    rec.n = n;
    rec.theta = theta;
    rec.projected = projected;
    diag.fill(rec, cfg);
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    records.push_back(std::move(rec));
  };
  auto due = [&](std::uint64_t n) { return n % cfg.checkpoint_every == 0 || n == cfg.n_steps; };

  switch (cfg.algorithm) {
    case Algorithm::Watkins: {
      WatkinsState st{theta0, 0};
      current = &st.theta;
      checkpoint(0, st.theta, false);
      while (st.n < cfg.n_steps) {
        st = watkins_step(std::move(st), mdp, fam, sim.next(), cfg.schedule);
        if (due(st.n)) checkpoint(st.n, st.theta, false);
      }
      break;
    }
    case Algorithm::Gq: {
      GqState st = gq_init(fam, theta0);
      current = &st.theta;
      checkpoint(0, st.theta, false);
      while (st.n < cfg.n_steps) {
        st = gq_step(std::move(st), mdp, fam, sim.next(), cfg.schedule);
        if (due(st.n)) checkpoint(st.n, st.theta, false);
      }
      break;
    }
    case Algorithm::ZapQ: {
      const auto d = static_cast<Eigen::Index>(fam.dim());
      Matrix a0 = Matrix::Zero(d, d);
      const std::size_t warm = cfg.warmup ? *cfg.warmup : std::max<std::size_t>(fam.dim(), 100);
      if (cfg.n_steps > 0 && warm > 0) {
        for (std::size_t i = 0; i < warm; ++i) a0 += zap_q_sample(mdp, fam, theta0, theta0, sim.next()).a;
        a0 /= static_cast<double>(warm);
      }
      ZapState st = zap_init(theta0, std::move(a0), cfg.zap);
      current = &st.theta;
      checkpoint(0, st.theta, false);
      while (st.n < cfg.n_steps) {
        zap_q_update(st, mdp, fam, sim.next(), cfg.schedule);
        if (due(st.n)) checkpoint(st.n, st.theta, st.projected);
      }
      break;
    }
  }
  return records;
}

}  // namespace zapq
