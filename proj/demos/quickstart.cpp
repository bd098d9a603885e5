// Tabular Zap Q-learning next to Watkins on the six-state example.

#include <cstdio>

#include "zapq/fixtures.hpp"
#include "zapq/training.hpp"

using namespace zapq;

int main() {
  const FiniteMdp mdp = fixtures::six_state(0.9);
  const QFamily fam = QFamily::tabular(mdp.num_states(), mdp.num_actions());
  const BehaviorPolicy policy = BehaviorPolicy::uniform(mdp.num_states(), mdp.num_actions());

  for (Algorithm alg : {Algorithm::ZapQ, Algorithm::Watkins}) {
    TrainConfig cfg;
    cfg.algorithm = alg;
    cfg.n_steps = 100000;
    cfg.checkpoint_every = 20000;
    cfg.num_rollouts = 100;
    std::printf("%s\n%8s %12s %12s %12s\n", to_string(alg).c_str(), "n", "|fbar|", "mse", "reward");
    for (const auto& r : run_training(mdp, fam, policy, cfg))
      std::printf("%8llu %12.4g %12.4g %12.4g\n", static_cast<unsigned long long>(r.n), r.fbar_norm, r.mse_to_qstar,
                  r.avg_reward);
  }
  const Matrix q = q_star(mdp);
  std::printf("Q*:\n");
  for (Eigen::Index x = 0; x < q.rows(); ++x) std::printf("  %10.4f %10.4f\n", q(x, 0), q(x, 1));
}
