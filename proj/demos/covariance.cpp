// Asymptotic covariance of the tabular recursion on the six-state example,
// for scalar gains g I and for the optimal gain -A*^{-1}.

#include <cstdio>

#include "zapq/analysis.hpp"
#include "zapq/fixtures.hpp"

using namespace zapq;

int main() {
  for (double gamma : {0.5, 0.9, 0.99}) {
    const FiniteMdp mdp = fixtures::six_state(gamma);
    const QFamily fam = QFamily::tabular(mdp.num_states(), mdp.num_actions());
    const MeanField mf(mdp, fam, BehaviorPolicy::uniform(mdp.num_states(), mdp.num_actions()));
    const Theta root = table_to_theta(q_star(mdp));
    const Matrix a = mf.fbar_jacobian(root);
    const Matrix s = update_noise_covariance(mf, root);
    const auto d = a.rows();

    std::printf("gamma = %g\n", gamma);
    const CovarianceReport best = asymptotic_covariance(a, s, -a.inverse());
    std::printf("  %-12s trace %12.4g\n", "optimal", best.sigma_theta->trace());
    for (double g : {1.0, 10.0, 100.0, 1000.0}) {
      const CovarianceReport r = asymptotic_covariance(a, s, g * Matrix::Identity(d, d));
      if (r.finite())
        std::printf("  g = %-8g trace %12.4g  gap trace %12.4g\n", g, r.sigma_theta->trace(), r.gap->trace());
      else
        std::printf("  g = %-8g infinite (max Re eig of I/2 + gA* = %.3g)\n", g, r.eig_real_parts.front());
    }
  }
}
