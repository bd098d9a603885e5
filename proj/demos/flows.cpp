// Newton-Raphson, regularized and gradient flows on the tabular mean field.

#include <cstdio>

#include "zapq/analysis.hpp"
#include "zapq/fixtures.hpp"
#include "zapq/odelab.hpp"

using namespace zapq;

int main() {
  const FiniteMdp mdp = fixtures::six_state(0.9);
  const QFamily fam = QFamily::tabular(mdp.num_states(), mdp.num_actions());
  const MeanField mf(mdp, fam, BehaviorPolicy::uniform(mdp.num_states(), mdp.num_actions()));
  const VectorField vf = mean_field_vector_field(mf);
  const Vector w0 = Vector::Zero(static_cast<Eigen::Index>(fam.dim()));
  const double T = 10.0, dt = 1e-2;

  const FlowTrace nr = integrate_nr_flow(vf, w0, T, dt);
  const FlowTrace reg = integrate_regularized_flow(vf, 1e-6, w0, T, dt);
  const FlowTrace grad = integrate_gradient_flow(vf, Matrix::Identity(w0.size(), w0.size()), w0, T, dt);

  std::printf("%6s %14s %14s %14s\n", "t", "nr", "regularized", "gradient");
  for (std::size_t k = 0; k < nr.size(); k += 100)
    std::printf("%6.2f %14.6g %14.6g %14.6g\n", nr.times[k], nr.f_norms[k], reg.f_norms[k], grad.f_norms[k]);
  std::printf("deviation from |fbar(w0)| e^{-t}: %.3g\n", nr_law_deviation(nr));

  int switches = 0;
  for (bool s : nr.policy_switch) switches += s;
  std::printf("greedy policy changes along the Newton flow: %d\n", switches);
}
