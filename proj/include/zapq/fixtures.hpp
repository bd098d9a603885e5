#pragma once

// Small built-in MDPs used by the tests, demos, and CLI.

#include <cmath>
#include <cstdint>
#include <vector>

#include "zapq/mdp.hpp"
#include "zapq/rng.hpp"

namespace zapq::fixtures {

/// Random MDP with strictly positive kernels (rows ~ Dirichlet(1)) and
/// rewards uniform on [0,1). Every (x,u) pair is reachable under any
/// randomized policy, so the joint chain is irreducible and aperiodic.
inline FiniteMdp random_mdp(std::size_t num_states, std::size_t num_actions, double gamma, std::uint64_t seed) {
  Rng rng(seed);
  const auto nx = static_cast<Eigen::Index>(num_states);
  std::vector<Matrix> kernels;
  for (std::size_t u = 0; u < num_actions; ++u) {
    Matrix p(nx, nx);
    for (Eigen::Index x = 0; x < nx; ++x) {
      for (Eigen::Index y = 0; y < nx; ++y) p(x, y) = -std::log(1.0 - rng.uniform());
      p.row(x) /= p.row(x).sum();
    }
    kernels.push_back(std::move(p));
  }
  Matrix r(nx, static_cast<Eigen::Index>(num_actions));
  for (Eigen::Index x = 0; x < nx; ++x)
    for (Eigen::Index u = 0; u < r.cols(); ++u) r(x, u) = rng.uniform();
  return FiniteMdp(std::move(kernels), std::move(r), gamma);
}

/// The 6-state, 2-action discounted fixture used by the acceptance suite.
inline constexpr std::uint64_t kSixStateSeed = 2020;
inline FiniteMdp six_state(double gamma = 0.9) { return random_mdp(6, 2, gamma, kSixStateSeed); }

/// Two states; action 0 stays, action 1 switches; reward 1 iff in state 1.
inline FiniteMdp two_state_switch(double gamma) {
  Matrix stay = Matrix::Identity(2, 2);
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  Matrix r(2, 2);
  r << 0, 0, 1, 1;
  return FiniteMdp({stay, swap}, r, gamma);
}

/// Two states, two actions, every transition a fair coin flip.
inline FiniteMdp coin_flip(double gamma, Matrix rewards = Matrix::Zero(2, 2)) {
  Matrix half = Matrix::Constant(2, 2, 0.5);
  return FiniteMdp({half, half}, std::move(rewards), gamma);
}

/// Two states with a sticky, asymmetric chain (useful for correlated noise).
inline FiniteMdp sticky_two_state(double gamma) {
  Matrix a(2, 2), b(2, 2);
  a << 0.9, 0.1, 0.2, 0.8;
  b << 0.3, 0.7, 0.6, 0.4;
  Matrix r(2, 2);
  r << 1.0, 0.0, 0.5, 2.0;
  return FiniteMdp({a, b}, r, gamma);
}

/// One state, one action, reward r.
inline FiniteMdp single_state(double reward, double gamma) {
  return FiniteMdp({Matrix::Ones(1, 1)}, Matrix::Constant(1, 1, reward), gamma);
}

}  // namespace zapq::fixtures
