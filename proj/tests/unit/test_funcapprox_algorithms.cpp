#include <algorithm>
#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "../common/oracles.hpp"
#include "zapq/algorithms.hpp"
#include "zapq/analysis.hpp"
#include "zapq/fixtures.hpp"
#include "zapq/funcapprox.hpp"
#include "zapq/io.hpp"
#include "zapq/training.hpp"

using namespace zapq;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Io;
}

Matrix indicator_basis(std::size_t nx, std::size_t nu) {
  return Matrix::Identity(static_cast<Eigen::Index>(nx * nu), static_cast<Eigen::Index>(nx * nu));
}

/// Nonnegative random basis: eligibility vectors are >= 0 componentwise.
Matrix nonnegative_basis(Rng& rng, std::size_t pairs, Eigen::Index d) {
  return oracle::random_matrix(rng, static_cast<Eigen::Index>(pairs), d, 0.0, 1.0);
}

Vector central_difference(const QFamily& fam, const Theta& theta, std::size_t x, std::size_t u, double h) {
  Vector g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Theta up = theta, down = theta;
    up[i] += h;
    down[i] -= h;
    g[i] = (q_value(fam, up, x, u) - q_value(fam, down, x, u)) / (2 * h);
  }
  return g;
}

std::vector<QFamily> all_families(Rng& rng) {
  return {QFamily::tabular(4, 3), QFamily::linear(4, 3, oracle::random_matrix(rng, 12, 5)),
          QFamily::mlp(4, 3, MlpSpec{{8}, 0.01}), QFamily::mlp(4, 3, MlpSpec{{6, 5}, 0.2})};
}

}  // namespace

// ---- funcapprox ----------------------------------------------------------------

TEST(QValue, TabularUnitVector) {
  const QFamily fam = QFamily::tabular(3, 2);
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t u = 0; u < 2; ++u) {
      Theta e = Theta::Zero(6);
      e[static_cast<Eigen::Index>(fam.pair(x, u))] = 1.0;
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t v = 0; v < 2; ++v) EXPECT_EQ(q_value(fam, e, y, v), (x == y && u == v) ? 1.0 : 0.0);
    }
}

TEST(QValue, IndicatorLinearEqualsTabular) {
  Rng rng(1);
  const QFamily tab = QFamily::tabular(5, 3), lin = QFamily::linear(5, 3, indicator_basis(5, 3));
  for (int trial = 0; trial < 50; ++trial) {
    Theta theta = oracle::random_vector(rng, 15);
    if (trial % 5 == 0) theta[3] = theta[4];  // force some ties
    for (std::size_t x = 0; x < 5; ++x)
      for (std::size_t u = 0; u < 3; ++u) {
        EXPECT_EQ(q_value(tab, theta, x, u), q_value(lin, theta, x, u));
        EXPECT_EQ(q_gradient(tab, theta, x, u), q_gradient(lin, theta, x, u));
      }
    EXPECT_EQ(greedy_policy(tab, theta), greedy_policy(lin, theta));
    EXPECT_EQ(q_table(tab, theta), q_table(lin, theta));
  }
}

TEST(QValue, MlpZeroParametersGiveZero) {
  const QFamily fam = QFamily::mlp(6, 2, MlpSpec{{8}, 0.01});
  EXPECT_EQ(fam.dim(), 73u);  // (7 inputs + bias) * 8 + (8 + bias) * 1
  for (std::size_t x = 0; x < 6; ++x)
    for (std::size_t u = 0; u < 2; ++u) EXPECT_EQ(q_value(fam, Theta::Zero(73), x, u), 0.0);
}

TEST(QValue, MlpMatchesHandForwardPass) {
  // One hidden unit: q = w2 * leaky(w1 . in + b1) + b2.
  const QFamily fam = QFamily::mlp(2, 2, MlpSpec{{1}, 0.1});
  ASSERT_EQ(fam.dim(), 6u);
  Theta theta(6);
  theta << 1.0, -2.0, 3.0, 0.5, -1.5, 0.25;  // w1 (3), b1, w2, b2
  // x = 1, u = 1: in = (0, 1, 1), z = -2 + 3 + 0.5 = 1.5 -> q = -1.5 * 1.5 + 0.25
  EXPECT_DOUBLE_EQ(q_value(fam, theta, 1, 1), -2.0);
  // x = 1, u = 0: z = -2 + 0.5 = -1.5 -> leaky = -0.15 -> q = 0.225 + 0.25
  EXPECT_DOUBLE_EQ(q_value(fam, theta, 1, 0), 0.475);
}

TEST(QGradient, LinearAndTabular) {
  Rng rng(2);
  const Matrix basis = oracle::random_matrix(rng, 6, 4);
  const QFamily lin = QFamily::linear(3, 2, basis);
  const QFamily tab = QFamily::tabular(3, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const Theta t4 = oracle::random_vector(rng, 4, -10, 10);
    const Theta t6 = oracle::random_vector(rng, 6, -10, 10);
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t u = 0; u < 2; ++u) {
        EXPECT_EQ(q_gradient(lin, t4, x, u), Vector(basis.row(static_cast<Eigen::Index>(lin.pair(x, u))).transpose()));
        Vector e = Vector::Zero(6);
        e[static_cast<Eigen::Index>(tab.pair(x, u))] = 1.0;
        EXPECT_EQ(q_gradient(tab, t6, x, u), e);
      }
  }
}

TEST(QGradient, MlpMatchesFiniteDifferences) {
  Rng rng(3);
  const QFamily fam = QFamily::mlp(6, 2, MlpSpec{{8}, 0.01});
  for (int trial = 0; trial < 20; ++trial) {
    const Theta theta = oracle::random_vector(rng, static_cast<Eigen::Index>(fam.dim()));
    const std::size_t x = rng.index(6), u = rng.index(2);
    const Vector g = q_gradient(fam, theta, x, u);
    const Vector fd = central_difference(fam, theta, x, u, 1e-5);
    EXPECT_LE((g - fd).norm(), 1e-5 * std::max(1.0, g.norm()));
  }
}

TEST(QGradient, EveryFamilyMatchesFiniteDifferences) {
  Rng rng(4);
  for (const QFamily& fam : all_families(rng))
    for (int trial = 0; trial < 100; ++trial) {
      const Theta theta = oracle::random_vector(rng, static_cast<Eigen::Index>(fam.dim()));
      const std::size_t x = rng.index(fam.num_states()), u = rng.index(fam.num_actions());
      const Vector g = q_gradient(fam, theta, x, u);
      const Vector fd = central_difference(fam, theta, x, u, 1e-5);
      EXPECT_LE((g - fd).norm(), 1e-4 * std::max(1.0, g.norm())) << to_string(fam.kind());
    }
}

TEST(GreedyPolicy, Examples) {
  const QFamily fam = QFamily::tabular(2, 2);
  Theta theta(4);
  theta << 1.0, 2.0, 2.0, 2.0;
  EXPECT_EQ(greedy_policy(fam, theta), (std::vector<std::size_t>{1, 0}));
  const QFamily three = QFamily::tabular(1, 3);
  EXPECT_EQ(greedy_action(three, (Theta(3) << 0.5, 3.0, 3.0).finished(), 0), 1u);
}

TEST(GreedyPolicy, ScaleInvariantForLinear) {
  Rng rng(5);
  const QFamily fam = QFamily::linear(5, 3, oracle::random_matrix(rng, 15, 4));
  for (int trial = 0; trial < 50; ++trial) {
    const Theta theta = oracle::random_vector(rng, 4);
    for (double m : {0.5, 2.0, 10.0, 1e3}) EXPECT_EQ(greedy_policy(fam, m * theta), greedy_policy(fam, theta));
  }
}

TEST(Eligibility, AnchorSemantics) {
  Rng rng(6);
  const QFamily lin = QFamily::linear(3, 2, oracle::random_matrix(rng, 6, 3));
  const QFamily tab = QFamily::tabular(3, 2);
  const QFamily net = QFamily::mlp(3, 2, MlpSpec{{4}, 0.01});
  const Theta a3 = oracle::random_vector(rng, 3), b3 = oracle::random_vector(rng, 3);
  const Theta a6 = oracle::random_vector(rng, 6), b6 = oracle::random_vector(rng, 6);
  EXPECT_EQ(eligibility(lin, a3, 1, 1), eligibility(lin, b3, 1, 1));
  EXPECT_EQ(eligibility(tab, a6, 2, 0), eligibility(tab, b6, 2, 0));
  const Theta anchor = oracle::random_vector(rng, static_cast<Eigen::Index>(net.dim()));
  EXPECT_EQ(eligibility(net, anchor, 2, 1), q_gradient(net, anchor, 2, 1));
}

TEST(Mlp, LipschitzOnBall) {
  Rng rng(7);
  const QFamily fam = QFamily::mlp(6, 2, MlpSpec{{8}, 0.01});
  const auto d = static_cast<Eigen::Index>(fam.dim());
  double worst = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const Theta a = oracle::random_vector(rng, d, -1, 1), b = oracle::random_vector(rng, d, -1, 1);
    const std::size_t x = rng.index(6), u = rng.index(2);
    worst = std::max(worst, std::abs(q_value(fam, a, x, u) - q_value(fam, b, x, u)) / (a - b).norm());
  }
  // On the cube [-1,1]^d every gradient norm is bounded by a modest constant.
  EXPECT_LT(worst, 50.0);
  EXPECT_GT(worst, 0.0);
}

TEST(Mlp, InitialThetaIsKaimingWithZeroBiases) {
  const QFamily fam = QFamily::mlp(6, 2, MlpSpec{{8}, 0.01});
  const Theta theta = initial_theta(fam, 42);
  EXPECT_EQ(theta, initial_theta(fam, 42));
  EXPECT_NE(theta, initial_theta(fam, 43));
  const double gain = std::sqrt(2.0 / (1.0 + 1e-4));
  // Layer 1: 7 x 8 weights then 8 biases; layer 2: 8 weights then 1 bias.
  for (Eigen::Index k = 0; k < 56; ++k) EXPECT_LE(std::abs(theta[k]), gain * std::sqrt(3.0 / 7.0));
  for (Eigen::Index k = 56; k < 64; ++k) EXPECT_EQ(theta[k], 0.0);
  for (Eigen::Index k = 64; k < 72; ++k) EXPECT_LE(std::abs(theta[k]), gain * std::sqrt(3.0 / 8.0));
  EXPECT_EQ(theta[72], 0.0);
  EXPECT_EQ(initial_theta(QFamily::tabular(6, 2), 42), Theta::Zero(12));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(8);
  const auto dir = std::filesystem::temp_directory_path() / "zapq_ckpt_test";
  std::filesystem::create_directories(dir);
  for (const QFamily& fam : all_families(rng)) {
    const Theta theta = oracle::random_vector(rng, static_cast<Eigen::Index>(fam.dim()), -1e3, 1e3) / 3.0;
    const std::string path = (dir / "ck.json").string();
    io::write_checkpoint(path, fam, theta);
    const io::Checkpoint back = io::read_checkpoint(path);
    EXPECT_TRUE(back.family == fam);
    EXPECT_EQ(back.theta, theta);
  }
  io::Json bad = io::checkpoint_to_json(QFamily::tabular(2, 2), Theta::Zero(4));
  bad["dim"] = 5;
  EXPECT_EQ(code_of([&] { io::checkpoint_from_json(bad); }), ErrorCode::Config);
}

// ---- step sizes ------------------------------------------------------------------

TEST(StepSchedule, Diminishing) {
  const StepSchedule s = StepSchedule::diminishing(100.0, 0.85);
  for (std::uint64_t n : {1u, 10u, 1000u}) {
    EXPECT_DOUBLE_EQ(s.alpha(n), 1.0 / (static_cast<double>(n) + 100.0));
    EXPECT_DOUBLE_EQ(s.beta(n), std::pow(s.alpha(n), 0.85));
  }
  const StepSchedule g = StepSchedule::diminishing(0.0, 0.85, 2.0);
  EXPECT_DOUBLE_EQ(g.alpha(4), 0.5);
}

TEST(StepSchedule, TwoTimeScaleRatioDiverges) {
  const StepSchedule s = StepSchedule::diminishing(100.0, 0.85);
  double last = 0.0;
  for (std::uint64_t n = 1; n <= 10000000; n *= 10) {
    const double r = s.ratio(n);
    EXPECT_NEAR(r, std::pow(static_cast<double>(n) + 100.0, 0.15), 1e-9 * r);
    EXPECT_GT(r, last);
    last = r;
  }
  EXPECT_GT(s.ratio(std::uint64_t{1} << 60), 500.0);
}

TEST(StepSchedule, ConstantAndValidation) {
  const StepSchedule s = StepSchedule::constant(0.005, 100.0);
  EXPECT_EQ(s.alpha(1), 0.005);
  EXPECT_EQ(s.alpha(1000000), 0.005);
  EXPECT_DOUBLE_EQ(s.beta(7), 0.5);
  EXPECT_EQ(code_of([] { StepSchedule::diminishing(100.0, 0.5); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { StepSchedule::diminishing(-1.0, 0.85); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { StepSchedule::constant(0.0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { StepSchedule::constant(0.1, 0.5); }), ErrorCode::InvalidArgument);
}

// ---- temporal difference -----------------------------------------------------------

TEST(TdError, AtQStarIsMartingaleDifference) {
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::tabular(6, 2);
  const Matrix q = q_star(mdp);
  const Theta theta = table_to_theta(q);
  const Vector v = q.rowwise().maxCoeff();
  for (const auto& s : simulate_chain(mdp, BehaviorPolicy::uniform(6, 2), 1, 200)) {
    const double expected_next = mdp.kernel(s.action).row(static_cast<Eigen::Index>(s.state)).dot(v);
    const double residual = mdp.gamma() * (v[static_cast<Eigen::Index>(s.next_state)] - expected_next);
    EXPECT_NEAR(td_error(mdp, fam, theta, s), residual, 1e-11);
  }
  const MeanField mf(mdp, fam, BehaviorPolicy::uniform(6, 2));
  EXPECT_LE(mf.fbar(theta).norm(), 1e-12);
}

TEST(TdError, ZeroRewardZeroTheta) {
  const FiniteMdp mdp = fixtures::coin_flip(0.9);
  const QFamily fam = QFamily::tabular(2, 2);
  for (const auto& s : simulate_chain(mdp, BehaviorPolicy::uniform(2, 2), 1, 50))
    EXPECT_EQ(td_error(mdp, fam, Theta::Zero(4), s), 0.0);
}

TEST(TdError, TerminalNextStateDropsContinuation) {
  Matrix p(2, 2);
  p << 0, 1, 0, 1;
  Matrix r(2, 1);
  r << 3.0, 0.0;
  const FiniteMdp mdp({p}, r, 1.0, {1});
  const QFamily fam = QFamily::tabular(2, 1);
  Theta theta(2);
  theta << 1.25, 100.0;
  EXPECT_EQ(td_error(mdp, fam, theta, ChainSample{1, 0, 0, 0}), 3.0 - 1.25);
}

// ---- Watkins ------------------------------------------------------------------------

TEST(Watkins, ConvergesToQStar) {
  const FiniteMdp mdp = fixtures::sticky_two_state(0.5);
  const QFamily fam = QFamily::tabular(2, 2);
  // Each of the 4 pairs is visited about n/4 times, so a global gain of 8
  // is a per-visit gain of 2 = 2 / (2 (1 - gamma)).
  const StepSchedule sched = StepSchedule::diminishing(1.0, 0.85, 8.0);
  ChainSimulator sim(mdp, BehaviorPolicy::uniform(2, 2), 9);
  WatkinsState st{Theta::Zero(4), 0};
  for (int i = 0; i < 1000000; ++i) st = watkins_step(std::move(st), mdp, fam, sim.next(), sched);
  EXPECT_LE((q_table(fam, st.theta) - q_star(mdp)).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(Watkins, StationaryAtQStarOnDeterministicMdp) {
  const FiniteMdp mdp = fixtures::two_state_switch(0.5);
  const QFamily fam = QFamily::tabular(2, 2);
  const Theta theta = table_to_theta(q_star(mdp));
  WatkinsState st{theta, 0};
  const auto sched = StepSchedule::diminishing(1.0, 0.85);
  for (const auto& s : simulate_chain(mdp, BehaviorPolicy::uniform(2, 2), 4, 1000))
    st = watkins_step(std::move(st), mdp, fam, s, sched);
  EXPECT_LE((st.theta - theta).cwiseAbs().maxCoeff(), 1e-11);
  EXPECT_EQ(st.n, 1000u);
}

TEST(Watkins, LinearMatchesTabularWithIndicators) {
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily tab = QFamily::tabular(6, 2), lin = QFamily::linear(6, 2, indicator_basis(6, 2));
  WatkinsState a{Theta::Zero(12), 0}, b{Theta::Zero(12), 0};
  const auto sched = StepSchedule::diminishing();
  for (const auto& s : simulate_chain(mdp, BehaviorPolicy::uniform(6, 2), 4, 2000)) {
    a = watkins_step(std::move(a), mdp, tab, s, sched);
    b = watkins_step(std::move(b), mdp, lin, s, sched);
  }
  EXPECT_EQ(a.theta, b.theta);
}

// ---- GQ -------------------------------------------------------------------------------

TEST(Gq, FastIterateTracksMFbar) {
  const FiniteMdp mdp = fixtures::sticky_two_state(0.9);
  const QFamily fam = QFamily::tabular(2, 2);
  const auto policy = BehaviorPolicy::uniform(2, 2);
  const MeanField mf(mdp, fam, policy);
  Theta theta(4);
  theta << 1.0, -0.5, 2.0, 0.25;
  // Tabular: M = E[zeta zeta^T]^{-1} = Pi^{-1}.
  const Vector target = mf.pi().cwiseInverse().asDiagonal() * mf.fbar(theta);
  GqState st = gq_init(fam, theta);
  const auto sched = StepSchedule::diminishing(10.0, 0.6);
  ChainSimulator sim(mdp, policy, 5);
  for (int i = 0; i < 400000; ++i) {
    st = gq_step(std::move(st), mdp, fam, sim.next(), sched);
    st.theta = theta;  // freeze the slow iterate
  }
  EXPECT_LE((st.phi - target).norm(), 2e-2 * (1.0 + target.norm()));
}

TEST(Gq, NoMovementWhenTdAndPhiVanish) {
  const FiniteMdp mdp = fixtures::two_state_switch(0.5);
  const QFamily fam = QFamily::tabular(2, 2);
  const Theta theta = table_to_theta(q_star(mdp));
  GqState st = gq_init(fam, theta);
  for (const auto& s : simulate_chain(mdp, BehaviorPolicy::uniform(2, 2), 2, 500))
    st = gq_step(std::move(st), mdp, fam, s, StepSchedule::diminishing());
  EXPECT_LE((st.theta - theta).cwiseAbs().maxCoeff(), 1e-11);
  EXPECT_LE(st.phi.cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Gq, SingleStateFixedPoint) {
  const FiniteMdp mdp = fixtures::single_state(1.0, 0.5);
  const QFamily fam = QFamily::tabular(1, 1);
  GqState st = gq_init(fam, Theta::Zero(1));
  ChainSimulator sim(mdp, BehaviorPolicy::uniform(1, 1), 1);
  const auto sched = StepSchedule::diminishing(1.0, 0.85, 10.0);
  for (int i = 0; i < 100000; ++i) st = gq_step(std::move(st), mdp, fam, sim.next(), sched);
  EXPECT_NEAR(st.theta[0], 2.0, 1e-3);
}

TEST(Gq, RejectsNetworks) {
  const FiniteMdp mdp = fixtures::coin_flip(0.9);
  const QFamily fam = QFamily::mlp(2, 2, MlpSpec{{3}, 0.01});
  EXPECT_EQ(code_of([&] {
              gq_step(gq_init(fam, Theta::Zero(static_cast<Eigen::Index>(fam.dim()))), mdp, fam, ChainSample{},
                      StepSchedule::diminishing());
            }),
            ErrorCode::NotLinearFamily);
}

// ---- Zap SA -------------------------------------------------------------------------------

TEST(ZapSa, UnitBetaCopiesSample) {
  Rng rng(10);
  ZapState st = zap_init(Theta::Zero(3), -Matrix::Identity(3, 3));
  const auto sched = StepSchedule::constant(0.01, 100.0);  // beta = 1
  const Matrix a = oracle::random_matrix(rng, 3, 3);
  st = zap_sa_step(std::move(st), Vector::Zero(3), a, sched);
  EXPECT_LE((st.a_hat - a).norm(), 1e-15);
}

TEST(ZapSa, ConstantSampleIsAveragedIn) {
  Rng rng(11);
  const Matrix a_star = oracle::random_hurwitz(rng, 3);
  ZapState st = zap_init(Theta::Zero(3), Matrix::Zero(3, 3));
  const auto sched = StepSchedule::diminishing(1.0, 0.85);
  for (int i = 0; i < 20000; ++i) zap_sa_update(st, Vector::Zero(3), a_star, sched);
  EXPECT_LE((st.a_hat - a_star).norm(), 1e-3 * a_star.norm());
}

TEST(ZapSa, LinearRootFinding) {
  Rng rng(12);
  const Matrix a = -oracle::random_hurwitz(rng, 3);  // fbar(theta) = b - A theta
  const Vector b = oracle::random_vector(rng, 3);
  const Vector root = a.fullPivLu().solve(b);
  ZapState st = zap_init(Theta::Zero(3), -Matrix::Identity(3, 3));
  const auto sched = StepSchedule::diminishing(100.0, 0.85);
  for (int i = 0; i < 100000; ++i) {
    Vector noise(3);
    for (Eigen::Index k = 0; k < 3; ++k) noise[k] = 0.1 * rng.normal();
    const Matrix a_noise = 0.1 * oracle::random_matrix(rng, 3, 3);
    zap_sa_update(st, b - a * st.theta + noise, -a + a_noise, sched);
  }
  EXPECT_LE((st.theta - root).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(ZapSa, AHatStaysInConvexHull) {
  Rng rng(13);
  const Matrix a0 = oracle::random_matrix(rng, 2, 2);
  Matrix lo = a0, hi = a0;
  ZapState st = zap_init(Theta::Zero(2), a0);
  const auto sched = StepSchedule::diminishing(0.0, 0.85);  // beta_1 = 1
  for (int i = 0; i < 5000; ++i) {
    const Matrix sample = oracle::random_matrix(rng, 2, 2, -5, 5);
    lo = lo.cwiseMin(sample);
    hi = hi.cwiseMax(sample);
    zap_sa_update(st, Vector::Zero(2), sample, sched);
    ASSERT_TRUE(((st.a_hat.array() >= lo.array() - 1e-12) && (st.a_hat.array() <= hi.array() + 1e-12)).all());
  }
}

TEST(ZapSa, GainCadenceAndProjection) {
  Rng rng(14);
  ZapOptions opt;
  opt.gain_period = 5;
  opt.epsilon = 1e-3;
  ZapState st = zap_init(Theta::Zero(2), -Matrix::Identity(2, 2), opt);
  const auto sched = StepSchedule::diminishing(1.0, 0.85);
  Matrix refreshed_from = st.a_hat;
  for (int i = 0; i < 23; ++i) {
    const bool refresh = st.n % 5 == 0;
    zap_sa_update(st, Vector::Ones(2), oracle::random_matrix(rng, 2, 2) - 2 * Matrix::Identity(2, 2), sched);
    if (refresh) refreshed_from = st.a_hat;
    EXPECT_EQ(st.gain, zap_gain(refreshed_from, 1e-3)) << "step " << st.n;
  }
  ZapOptions small;
  small.projection_radius = 0.5;
  ZapState p = zap_init(Theta::Zero(2), -Matrix::Identity(2, 2), small);
  EXPECT_FALSE(p.projected);
  for (int i = 0; i < 10; ++i) zap_sa_update(p, Vector::Constant(2, 10.0), -Matrix::Identity(2, 2), sched);
  EXPECT_TRUE(p.projected);
  EXPECT_LE(p.theta.norm(), 0.5 + 1e-12);
}

// ---- Zap Q ------------------------------------------------------------------------------------

TEST(ZapQ, SixStateConvergence) {
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::tabular(6, 2);
  TrainConfig cfg;
  cfg.n_steps = 200000;
  cfg.checkpoint_every = 200000;
  cfg.seed = 0;
  const auto rec = run_training(mdp, fam, BehaviorPolicy::uniform(6, 2), cfg);
  EXPECT_LE((q_table(fam, rec.back().theta) - q_star(mdp)).cwiseAbs().maxCoeff(), 1e-2);
  EXPECT_LE(rec.back().fbar_norm, 1e-3);
}

TEST(ZapQ, StationaryAtRootOnDeterministicMdp) {
  const FiniteMdp mdp = fixtures::two_state_switch(0.5);
  const QFamily fam = QFamily::tabular(2, 2);
  const auto policy = BehaviorPolicy::uniform(2, 2);
  const Theta theta = table_to_theta(q_star(mdp));
  ZapState st = zap_init(theta, MeanField(mdp, fam, policy).fbar_jacobian(theta));
  for (const auto& s : simulate_chain(mdp, policy, 3, 1000)) zap_q_update(st, mdp, fam, s, StepSchedule::diminishing());
  EXPECT_LE((st.theta - theta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ZapQ, GainPeriodOneVersusFifty) {
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::tabular(6, 2);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TrainConfig cfg;
    cfg.n_steps = 50000;
    cfg.checkpoint_every = 50000;
    cfg.seed = seed;
    cfg.zap.gain_period = 50;
    const double slow = run_training(mdp, fam, BehaviorPolicy::uniform(6, 2), cfg).back().fbar_norm;
    cfg.zap.gain_period = 1;
    const double fast = run_training(mdp, fam, BehaviorPolicy::uniform(6, 2), cfg).back().fbar_norm;
    EXPECT_LE(std::max(slow, fast), 2.0 * std::min(slow, fast)) << "seed " << seed;
  }
}

TEST(ZapQ, TabularASamplesAverageToMatrixForm) {
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::tabular(6, 2);
  const auto policy = BehaviorPolicy::uniform(6, 2);
  const MeanField mf(mdp, fam, policy);
  Rng rng(15);
  const Theta theta = oracle::random_vector(rng, 12);
  const Matrix closed = mf.Pi() * (mdp.gamma() * mf.P() * mf.selector(greedy_policy(fam, theta)) - Matrix::Identity(12, 12));
  Matrix avg = Matrix::Zero(12, 12);
  ChainSimulator sim(mdp, policy, 16);
  for (int i = 0; i < 1000; ++i) sim.next();
  const int n = 1000000;
  for (int i = 0; i < n; ++i) avg += zap_q_sample(mdp, fam, theta, theta, sim.next()).a;
  avg /= n;
  EXPECT_LE((avg - closed).cwiseAbs().maxCoeff(), 1e-2);
  EXPECT_LE((mf.fbar_jacobian(theta) - closed).norm(), 1e-15);
}

TEST(ZapQ, SubgradientInequalityForNonnegativeLinear) {
  Rng rng(17);
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::linear(6, 2, nonnegative_basis(rng, 12, 5));
  const auto chain = simulate_chain(mdp, BehaviorPolicy::uniform(6, 2), 18, 1000);
  for (int trial = 0; trial < 1000; ++trial) {
    const Theta theta = oracle::random_vector(rng, 5, -3, 3), v = oracle::random_vector(rng, 5, -3, 3);
    const ChainSample& s = chain[static_cast<std::size_t>(trial)];
    const ZapSample at = zap_q_sample(mdp, fam, theta, theta, s);
    const ZapSample moved = zap_q_sample(mdp, fam, theta + v, theta + v, s);
    EXPECT_TRUE((moved.f - at.f - at.a * v).minCoeff() >= -1e-12);
  }
}

TEST(ZapQ, NetworkSampleOmitsSecondDerivative) {
  Rng rng(19);
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::mlp(6, 2, MlpSpec{{8}, 0.01});
  const Theta theta = initial_theta(fam, 1), anchor = initial_theta(fam, 2);
  const ChainSample s{3, 1, 0, 1};
  const ZapSample z = zap_q_sample(mdp, fam, theta, anchor, s);
  const Vector zeta = q_gradient(fam, anchor, 1, 1);
  const std::size_t g = greedy_action(fam, theta, 3);
  const Matrix expected = zeta * (mdp.gamma() * q_gradient(fam, theta, 3, g) - zeta).transpose();
  EXPECT_LE((z.a - expected).norm(), 1e-14 * (1 + expected.norm()));
  EXPECT_NEAR(z.td, td_error(mdp, fam, theta, s), 1e-14);
  EXPECT_LE((z.f - z.td * zeta).norm(), 1e-14);
}

TEST(ZapQ, EligibilityAnchorRefreshCadence) {
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::mlp(6, 2, MlpSpec{{4}, 0.01});
  ZapOptions opt;
  opt.eligibility_period = 7;
  opt.epsilon = 1e-4;
  const Theta theta0 = initial_theta(fam, 3);
  const auto d = static_cast<Eigen::Index>(fam.dim());
  ZapState st = zap_init(theta0, -Matrix::Identity(d, d), opt);
  Theta expected_anchor = theta0;
  for (const auto& s : simulate_chain(mdp, BehaviorPolicy::uniform(6, 2), 3, 30)) {
    if (st.n % 7 == 0) expected_anchor = st.theta;
    zap_q_update(st, mdp, fam, s, StepSchedule::diminishing());
    EXPECT_EQ(st.anchor, expected_anchor);
  }
}

// ---- training driver ---------------------------------------------------------------------------

TEST(RunTraining, ZeroStepsGivesInitialCheckpoint) {
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::tabular(6, 2);
  for (Algorithm algo : {Algorithm::Watkins, Algorithm::Gq, Algorithm::ZapQ}) {
    TrainConfig cfg;
    cfg.algorithm = algo;
    cfg.n_steps = 0;
    const auto rec = run_training(mdp, fam, BehaviorPolicy::uniform(6, 2), cfg);
    ASSERT_EQ(rec.size(), 1u);
    EXPECT_EQ(rec[0].n, 0u);
    EXPECT_EQ(rec[0].theta, Theta::Zero(12));
  }
}

TEST(RunTraining, DeterministicAndIncreasingCheckpoints) {
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::mlp(6, 2, MlpSpec{{8}, 0.01});
  TrainConfig cfg;
  cfg.n_steps = 1500;
  cfg.checkpoint_every = 400;
  cfg.seed = 5;
  cfg.num_rollouts = 10;
  const auto policy = BehaviorPolicy::epsilon_greedy(0.3);
  const auto a = run_training(mdp, fam, policy, cfg), b = run_training(mdp, fam, policy, cfg);
  ASSERT_EQ(a.size(), 5u);  // 0, 400, 800, 1200, 1500
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].n, b[k].n);
    EXPECT_EQ(a[k].theta, b[k].theta);
    EXPECT_EQ(a[k].fbar_norm, b[k].fbar_norm);
    EXPECT_EQ(a[k].avg_reward, b[k].avg_reward);
    if (k > 0) {
      EXPECT_GT(a[k].n, a[k - 1].n);
    }
  }
  EXPECT_EQ(a.back().n, 1500u);
}

TEST(RunTraining, FbarDecreasesAfterBurnIn) {
  const FiniteMdp mdp = fixtures::six_state();
  const QFamily fam = QFamily::tabular(6, 2);
  TrainConfig cfg;
  cfg.n_steps = 200000;
  cfg.checkpoint_every = 20000;
  cfg.seed = 0;
  const auto rec = run_training(mdp, fam, BehaviorPolicy::uniform(6, 2), cfg);
  ASSERT_EQ(rec.size(), 11u);
  // Least-squares slope of log |fbar| over the final 10 checkpoints is negative
  // and the last value is below the first of them.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 1; k < rec.size(); ++k) {
    const double x = std::log(static_cast<double>(rec[k].n)), y = std::log(rec[k].fbar_norm);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (10 * sxy - sx * sy) / (10 * sxx - sx * sx);
  EXPECT_LT(slope, 0.0);
  EXPECT_LT(rec.back().fbar_norm, rec[1].fbar_norm);
}

TEST(RunTraining, GqNeedsLinearFamily) {
  const FiniteMdp mdp = fixtures::six_state();
  TrainConfig cfg;
  cfg.algorithm = Algorithm::Gq;
  EXPECT_EQ(code_of([&] {
              run_training(mdp, QFamily::mlp(6, 2, MlpSpec{{4}, 0.01}), BehaviorPolicy::uniform(6, 2), cfg);
            }),
            ErrorCode::NotLinearFamily);
}
