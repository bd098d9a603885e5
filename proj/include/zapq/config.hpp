#pragma once

// Experiment configuration: a flat JSON object. Unknown keys are rejected;
// serialization writes every key, so parse(serialize(c)) reproduces c.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "zapq/aggregate.hpp"
#include "zapq/algorithms.hpp"
#include "zapq/error.hpp"
#include "zapq/fixtures.hpp"
#include "zapq/funcapprox.hpp"
#include "zapq/io.hpp"
#include "zapq/mdp.hpp"
#include "zapq/training.hpp"

namespace zapq {

struct ExperimentConfig {
  std::string mdp = "builtin:six_state";  // file path or builtin:<name>
  std::optional<double> gamma;            // builtin MDPs only
  io::Json family = "tabular";
  std::string algorithm = "zapq";
  std::string schedule = "diminishing";
  double n0 = 100.0;
  double rho = 0.85;
  double alpha = 0.005;
  double k_ratio = 100.0;
  double gain_scale = 1.0;
  double epsilon = 1e-6;
  std::uint64_t N_d = 50;
  std::uint64_t N_zeta = 2000;
  double projection_radius = 1e6;
  std::string policy = "uniform";  // uniform | epsilon_greedy
  double exploration = 0.2;
  std::uint64_t n_steps = 10000;
  std::uint64_t checkpoint_every = 1000;
  std::optional<std::uint64_t> warmup;
  std::uint64_t num_runs = 50;
  std::uint64_t base_seed = 0;
  std::uint64_t num_rollouts = 100;
  std::uint64_t horizon = 200;
  std::string output_dir = "out";
  std::uint64_t workers = 0;  // 0: one per hardware thread
  std::vector<std::string> metrics = metric_names();
  std::string checkpoint;  // parameter file for eval and flow
  std::string flow = "regularized";  // regularized | nr | gradient | infinity
  double flow_T = 10.0;
  double flow_dt = 1e-2;
  std::optional<Vector> flow_w0;
  std::optional<Matrix> A_star;
  std::optional<Matrix> Sigma_Delta;
  std::string gain = "optimal";  // optimal | scalar | regularized
  std::vector<double> eps_list;
};

namespace detail {

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{
      "mdp",         "gamma",          "family",      "algorithm",    "schedule",     "n0",
      "rho",         "alpha",          "k_ratio",     "gain_scale",   "epsilon",      "N_d",
      "N_zeta",      "projection_radius", "policy",   "exploration",  "n_steps",      "checkpoint_every",
      "warmup",      "num_runs",       "base_seed",   "num_rollouts", "horizon",      "output_dir",
      "workers",     "metrics",        "checkpoint",  "flow",         "flow_T",       "flow_dt",
      "flow_w0",     "A_star",         "Sigma_Delta", "gain",         "eps_list"};
  return keys;
}

inline std::string string_field(const io::Json& j, const std::string& key) {
  if (!j.is_string()) fail(ErrorCode::Config, key + ": expected a string");
  return j.get<std::string>();
}

inline void one_of(const std::string& value, std::initializer_list<const char*> allowed, const std::string& key) {
  for (const char* a : allowed)
    if (value == a) return;
  fail(ErrorCode::Config, key + ": unsupported value '" + value + "'");
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorCode::Config, msg);
  };
  detail::one_of(c.algorithm, {"watkins", "gq", "zapq"}, "algorithm");
  detail::one_of(c.schedule, {"diminishing", "constant"}, "schedule");
  detail::one_of(c.policy, {"uniform", "epsilon_greedy"}, "policy");
  detail::one_of(c.flow, {"regularized", "nr", "gradient", "infinity"}, "flow");
  detail::one_of(c.gain, {"optimal", "scalar", "regularized"}, "gain");
  check(c.n0 >= 0.0, "n0 must be >= 0");
  check(c.rho > 0.5 && c.rho < 1.0, "rho must lie in (0.5, 1)");
  check(c.alpha > 0.0, "alpha must be positive");
  check(c.k_ratio >= 1.0, "k_ratio must be >= 1");
  check(c.gain_scale > 0.0, "gain_scale must be positive");
  check(c.epsilon > 0.0, "epsilon must be positive");
  check(c.N_d >= 1 && c.N_zeta >= 1, "N_d and N_zeta must be >= 1");
  check(c.exploration >= 0.0 && c.exploration <= 1.0, "exploration must lie in [0, 1]");
  check(c.checkpoint_every >= 1, "checkpoint_every must be >= 1");
  check(c.num_runs >= 1, "num_runs must be >= 1");
  check(c.horizon >= 1, "horizon must be >= 1");
  check(c.flow_T >= 0.0 && c.flow_dt > 0.0, "flow_T must be >= 0 and flow_dt > 0");
  check(!c.output_dir.empty(), "output_dir must be nonempty");
  check(c.A_star.has_value() == c.Sigma_Delta.has_value(), "A_star and Sigma_Delta must be given together");
  for (const auto& m : c.metrics) {
    bool known = false;
    for (const auto& name : metric_names()) known = known || m == name;
    check(known, "metrics: unknown metric '" + m + "'");
  }
  for (double e : c.eps_list) check(e > 0.0, "eps_list entries must be positive");
}

inline ExperimentConfig config_from_json(const io::Json& j) {
  if (!j.is_object()) fail(ErrorCode::Config, "config: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!detail::config_keys().count(key)) fail(ErrorCode::Config, "config: unknown key '" + key + "'");
  ExperimentConfig c;
  auto str = [&](const char* key, std::string& out) {
    if (j.contains(key)) out = detail::string_field(j[key], key);
  };
  auto real = [&](const char* key, double& out) {
    if (j.contains(key)) out = io::number(j[key], key);
  };
  auto cnt = [&](const char* key, std::uint64_t& out) {
    if (j.contains(key)) out = io::count(j[key], key);
  };
  str("mdp", c.mdp);
  if (j.contains("gamma") && !j["gamma"].is_null()) c.gamma = io::number(j["gamma"], "gamma");
  if (j.contains("family")) c.family = j["family"];
  str("algorithm", c.algorithm);
  str("schedule", c.schedule);
  real("n0", c.n0);
  real("rho", c.rho);
  real("alpha", c.alpha);
  real("k_ratio", c.k_ratio);
  real("gain_scale", c.gain_scale);
  real("epsilon", c.epsilon);
  cnt("N_d", c.N_d);
  cnt("N_zeta", c.N_zeta);
  real("projection_radius", c.projection_radius);
  str("policy", c.policy);
  real("exploration", c.exploration);
  cnt("n_steps", c.n_steps);
  cnt("checkpoint_every", c.checkpoint_every);
  if (j.contains("warmup") && !j["warmup"].is_null()) c.warmup = io::count(j["warmup"], "warmup");
  cnt("num_runs", c.num_runs);
  cnt("base_seed", c.base_seed);
  cnt("num_rollouts", c.num_rollouts);
  cnt("horizon", c.horizon);
  str("output_dir", c.output_dir);
  cnt("workers", c.workers);
  if (j.contains("metrics")) {
    if (!j["metrics"].is_array()) fail(ErrorCode::Config, "metrics: expected an array of names");
    c.metrics.clear();
    for (const auto& m : j["metrics"]) c.metrics.push_back(detail::string_field(m, "metrics"));
  }
  str("checkpoint", c.checkpoint);
  str("flow", c.flow);
  real("flow_T", c.flow_T);
  real("flow_dt", c.flow_dt);
  if (j.contains("flow_w0") && !j["flow_w0"].is_null()) c.flow_w0 = io::vector_from_json(j["flow_w0"], "flow_w0");
  if (j.contains("A_star") && !j["A_star"].is_null()) c.A_star = io::matrix_from_json(j["A_star"], "A_star");
  if (j.contains("Sigma_Delta") && !j["Sigma_Delta"].is_null())
    c.Sigma_Delta = io::matrix_from_json(j["Sigma_Delta"], "Sigma_Delta");
  str("gain", c.gain);
  if (j.contains("eps_list")) {
    const Vector e = io::vector_from_json(j["eps_list"], "eps_list");
    c.eps_list.assign(e.data(), e.data() + e.size());
  }
  validate(c);
  return c;
}

inline io::Json config_to_json(const ExperimentConfig& c) {
  io::Json j;
  j["mdp"] = c.mdp;
  j["gamma"] = c.gamma ? io::Json(*c.gamma) : io::Json(nullptr);
  j["family"] = c.family;
  j["algorithm"] = c.algorithm;
  j["schedule"] = c.schedule;
  j["n0"] = c.n0;
  j["rho"] = c.rho;
  j["alpha"] = c.alpha;
  j["k_ratio"] = c.k_ratio;
  j["gain_scale"] = c.gain_scale;
  j["epsilon"] = c.epsilon;
  j["N_d"] = c.N_d;
  j["N_zeta"] = c.N_zeta;
  j["projection_radius"] = c.projection_radius;
  j["policy"] = c.policy;
  j["exploration"] = c.exploration;
  j["n_steps"] = c.n_steps;
  j["checkpoint_every"] = c.checkpoint_every;
  j["warmup"] = c.warmup ? io::Json(*c.warmup) : io::Json(nullptr);
  j["num_runs"] = c.num_runs;
  j["base_seed"] = c.base_seed;
  j["num_rollouts"] = c.num_rollouts;
  j["horizon"] = c.horizon;
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  j["metrics"] = c.metrics;
  j["checkpoint"] = c.checkpoint;
  j["flow"] = c.flow;
  j["flow_T"] = c.flow_T;
  j["flow_dt"] = c.flow_dt;
  j["flow_w0"] = c.flow_w0 ? io::to_json(*c.flow_w0) : io::Json(nullptr);
  j["A_star"] = c.A_star ? io::to_json(*c.A_star) : io::Json(nullptr);
  j["Sigma_Delta"] = c.Sigma_Delta ? io::to_json(*c.Sigma_Delta) : io::Json(nullptr);
  j["gain"] = c.gain;
  j["eps_list"] = c.eps_list;
  return j;
}

// ---- building library objects from a config -----------------------------------

inline FiniteMdp load_mdp(const ExperimentConfig& c) {
  const std::string prefix = "builtin:";
  if (c.mdp.rfind(prefix, 0) != 0) {
    if (c.gamma) fail(ErrorCode::Config, "gamma: only builtin MDPs accept a discount override");
    try {
      return io::read_mdp(c.mdp);
    } catch (const Error& e) {
      fail(ErrorCode::Config, "mdp: " + e.message());
    }
  }
  const std::string name = c.mdp.substr(prefix.size());
  try {
    if (name == "six_state") return fixtures::six_state(c.gamma.value_or(0.9));
    if (name == "two_state_switch") return fixtures::two_state_switch(c.gamma.value_or(0.5));
    if (name == "coin_flip") return fixtures::coin_flip(c.gamma.value_or(0.9));
    if (name == "sticky_two_state") return fixtures::sticky_two_state(c.gamma.value_or(0.9));
    if (name == "single_state") return fixtures::single_state(1.0, c.gamma.value_or(0.9));
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("mdp: ") + e.message());
  }
  fail(ErrorCode::Config, "mdp: unknown builtin '" + name + "'");
}

inline QFamily make_family(const ExperimentConfig& c, const FiniteMdp& mdp) {
  return io::family_from_json(c.family, mdp.num_states(), mdp.num_actions());
}

inline BehaviorPolicy make_policy(const ExperimentConfig& c, const FiniteMdp& mdp) {
  if (c.policy == "epsilon_greedy") return BehaviorPolicy::epsilon_greedy(c.exploration);
  return BehaviorPolicy::uniform(mdp.num_states(), mdp.num_actions());
}

inline StepSchedule make_schedule(const ExperimentConfig& c) {
  try {
    if (c.schedule == "constant") return StepSchedule::constant(c.alpha, c.k_ratio);
    return StepSchedule::diminishing(c.n0, c.rho, c.gain_scale);
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("schedule: ") + e.message());
  }
}

inline TrainConfig make_train_config(const ExperimentConfig& c, std::uint64_t seed) {
  TrainConfig t;
  t.algorithm = algorithm_from_string(c.algorithm);
  t.schedule = make_schedule(c);
  t.zap.epsilon = c.epsilon;
  t.zap.gain_period = c.N_d;
  t.zap.eligibility_period = c.N_zeta;
  t.zap.projection_radius = c.projection_radius;
  t.n_steps = c.n_steps;
  t.checkpoint_every = c.checkpoint_every;
  t.seed = seed;
  if (c.warmup) t.warmup = static_cast<std::size_t>(*c.warmup);
  bool wants_reward = false;
  for (const auto& m : c.metrics) wants_reward = wants_reward || m == "avg_reward";
  t.num_rollouts = wants_reward ? c.num_rollouts : 0;
  t.horizon = c.horizon;
  return t;
}

}  // namespace zapq
