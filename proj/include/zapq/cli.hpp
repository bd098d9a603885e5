#pragma once

// Command implementations behind the zapq executable. Kept in a header so
// tests can drive the commands in-process.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "zapq/aggregate.hpp"
#include "zapq/analysis.hpp"
#include "zapq/config.hpp"
#include "zapq/error.hpp"
#include "zapq/evaluation.hpp"
#include "zapq/io.hpp"
#include "zapq/odelab.hpp"
#include "zapq/plot.hpp"
#include "zapq/training.hpp"

namespace zapq::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

namespace detail {

inline fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

inline io::Json checkpoints_json(const QFamily& fam, const std::vector<LearnRecord>& records) {
  io::Json j = io::checkpoint_to_json(fam, records.back().theta);
  j.erase("theta");
  io::Json list = io::Json::array();
  for (const auto& r : records) list.push_back({{"n", r.n}, {"theta", io::to_json(r.theta)}});
  j["checkpoints"] = std::move(list);
  return j;
}

inline io::Json timing_json(const std::vector<LearnRecord>& records) {
  io::Json j = io::Json::array();
  for (const auto& r : records) j.push_back({{"n", r.n}, {"wall_seconds", r.wall_seconds}});
  return j;
}

inline Theta initial_parameter(const ExperimentConfig& c, const QFamily& fam) {
  if (!c.checkpoint.empty()) {
    io::Checkpoint ck = io::read_checkpoint(c.checkpoint);
    if (!(ck.family == fam)) fail(ErrorCode::Config, "checkpoint: family does not match the configured family");
    return ck.theta;
  }
  return initial_theta(fam, derive_seed(c.base_seed, kInitStream));
}

}  // namespace detail

inline void train(const ExperimentConfig& c) {
  const FiniteMdp mdp = load_mdp(c);
  const QFamily fam = make_family(c, mdp);
  const auto out = detail::prepare_dir(c.output_dir);
  const auto records = run_training(mdp, fam, make_policy(c, mdp), make_train_config(c, c.base_seed));
  io::write_text((out / "train.csv").string(), run_csv(metric_rows(0, records, c.metrics)));
  io::write_json((out / "checkpoints.json").string(), detail::checkpoints_json(fam, records));
  io::write_checkpoint((out / "final.json").string(), fam, records.back().theta);
  io::write_json((out / "timing.json").string(), detail::timing_json(records));
}

/// Runs num_runs seeds (base_seed + i) on a worker pool, one CSV per run,
/// then reduces the run files to percentile curves.
inline void sweep(const ExperimentConfig& c) {
  const FiniteMdp mdp = load_mdp(c);
  const QFamily fam = make_family(c, mdp);
  const BehaviorPolicy policy = make_policy(c, mdp);
  make_train_config(c, 0);  // surface config errors before spawning workers
  const auto out = detail::prepare_dir(c.output_dir);
  const auto runs_dir = detail::prepare_dir((out / "runs").string());

  auto run_file = [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu.csv", i);
    return (runs_dir / name).string();
  };

  const std::size_t num_runs = c.num_runs;
  std::size_t workers = c.workers ? c.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, num_runs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<io::Json> timing(num_runs);
  auto worker = [&] {
    for (std::size_t i = next++; i < num_runs; i = next++) {
      try {
        const auto records = run_training(mdp, fam, policy, make_train_config(c, c.base_seed + i));
        io::write_text(run_file(i), run_csv(metric_rows(i, records, c.metrics)));
        timing[i] = detail::timing_json(records);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<MetricRow> rows;
  for (std::size_t i = 0; i < num_runs; ++i) {
    auto part = read_run_csv(run_file(i));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  for (const auto& metric : c.metrics) {
    const AggregateResult agg = aggregate(rows, metric);
    if (agg.empty()) continue;
    io::write_text((out / ("aggregate_" + metric + ".csv")).string(), aggregate_csv(agg));
    io::write_text((out / ("aggregate_" + metric + ".svg")).string(), plot::svg(agg));
  }
  io::write_json((out / "timing.json").string(), timing);
}

inline void eval(const ExperimentConfig& c) {
  const FiniteMdp mdp = load_mdp(c);
  const QFamily fam = make_family(c, mdp);
  const Theta theta = detail::initial_parameter(c, fam);
  const auto out = detail::prepare_dir(c.output_dir);
  if (c.num_rollouts == 0) fail(ErrorCode::Config, "num_rollouts must be positive for eval");
  const PolicyValue v = evaluate_policy(mdp, fam, theta, c.num_rollouts, c.horizon, derive_seed(c.base_seed, kEvalStream));
  std::ostringstream csv;
  csv << "num_rollouts,horizon,mean,std_error\n"
      << v.rollouts << ',' << c.horizon << ',' << io::format_double(v.mean) << ',' << io::format_double(v.std_error)
      << '\n';
  io::write_text((out / "eval.csv").string(), csv.str());
}

inline void flow(const ExperimentConfig& c) {
  const FiniteMdp mdp = load_mdp(c);
  const QFamily fam = make_family(c, mdp);
  if (!fam.is_linear()) fail(ErrorCode::Config, "flow: needs a tabular or linear family");
  if (c.policy != "uniform") fail(ErrorCode::Config, "flow: the mean field needs a stationary policy");
  const MeanField mf(mdp, fam, make_policy(c, mdp));
  Vector w0 = c.flow_w0 ? *c.flow_w0 : detail::initial_parameter(c, fam);
  if (static_cast<std::size_t>(w0.size()) != fam.dim()) fail(ErrorCode::Config, "flow_w0: wrong dimension");
  const auto out = detail::prepare_dir(c.output_dir);
  FlowTrace tr;
  if (c.flow == "regularized") {
    tr = integrate_regularized_flow(mean_field_vector_field(mf), c.epsilon, w0, c.flow_T, c.flow_dt);
  } else if (c.flow == "nr") {
    tr = integrate_nr_flow(mean_field_vector_field(mf), w0, c.flow_T, c.flow_dt);
  } else if (c.flow == "gradient") {
    // M = E[zeta zeta^T]^{-1}
    Matrix second = Matrix::Zero(w0.size(), w0.size());
    for (std::size_t x = 0; x < mdp.num_states(); ++x)
      for (std::size_t u = 0; u < mdp.num_actions(); ++u) {
        const Vector z = q_gradient(fam, w0, x, u);
        second += mf.pi()[static_cast<Eigen::Index>(mdp.pair(x, u))] * z * z.transpose();
      }
    const Matrix m = spd_solve(second, Matrix::Identity(w0.size(), w0.size()));
    tr = integrate_gradient_flow(mean_field_vector_field(mf), 0.5 * (m + m.transpose()), w0, c.flow_T, c.flow_dt);
  } else {
    tr = integrate_regularized_flow(field_at_infinity(mf), c.epsilon, w0, c.flow_T, c.flow_dt);
  }
  io::write_text((out / "flow.csv").string(), flow_csv(tr));
  io::write_text((out / "flow.svg").string(), plot::svg(tr));
}

inline io::Json expansion_json(const EpsilonExpansion& e) {
  io::Json j;
  j["Sigma_optimal"] = io::to_json(e.sigma_optimal);
  j["Sigma2"] = io::to_json(e.sigma2);
  io::Json terms = io::Json::array();
  for (const auto& t : e.terms)
    terms.push_back({{"epsilon", t.epsilon},
                     {"Sigma_theta", io::to_json(t.sigma)},
                     {"remainder_norm", t.remainder.norm()},
                     {"eig_real_parts", t.eig_real_parts},
                     {"eig_real", t.eig_real}});
  j["terms"] = std::move(terms);
  j["ratios"] = e.ratios;
  j["fitted_order"] = std::isfinite(e.fitted_order) ? io::Json(e.fitted_order) : io::Json(nullptr);
  return j;
}

inline void analyze(const ExperimentConfig& c) {
  const auto out = detail::prepare_dir(c.output_dir);
  Matrix a_star, sigma_delta;
  io::Json extra = io::Json::object();
  if (c.A_star) {
    a_star = *c.A_star;
    sigma_delta = *c.Sigma_Delta;
    if (a_star.rows() != a_star.cols() || sigma_delta.rows() != a_star.rows() || sigma_delta.cols() != a_star.cols())
      fail(ErrorCode::Config, "A_star and Sigma_Delta must be square of equal size");
  } else {
    const FiniteMdp mdp = load_mdp(c);
    const QFamily fam = make_family(c, mdp);
    if (!fam.is_linear()) fail(ErrorCode::Config, "analyze: needs a tabular or linear family");
    if (c.policy != "uniform") fail(ErrorCode::Config, "analyze: the mean field needs a stationary policy");
    const BehaviorPolicy policy = make_policy(c, mdp);
    const MeanField mf(mdp, fam, policy);
    const Theta root = fam.kind() == FamilyKind::Tabular ? table_to_theta(q_star(mdp))
                                                         : find_root(mf, Theta::Zero(static_cast<Eigen::Index>(fam.dim())));
    a_star = mf.fbar_jacobian(root);
    sigma_delta = update_noise_covariance(mf, root);
    extra["theta_star"] = io::to_json(root);
    if (fam.kind() == FamilyKind::Tabular) {
      const GqLinearization gq = gq_linearization(mdp, policy);
      extra["gq"] = {{"lambda_max", gq.lambda_max}, {"bound", gq.bound}, {"bound_holds", gq.bound_holds}};
      const RateProbe probe = watkins_rate_probe(mdp, c.gain_scale, WatkinsNormalization::PerVisit, policy);
      extra["watkins"] = {{"gain_scale", c.gain_scale},
                          {"eig_real_parts", probe.eig_real_parts},
                          {"condition_holds", probe.condition_holds}};
    }
  }
  const auto d = a_star.rows();
  Matrix gain;
  if (c.gain == "scalar") {
    gain = c.gain_scale * Matrix::Identity(d, d);
  } else if (c.gain == "regularized") {
    gain = zap_gain(a_star, c.epsilon);
  } else {
    if (is_singular(a_star)) fail(ErrorCode::SingularAstar, "analyze: A* is singular");
    gain = -a_star.fullPivLu().inverse();
  }
  io::Json report = report_to_json(asymptotic_covariance(a_star, sigma_delta, gain, !is_singular(a_star)));
  io::write_json((out / "covariance.json").string(), report);
  if (!c.eps_list.empty())
    io::write_json((out / "expansion.json").string(), expansion_json(zap_epsilon_expansion(a_star, sigma_delta, c.eps_list)));
  if (!extra.empty()) io::write_json((out / "analysis.json").string(), extra);
}

inline void report_error(std::ostream& err, const std::string& code, const std::string& message) {
  err << io::Json{{"error", code}, {"message", message}}.dump() << '\n';
}

/// Runs one command; returns the process exit code and writes a JSON error
/// object to `err` on failure.
inline int run_command(const std::string& command, const io::Json& config, std::ostream& err) {
  try {
    const ExperimentConfig c = config_from_json(config);
    if (command == "train") train(c);
    else if (command == "sweep") sweep(c);
    else if (command == "eval") eval(c);
    else if (command == "flow") flow(c);
    else if (command == "analyze") analyze(c);
    else fail(ErrorCode::Config, "unknown command '" + command + "'");
    return kExitOk;
  } catch (const Error& e) {
    report_error(err, std::string(to_string(e.code())), e.message());
    return e.code() == ErrorCode::Config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    report_error(err, "Runtime", e.what());
    return kExitRuntime;
  }
}

inline int main(int argc, char** argv) {
  CLI::App app{"Zap Q-learning experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::string output_dir;
  std::vector<std::string> overrides;
  for (const char* name : {"train", "analyze", "flow", "eval", "sweep"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("config", config_path, "JSON configuration file")->required();
    sub->add_option("-o,--output-dir", output_dir, "Override output_dir");
    sub->add_option("-s,--set", overrides, "Override a key: key=<json value>");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error(std::cerr, "Config", e.what());
    return kExitConfig;
  }
  io::Json config;
  try {
    config = io::read_json(config_path);
    if (!config.is_object()) fail(ErrorCode::Config, config_path + ": expected a JSON object");
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) fail(ErrorCode::Config, "--set expects key=value, got '" + o + "'");
      const std::string key = o.substr(0, eq), value = o.substr(eq + 1);
      io::Json parsed = io::Json::parse(value, nullptr, false);
      config[key] = parsed.is_discarded() ? io::Json(value) : parsed;
    }
    if (!output_dir.empty()) config["output_dir"] = output_dir;
  } catch (const Error& e) {
    report_error(std::cerr, std::string(to_string(e.code())), e.message());
    return e.code() == ErrorCode::Io || e.code() == ErrorCode::Config ? kExitConfig : kExitRuntime;
  }
  return run_command(app.get_subcommands().front()->get_name(), config, std::cerr);
}

}  // namespace zapq::cli
