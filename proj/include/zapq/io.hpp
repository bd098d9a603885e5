#pragma once

// JSON persistence: MDP definitions, parameter checkpoints, and matrix
// helpers. Doubles are written in shortest round-trip form, so
// write-then-read reproduces every value bit for bit.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zapq/error.hpp"
#include "zapq/funcapprox.hpp"
#include "zapq/linalg.hpp"
#include "zapq/mdp.hpp"

namespace zapq::io {

using Json = nlohmann::json;

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

/// Nested rows.
inline Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

/// Flat row-major.
inline Json to_json_flat(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

inline double number(const Json& j, const std::string& what) {
  if (!j.is_number()) fail(ErrorCode::Config, what + ": expected a number");
  return j.get<double>();
}

inline std::size_t count(const Json& j, const std::string& what) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
    fail(ErrorCode::Config, what + ": expected a nonnegative integer");
  return j.get<std::size_t>();
}

inline Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) fail(ErrorCode::Config, what + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], what);
  return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) fail(ErrorCode::Config, what + ": expected an array of rows");
  if (j.empty()) return Matrix(0, 0);
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) fail(ErrorCode::Config, what + ": rows must have equal length");
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = number(j[i][k], what);
  }
  return m;
}

inline Matrix flat_matrix_from_json(const Json& j, std::size_t rows, std::size_t cols, const std::string& what) {
  const Vector flat = vector_from_json(j, what);
  if (static_cast<std::size_t>(flat.size()) != rows * cols)
    fail(ErrorCode::Config, what + ": expected " + std::to_string(rows * cols) + " entries");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = flat[static_cast<Eigen::Index>(i * cols + k)];
  return m;
}

/// Shortest "%.17g"-style text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail(ErrorCode::Config, path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// ---- MDP -------------------------------------------------------------------

inline Json mdp_to_json(const FiniteMdp& mdp) {
  Json j;
  j["num_states"] = mdp.num_states();
  j["num_actions"] = mdp.num_actions();
  j["gamma"] = mdp.gamma();
  j["terminal"] = mdp.terminal();
  j["rewards"] = to_json_flat(mdp.rewards());
  Json p = Json::array();
  for (const auto& k : mdp.kernels()) p.push_back(to_json_flat(k));
  j["P"] = std::move(p);
  j["horizon_cap"] = mdp.horizon_cap() ? Json(*mdp.horizon_cap()) : Json(nullptr);
  if (mdp.initial().size() > 0) j["initial"] = to_json(mdp.initial());
  return j;
}

inline FiniteMdp mdp_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::Config, "MDP file: expected an object");
  for (const auto& [key, _] : j.items())
    if (key != "num_states" && key != "num_actions" && key != "gamma" && key != "terminal" && key != "rewards" &&
        key != "P" && key != "horizon_cap" && key != "initial")
      fail(ErrorCode::Config, "MDP file: unknown key '" + key + "'");
  for (const char* key : {"num_states", "num_actions", "gamma", "rewards", "P"})
    if (!j.contains(key)) fail(ErrorCode::Config, std::string("MDP file: missing key '") + key + "'");
  const std::size_t nx = count(j["num_states"], "num_states");
  const std::size_t nu = count(j["num_actions"], "num_actions");
  const double gamma = number(j["gamma"], "gamma");
  Matrix rewards = flat_matrix_from_json(j["rewards"], nx, nu, "rewards");
  const Json& p = j["P"];
  if (!p.is_array() || p.size() != nu) fail(ErrorCode::Config, "P: expected one matrix per action");
  std::vector<Matrix> kernels;
  for (std::size_t u = 0; u < nu; ++u)
    kernels.push_back(flat_matrix_from_json(p[u], nx, nx, "P[" + std::to_string(u) + "]"));
  std::vector<std::size_t> terminal;
  if (j.contains("terminal")) {
    if (!j["terminal"].is_array()) fail(ErrorCode::Config, "terminal: expected an array");
    for (const auto& t : j["terminal"]) terminal.push_back(count(t, "terminal"));
  }
  std::optional<std::uint64_t> cap;
  if (j.contains("horizon_cap") && !j["horizon_cap"].is_null()) {
    const Json& c = j["horizon_cap"];
    if (!(c.is_string() && (c.get<std::string>() == "inf" || c.get<std::string>() == "infinity")))
      cap = count(c, "horizon_cap");
  }
  Vector initial;
  if (j.contains("initial")) initial = vector_from_json(j["initial"], "initial");
  try {
    return FiniteMdp(std::move(kernels), std::move(rewards), gamma, std::move(terminal), cap, std::move(initial));
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("MDP file: ") + e.message());
  }
}

inline FiniteMdp read_mdp(const std::string& path) { return mdp_from_json(read_json(path)); }
inline void write_mdp(const std::string& path, const FiniteMdp& mdp) { write_json(path, mdp_to_json(mdp)); }

// ---- function families and checkpoints -----------------------------------

inline Json family_to_json(const QFamily& fam) {
  Json j;
  j["kind"] = to_string(fam.kind());
  if (fam.kind() == FamilyKind::Linear) j["basis"] = to_json(fam.basis());
  if (fam.kind() == FamilyKind::Mlp) {
    j["hidden"] = fam.mlp_spec().hidden;
    j["slope"] = fam.mlp_spec().slope;
  }
  return j;
}

inline QFamily family_from_json(const Json& j, std::size_t num_states, std::size_t num_actions) {
  if (j.is_string()) return family_from_json(Json{{"kind", j}}, num_states, num_actions);
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    fail(ErrorCode::Config, "family: expected an object with a string 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  for (const auto& [key, _] : j.items())
    if (key != "kind" && key != "basis" && key != "hidden" && key != "slope")
      fail(ErrorCode::Config, "family: unknown key '" + key + "'");
  try {
    if (kind == "tabular") return QFamily::tabular(num_states, num_actions);
    if (kind == "linear") {
      if (!j.contains("basis")) fail(ErrorCode::Config, "family: linear needs a 'basis'");
      return QFamily::linear(num_states, num_actions, matrix_from_json(j["basis"], "basis"));
    }
    if (kind == "mlp") {
      MlpSpec spec;
      if (j.contains("hidden")) {
        if (!j["hidden"].is_array()) fail(ErrorCode::Config, "family: 'hidden' must be an array");
        for (const auto& w : j["hidden"]) spec.hidden.push_back(count(w, "hidden"));
      } else {
        spec.hidden = {8};
      }
      if (j.contains("slope")) spec.slope = number(j["slope"], "slope");
      return QFamily::mlp(num_states, num_actions, std::move(spec));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    fail(ErrorCode::Config, std::string("family: ") + e.message());
  }
  fail(ErrorCode::Config, "family: unknown kind '" + kind + "'");
}

struct Checkpoint {
  QFamily family;
  Theta theta;
};

inline Json checkpoint_to_json(const QFamily& fam, const Theta& theta) {
  Json j;
  j["family"] = family_to_json(fam);
  j["num_states"] = fam.num_states();
  j["num_actions"] = fam.num_actions();
  j["dim"] = fam.dim();
  j["theta"] = to_json(theta);
  return j;
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  for (const char* key : {"family", "num_states", "num_actions", "dim", "theta"})
    if (!j.contains(key)) fail(ErrorCode::Config, std::string("checkpoint: missing key '") + key + "'");
  QFamily fam = family_from_json(j["family"], count(j["num_states"], "num_states"),
                                 count(j["num_actions"], "num_actions"));
  Theta theta = vector_from_json(j["theta"], "theta");
  if (count(j["dim"], "dim") != fam.dim() || static_cast<std::size_t>(theta.size()) != fam.dim())
    fail(ErrorCode::Config, "checkpoint: dimension mismatch");
  return {std::move(fam), std::move(theta)};
}

inline void write_checkpoint(const std::string& path, const QFamily& fam, const Theta& theta) {
  write_json(path, checkpoint_to_json(fam, theta));
}

inline Checkpoint read_checkpoint(const std::string& path) { return checkpoint_from_json(read_json(path)); }

}  // namespace zapq::io
