#pragma once

// Fixed-step RK4 integration of the flows the learning algorithms track:
// the GQ gradient flow, the Newton-Raphson flow, and the regularized
// Newton-Raphson flow, with descent and policy-switch diagnostics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "zapq/analysis.hpp"
#include "zapq/error.hpp"
#include "zapq/funcapprox.hpp"
#include "zapq/io.hpp"
#include "zapq/linalg.hpp"

namespace zapq {

/// w -> fbar(w) with its Jacobian A(w); `policy` is optional and, when set,
/// is used to flag steps across which the greedy policy changes.
struct VectorField {
  std::function<Vector(const Vector&)> field;
  std::function<Matrix(const Vector&)> jacobian;
  std::function<std::vector<std::size_t>(const Vector&)> policy;
};

struct FlowTrace {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<double> f_norms;
  std::vector<double> lyapunov;            // V = |fbar|^2 / 2
  std::vector<bool> policy_switch;         // step ending at k crossed a policy change
  double max_norm_increase = 0.0;          // max_k |fbar(w_{k+1})| - |fbar(w_k)|, floored at 0
  double max_lyapunov_increase = 0.0;

  std::size_t size() const { return times.size(); }
};

struct FlowOptions {
  double blowup = 1e8;  // |w| bound
};

namespace detail {

using Rhs = std::function<Vector(const Vector&)>;

inline FlowTrace integrate_rk4(const VectorField& vf, const Rhs& rhs, const Vector& w0, double horizon, double dt,
                               const FlowOptions& options) {
  require(dt > 0.0 && horizon >= 0.0, ErrorCode::InvalidArgument, "flow: need dt > 0 and T >= 0");
  require(all_finite(w0), ErrorCode::NonFinite, "flow: initial state must be finite");
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  FlowTrace tr;
  tr.times.reserve(steps + 1);
  tr.states.reserve(steps + 1);
  Vector w = w0;
  std::vector<std::size_t> policy;
  auto record = [&](std::size_t k) {
    const double norm = vf.field(w).norm();
    bool switched = false;
    if (vf.policy) {
      auto now = vf.policy(w);
      switched = k > 0 && now != policy;
      policy = std::move(now);
    }
    if (k > 0) {
      tr.max_norm_increase = std::max(tr.max_norm_increase, norm - tr.f_norms.back());
      tr.max_lyapunov_increase = std::max(tr.max_lyapunov_increase, 0.5 * norm * norm - tr.lyapunov.back());
    }
    tr.times.push_back(static_cast<double>(k) * dt);
    tr.states.push_back(w);
    tr.f_norms.push_back(norm);
    tr.lyapunov.push_back(0.5 * norm * norm);
    tr.policy_switch.push_back(switched);
  };
  record(0);
  for (std::size_t k = 1; k <= steps; ++k) {
    const Vector k1 = rhs(w);
    const Vector k2 = rhs(w + 0.5 * dt * k1);
    const Vector k3 = rhs(w + 0.5 * dt * k2);
    const Vector k4 = rhs(w + dt * k3);
    w += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    require(all_finite(w) && w.norm() <= options.blowup, ErrorCode::Blowup,
            "flow: |w| exceeded " + std::to_string(options.blowup) + " at t = " + std::to_string(k * dt));
    record(k);
  }
  return tr;
}

}  // namespace detail

/// dw/dt = -A(w)^T M fbar(w).
inline FlowTrace integrate_gradient_flow(const VectorField& vf, const Matrix& m, const Vector& w0, double horizon,
                                         double dt, const FlowOptions& options = {}) {
  require(m.rows() == w0.size() && m.cols() == w0.size(), ErrorCode::InvalidArgument,
          "integrate_gradient_flow: M must be d x d");
  require(is_symmetric(m) && Eigen::LLT<Matrix>(m).info() == Eigen::Success, ErrorCode::NotSPD,
          "integrate_gradient_flow: M must be symmetric positive definite");
  return detail::integrate_rk4(
      vf, [&](const Vector& w) -> Vector { return -(vf.jacobian(w).transpose() * (m * vf.field(w))); }, w0, horizon, dt,
      options);
}

/// dw/dt = -A(w)^{-1} fbar(w); along it fbar(w_t) = fbar(w_0) e^{-t}.
inline FlowTrace integrate_nr_flow(const VectorField& vf, const Vector& w0, double horizon, double dt,
                                   const FlowOptions& options = {}, double min_rcond = 1e-12) {
  return detail::integrate_rk4(
      vf,
      [&](const Vector& w) -> Vector {
        Eigen::PartialPivLU<Matrix> lu(vf.jacobian(w));
        require(lu.rcond() > min_rcond, ErrorCode::SingularJacobian,
                "integrate_nr_flow: Jacobian reciprocal condition " + std::to_string(lu.rcond()));
        return -lu.solve(vf.field(w));
      },
      w0, horizon, dt, options);
}

/// dw/dt = -[eps I + A^T A]^{-1} A^T fbar(w).
inline FlowTrace integrate_regularized_flow(const VectorField& vf, double eps, const Vector& w0, double horizon,
                                            double dt, const FlowOptions& options = {}) {
  require(eps > 0.0, ErrorCode::InvalidArgument, "integrate_regularized_flow: eps must be positive");
  return detail::integrate_rk4(
      vf, [&](const Vector& w) -> Vector { return zap_gain(vf.jacobian(w), eps) * vf.field(w); }, w0, horizon, dt,
      options);
}

/// max_t | |fbar(w_t)| - |fbar(w_0)| e^{-t} | / |fbar(w_0)|.
inline double nr_law_deviation(const FlowTrace& tr) {
  if (tr.size() == 0 || tr.f_norms[0] == 0.0) return 0.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k)
    worst = std::max(worst, std::abs(tr.f_norms[k] - tr.f_norms[0] * std::exp(-tr.times[k])));
  return worst / tr.f_norms[0];
}

/// Mean field of (mdp, family, policy) as a VectorField.
inline VectorField mean_field_vector_field(const MeanField& mf) {
  auto shared = std::make_shared<const MeanField>(mf);
  VectorField vf;
  vf.field = [shared](const Vector& w) { return shared->fbar(w); };
  vf.jacobian = [shared](const Vector& w) { return shared->fbar_jacobian(w); };
  vf.policy = [shared](const Vector& w) { return greedy_policy(shared->family(), w); };
  return vf;
}

/// fbar_inf(theta) = lim m^{-1} fbar(m theta): the reward-free field, which is
/// radially linear for tabular and linear families.
inline VectorField field_at_infinity(const MeanField& mf) {
  require(mf.family().is_linear(), ErrorCode::NotLinearFamily, "field_at_infinity: needs a tabular or linear family");
  return mean_field_vector_field(mf.reward_free());
}

/// CSV with columns t,w_1..w_d,f_norm,V,policy_switch_flag.
inline std::string flow_csv(const FlowTrace& tr) {
  std::ostringstream out;
  const std::size_t d = tr.size() ? static_cast<std::size_t>(tr.states[0].size()) : 0;
  out << "t";
  for (std::size_t i = 1; i <= d; ++i) out << ",w_" << i;
  out << ",f_norm,V,policy_switch_flag\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    out << io::format_double(tr.times[k]);
    for (Eigen::Index i = 0; i < tr.states[k].size(); ++i) out << ',' << io::format_double(tr.states[k][i]);
    out << ',' << io::format_double(tr.f_norms[k]) << ',' << io::format_double(tr.lyapunov[k]) << ','
        << (tr.policy_switch[k] ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace zapq
