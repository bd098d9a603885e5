#pragma once

// Parameterized Q-function families: tabular, linear in a fixed basis, and a
// fully connected leaky-ReLU network. All queries are pure functions of
// (family, theta, x, u).

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "zapq/error.hpp"
#include "zapq/linalg.hpp"
#include "zapq/rng.hpp"

namespace zapq {

using Theta = Vector;

enum class FamilyKind { Tabular, Linear, Mlp };

inline std::string to_string(FamilyKind k) {
  switch (k) {
    case FamilyKind::Tabular: return "tabular";
    case FamilyKind::Linear: return "linear";
    case FamilyKind::Mlp: return "mlp";
  }
  return "unknown";
}

struct MlpSpec {
  std::vector<std::size_t> hidden;  // widths of the hidden layers
  double slope = 0.01;              // leaky-ReLU negative slope

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

class QFamily {
 public:
  /// One parameter per (x,u) pair, indexed x * num_actions + u.
  static QFamily tabular(std::size_t num_states, std::size_t num_actions) {
    QFamily f(FamilyKind::Tabular, num_states, num_actions);
    f.dim_ = num_states * num_actions;
    return f;
  }

  /// Q(x,u) = psi(x,u)^T theta, with basis row pair(x,u) of `basis`.
  static QFamily linear(std::size_t num_states, std::size_t num_actions, Matrix basis) {
    QFamily f(FamilyKind::Linear, num_states, num_actions);
    require(static_cast<std::size_t>(basis.rows()) == num_states * num_actions && basis.cols() > 0,
            ErrorCode::InvalidArgument, "QFamily::linear: basis must have one row per (x,u) pair");
    require(all_finite(basis), ErrorCode::NonFinite, "QFamily::linear: basis must be finite");
    f.dim_ = static_cast<std::size_t>(basis.cols());
    f.basis_ = std::move(basis);
    return f;
  }

  /// Network input is the one-hot state followed by u / (num_actions - 1).
  static QFamily mlp(std::size_t num_states, std::size_t num_actions, MlpSpec spec) {
    QFamily f(FamilyKind::Mlp, num_states, num_actions);
    require(spec.slope > 0.0 && spec.slope < 1.0, ErrorCode::InvalidArgument, "QFamily::mlp: slope must lie in (0,1)");
    for (auto w : spec.hidden) require(w > 0, ErrorCode::InvalidArgument, "QFamily::mlp: zero-width layer");
    f.layers_.push_back(num_states + 1);
    for (auto w : spec.hidden) f.layers_.push_back(w);
    f.layers_.push_back(1);
    f.dim_ = 0;
    for (std::size_t l = 0; l + 1 < f.layers_.size(); ++l) f.dim_ += (f.layers_[l] + 1) * f.layers_[l + 1];
    f.spec_ = std::move(spec);
    return f;
  }

  FamilyKind kind() const { return kind_; }
  bool is_linear() const { return kind_ != FamilyKind::Mlp; }
  std::size_t dim() const { return dim_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t pair(std::size_t x, std::size_t u) const { return x * num_actions_ + u; }
  const Matrix& basis() const { return basis_; }
  const MlpSpec& mlp_spec() const { return spec_; }
  /// Layer sizes including input and scalar output (mlp only).
  const std::vector<std::size_t>& layers() const { return layers_; }

  Vector encode(std::size_t x, std::size_t u) const {
    Vector in = Vector::Zero(static_cast<Eigen::Index>(num_states_ + 1));
    in[static_cast<Eigen::Index>(x)] = 1.0;
    in[static_cast<Eigen::Index>(num_states_)] =
        num_actions_ > 1 ? static_cast<double>(u) / static_cast<double>(num_actions_ - 1) : 0.0;
    return in;
  }

  friend bool operator==(const QFamily& a, const QFamily& b) {
    return a.kind_ == b.kind_ && a.num_states_ == b.num_states_ && a.num_actions_ == b.num_actions_ &&
           a.dim_ == b.dim_ && a.spec_ == b.spec_ && a.basis_.rows() == b.basis_.rows() &&
           a.basis_.cols() == b.basis_.cols() && a.basis_ == b.basis_;
  }

 private:
  QFamily(FamilyKind kind, std::size_t nx, std::size_t nu) : kind_(kind), num_states_(nx), num_actions_(nu) {
    require(nx > 0 && nu > 0, ErrorCode::InvalidArgument, "QFamily: empty state or action set");
  }

  FamilyKind kind_;
  std::size_t num_states_;
  std::size_t num_actions_;
  std::size_t dim_ = 0;
  Matrix basis_;
  MlpSpec spec_;
  std::vector<std::size_t> layers_;
};

namespace detail {

inline double leaky(double z, double a) { return z > 0.0 ? z : a * z; }
inline double leaky_slope(double z, double a) { return z > 0.0 ? 1.0 : a; }

// Parameter layout per layer: weights (out x in, row-major), then biases.
struct MlpPass {
  std::vector<Vector> act;  // act[0] = input, act[l] = post-activation of layer l
  std::vector<Vector> pre;  // pre[l] = pre-activation of layer l+1
};

inline MlpPass mlp_forward(const QFamily& fam, const Theta& theta, std::size_t x, std::size_t u) {
  const auto& layers = fam.layers();
  const double a = fam.mlp_spec().slope;
  MlpPass pass;
  pass.act.push_back(fam.encode(x, u));
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(layers[l]);
    const auto out = static_cast<Eigen::Index>(layers[l + 1]);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
        theta.data() + offset, out, in);
    Eigen::Map<const Vector> b(theta.data() + offset + static_cast<std::size_t>(out * in), out);
    offset += static_cast<std::size_t>((in + 1) * out);
    Vector z = w * pass.act.back() + b;
    const bool last = l + 2 == layers.size();
    Vector h = last ? z : Vector(z.unaryExpr([a](double v) { return leaky(v, a); }));
    pass.pre.push_back(std::move(z));
    pass.act.push_back(std::move(h));
  }
  return pass;
}

inline Vector mlp_backward(const QFamily& fam, const Theta& theta, const MlpPass& pass) {
  const auto& layers = fam.layers();
  const double a = fam.mlp_spec().slope;
  Vector grad(theta.size());
  std::vector<std::size_t> offsets(layers.size(), 0);
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) offsets[l + 1] = offsets[l] + (layers[l] + 1) * layers[l + 1];

  Vector delta = Vector::Ones(1);  // dQ / d(pre-activation of output)
  for (std::size_t l = layers.size() - 1; l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(layers[l]);
    const auto out = static_cast<Eigen::Index>(layers[l + 1]);
    const std::size_t off = offsets[l];
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(grad.data() + off, out, in);
    Eigen::Map<Vector> gb(grad.data() + off + static_cast<std::size_t>(out * in), out);
    gw.noalias() = delta * pass.act[l].transpose();
    gb = delta;
    if (l == 0) break;
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(theta.data() + off, out,
                                                                                               in);
    Vector back = w.transpose() * delta;
    const Vector& z = pass.pre[l - 1];
    for (Eigen::Index i = 0; i < back.size(); ++i) back[i] *= leaky_slope(z[i], a);
    delta = std::move(back);
  }
  return grad;
}

inline void check_theta(const QFamily& fam, const Theta& theta) {
  require(static_cast<std::size_t>(theta.size()) == fam.dim(), ErrorCode::InvalidArgument,
          "theta has dimension " + std::to_string(theta.size()) + ", family expects " + std::to_string(fam.dim()));
}

}  // namespace detail

inline double q_value(const QFamily& fam, const Theta& theta, std::size_t x, std::size_t u) {
  detail::check_theta(fam, theta);
  switch (fam.kind()) {
    case FamilyKind::Tabular: return theta[static_cast<Eigen::Index>(fam.pair(x, u))];
    case FamilyKind::Linear: return fam.basis().row(static_cast<Eigen::Index>(fam.pair(x, u))).dot(theta);
    case FamilyKind::Mlp: return detail::mlp_forward(fam, theta, x, u).act.back()[0];
  }
  return 0.0;
}

/// Exact gradient of q_value in theta (backpropagation for the network; the
/// leaky-ReLU derivative at 0 is taken to be the slope).
inline Vector q_gradient(const QFamily& fam, const Theta& theta, std::size_t x, std::size_t u) {
  detail::check_theta(fam, theta);
  switch (fam.kind()) {
    case FamilyKind::Tabular: {
      Vector g = Vector::Zero(theta.size());
      g[static_cast<Eigen::Index>(fam.pair(x, u))] = 1.0;
      return g;
    }
    case FamilyKind::Linear: return fam.basis().row(static_cast<Eigen::Index>(fam.pair(x, u))).transpose();
    case FamilyKind::Mlp: return detail::mlp_backward(fam, theta, detail::mlp_forward(fam, theta, x, u));
  }
  return {};
}

/// Q-values for every pair as a num_states x num_actions table.
inline Matrix q_table(const QFamily& fam, const Theta& theta) {
  const auto nx = static_cast<Eigen::Index>(fam.num_states()), nu = static_cast<Eigen::Index>(fam.num_actions());
  if (fam.kind() == FamilyKind::Tabular) {
    detail::check_theta(fam, theta);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(theta.data(), nx, nu);
  }
  Matrix q(nx, nu);
  for (Eigen::Index x = 0; x < nx; ++x)
    for (Eigen::Index u = 0; u < nu; ++u)
      q(x, u) = q_value(fam, theta, static_cast<std::size_t>(x), static_cast<std::size_t>(u));
  return q;
}

/// Lowest action index attaining max_u Q(x,u); ties resolve to the lowest
/// index, which makes the selected policy the first one in lexicographic
/// enumeration among all greedy policies.
inline std::size_t greedy_action(const QFamily& fam, const Theta& theta, std::size_t x) {
  std::size_t best = 0;
  double best_q = q_value(fam, theta, x, 0);
  for (std::size_t u = 1; u < fam.num_actions(); ++u) {
    const double q = q_value(fam, theta, x, u);
    if (q > best_q) {
      best_q = q;
      best = u;
    }
  }
  return best;
}

inline std::vector<std::size_t> greedy_policy(const QFamily& fam, const Theta& theta) {
  std::vector<std::size_t> policy(fam.num_states());
  for (std::size_t x = 0; x < fam.num_states(); ++x) policy[x] = greedy_action(fam, theta, x);
  return policy;
}

/// Eligibility vector zeta = grad_theta Q at the anchor parameter.
inline Vector eligibility(const QFamily& fam, const Theta& anchor, std::size_t x, std::size_t u) {
  return q_gradient(fam, anchor, x, u);
}

/// Initial parameter: zeros for tabular/linear; Kaiming-uniform weights with
/// leaky-ReLU gain and zero biases for the network.
inline Theta initial_theta(const QFamily& fam, std::uint64_t seed) {
  Theta theta = Theta::Zero(static_cast<Eigen::Index>(fam.dim()));
  if (fam.kind() != FamilyKind::Mlp) return theta;
  Rng rng(seed);
  const auto& layers = fam.layers();
  const double a = fam.mlp_spec().slope;
  const double gain = std::sqrt(2.0 / (1.0 + a * a));
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const std::size_t in = layers[l], out = layers[l + 1];
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(in));
    for (std::size_t k = 0; k < in * out; ++k) theta[static_cast<Eigen::Index>(offset + k)] = rng.uniform(-bound, bound);
    offset += (in + 1) * out;
  }
  return theta;
}

}  // namespace zapq
