#pragma once

// Two-link planar pendulum (acrobot / pendubot) rigid-body model.
//
// Conventions:
//   q1 is the shoulder angle measured from the hanging-down position, q2 is the
//   elbow angle relative to link 1. Upright is q1 = pi, q2 = 0.
//   inertia_i is the inertia of link i about its own joint axis.
//   Angles are never wrapped here; wrapping belongs to observation/reward code.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "areapo/errors.hpp"

namespace areapo {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar>
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;

template <typename Scalar = double>
struct ModelParams {
  Scalar mass_1 = Scalar(0.5934);
  Scalar mass_2 = Scalar(0.6);
  Scalar length_1 = Scalar(0.3);
  Scalar length_2 = Scalar(0.2);
  Scalar com_1 = Scalar(0.3);
  Scalar com_2 = Scalar(0.2);
  Scalar inertia_1 = Scalar(0.053470810264216295);
  Scalar inertia_2 = Scalar(0.02392374528789766);
  Scalar gravity = Scalar(9.81);
  Scalar damping_1 = Scalar(0);
  Scalar damping_2 = Scalar(0);
  Scalar coulomb_1 = Scalar(0);
  Scalar coulomb_2 = Scalar(0);
  Scalar torque_limit = Scalar(6.0);
  Scalar motor_inertia = Scalar(0);

  void validate() const {
    using std::isfinite;
    const Scalar all[] = {mass_1,    mass_2,    length_1,  length_2,     com_1,        com_2,
                          inertia_1, inertia_2, gravity,   damping_1,    damping_2,    coulomb_1,
                          coulomb_2, torque_limit, motor_inertia};
    for (const Scalar& v : all) {
      if (!isfinite(v)) throw InvalidInput("model parameters must be finite");
    }
    if (mass_1 <= 0 || mass_2 <= 0 || length_1 <= 0 || length_2 <= 0 || inertia_1 <= 0 ||
        inertia_2 <= 0)
      throw InvalidInput("masses, lengths and inertias must be strictly positive");
    if (torque_limit <= 0) throw InvalidInput("torque_limit must be positive");
    if (damping_1 < 0 || damping_2 < 0 || coulomb_1 < 0 || coulomb_2 < 0 || motor_inertia < 0)
      throw InvalidInput("friction coefficients and motor inertia must be non-negative");
  }
};

/// Mutable access to a model parameter by its config name; throws on unknown names.
template <typename Scalar>
Scalar& model_param(ModelParams<Scalar>& p, std::string_view name) {
  if (name == "mass_1") return p.mass_1;
  if (name == "mass_2") return p.mass_2;
  if (name == "length_1") return p.length_1;
  if (name == "length_2") return p.length_2;
  if (name == "com_1") return p.com_1;
  if (name == "com_2") return p.com_2;
  if (name == "inertia_1") return p.inertia_1;
  if (name == "inertia_2") return p.inertia_2;
  if (name == "gravity") return p.gravity;
  if (name == "damping_1") return p.damping_1;
  if (name == "damping_2") return p.damping_2;
  if (name == "coulomb_1") return p.coulomb_1;
  if (name == "coulomb_2") return p.coulomb_2;
  if (name == "torque_limit") return p.torque_limit;
  if (name == "motor_inertia") return p.motor_inertia;
  throw InvalidInput("unknown model parameter '" + std::string(name) + "'");
}

template <typename Scalar = double>
struct PendulumState {
  Scalar q1 = Scalar(0);
  Scalar q2 = Scalar(0);
  Scalar qd1 = Scalar(0);
  Scalar qd2 = Scalar(0);
  Scalar t = Scalar(0);

  Vec4<Scalar> vector() const { return Vec4<Scalar>(q1, q2, qd1, qd2); }

  static PendulumState from_vector(const Vec4<Scalar>& x, Scalar time = Scalar(0)) {
    return PendulumState{x(0), x(1), x(2), x(3), time};
  }

  bool finite() const {
    using std::isfinite;
    return isfinite(q1) && isfinite(q2) && isfinite(qd1) && isfinite(qd2) && isfinite(t);
  }

  friend bool operator==(const PendulumState&, const PendulumState&) = default;
};

enum class Actuation { Acrobot, Pendubot };

inline std::string_view to_string(Actuation mode) {
  return mode == Actuation::Acrobot ? "acrobot" : "pendubot";
}

inline Actuation parse_actuation(std::string_view name) {
  if (name == "acrobot") return Actuation::Acrobot;
  if (name == "pendubot") return Actuation::Pendubot;
  throw InvalidInput("unknown task '" + std::string(name) + "' (expected acrobot|pendubot)");
}

/// Index of the actuated joint: 1 (elbow) for the acrobot, 0 (shoulder) for the pendubot.
inline int active_joint(Actuation mode) { return mode == Actuation::Acrobot ? 1 : 0; }

/// Clamps `command` to [-limit, limit] and places it on the actuated joint.
template <typename Scalar>
Vec2<Scalar> apply_actuation(Actuation mode, Scalar command, Scalar limit) {
  const Scalar clamped = std::clamp(command, -limit, limit);
  Vec2<Scalar> tau = Vec2<Scalar>::Zero();
  tau(active_joint(mode)) = clamped;
  return tau;
}

template <typename Scalar>
Mat2<Scalar> mass_matrix(Scalar q2, const ModelParams<Scalar>& p) {
  using std::cos;
  const Scalar coupling = p.mass_2 * p.length_1 * p.com_2 * cos(q2);
  Mat2<Scalar> m;
  m(0, 0) = p.inertia_1 + p.inertia_2 + p.mass_2 * p.length_1 * p.length_1 + Scalar(2) * coupling +
            p.motor_inertia;
  m(0, 1) = p.inertia_2 + coupling;
  m(1, 0) = m(0, 1);
  m(1, 1) = p.inertia_2 + p.motor_inertia;
  return m;
}

/// Gravity torque acting on each joint (zero at both equilibria).
template <typename Scalar>
Vec2<Scalar> gravity_torque(Scalar q1, Scalar q2, const ModelParams<Scalar>& p) {
  using std::sin;
  const Scalar s1 = sin(q1);
  const Scalar s12 = sin(q1 + q2);
  return Vec2<Scalar>(-p.gravity * (p.mass_1 * p.com_1 * s1 + p.mass_2 * (p.length_1 * s1 + p.com_2 * s12)),
                      -p.gravity * p.mass_2 * p.com_2 * s12);
}

/// Velocity-product (Coriolis/centrifugal) torques C(q, qd) qd.
template <typename Scalar>
Vec2<Scalar> coriolis_torque(const PendulumState<Scalar>& s, const ModelParams<Scalar>& p) {
  using std::sin;
  const Scalar h = p.mass_2 * p.length_1 * p.com_2 * sin(s.q2);
  return Vec2<Scalar>(-Scalar(2) * h * s.qd1 * s.qd2 - h * s.qd2 * s.qd2, h * s.qd1 * s.qd1);
}

// Coulomb friction is smoothed with tanh(qd / kCoulombVelocityScale).
inline constexpr double kCoulombVelocityScale = 0.01;

template <typename Scalar>
Vec2<Scalar> friction_torque(const PendulumState<Scalar>& s, const ModelParams<Scalar>& p) {
  using std::tanh;
  const Scalar k = Scalar(1.0 / kCoulombVelocityScale);
  return Vec2<Scalar>(p.damping_1 * s.qd1 + p.coulomb_1 * tanh(k * s.qd1),
                      p.damping_2 * s.qd2 + p.coulomb_2 * tanh(k * s.qd2));
}

/// Joint accelerations from M(q) qdd + C(q, qd) qd - tau_g(q) + F(qd) = tau.
template <typename Scalar>
Vec2<Scalar> forward_dynamics(const PendulumState<Scalar>& s, const Vec2<Scalar>& torques,
                              const ModelParams<Scalar>& p) {
  if (!s.finite()) throw InvalidInput("forward_dynamics: non-finite state");
  if (!torques.allFinite()) throw InvalidInput("forward_dynamics: non-finite torque");
  const Vec2<Scalar> rhs =
      torques - coriolis_torque(s, p) + gravity_torque(s.q1, s.q2, p) - friction_torque(s, p);
  // M is SPD, so the closed-form 2x2 solve is well-posed.
  const Mat2<Scalar> m = mass_matrix(s.q2, p);
  const Scalar det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return Vec2<Scalar>((m(1, 1) * rhs(0) - m(0, 1) * rhs(1)) / det,
                      (m(0, 0) * rhs(1) - m(1, 0) * rhs(0)) / det);
}

namespace detail {
template <typename Scalar>
Vec4<Scalar> state_derivative(const Vec4<Scalar>& x, const Vec2<Scalar>& tau, const ModelParams<Scalar>& p) {
  const Vec2<Scalar> qdd = forward_dynamics(PendulumState<Scalar>::from_vector(x), tau, p);
  return Vec4<Scalar>(x(2), x(3), qdd(0), qdd(1));
}
}  // namespace detail

/// Advances the state by `dt` with classic RK4 and zero-order-hold torques.
/// The interval is split into ceil(dt / max_substep) equal substeps; max_substep <= 0 means one step.
template <typename Scalar>
PendulumState<Scalar> step_rk4(const PendulumState<Scalar>& s, const Vec2<Scalar>& torques, Scalar dt,
                               const ModelParams<Scalar>& p, Scalar max_substep = Scalar(0)) {
  using std::ceil;
  if (!(dt > 0)) throw InvalidInput("step_rk4: dt must be positive");
  int n = 1;
  if (max_substep > 0) n = std::max(1, static_cast<int>(ceil(dt / max_substep - Scalar(1e-9))));
  const Scalar h = dt / Scalar(n);
  Vec4<Scalar> x = s.vector();
  for (int i = 0; i < n; ++i) {
    const Vec4<Scalar> k1 = detail::state_derivative<Scalar>(x, torques, p);
    const Vec4<Scalar> k2 = detail::state_derivative<Scalar>(x + Scalar(0.5) * h * k1, torques, p);
    const Vec4<Scalar> k3 = detail::state_derivative<Scalar>(x + Scalar(0.5) * h * k2, torques, p);
    const Vec4<Scalar> k4 = detail::state_derivative<Scalar>(x + h * k3, torques, p);
    x += (h / Scalar(6)) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
  }
  return PendulumState<Scalar>::from_vector(x, s.t + dt);
}

template <typename Scalar>
Scalar kinetic_energy(const PendulumState<Scalar>& s, const ModelParams<Scalar>& p) {
  const Vec2<Scalar> qd(s.qd1, s.qd2);
  return Scalar(0.5) * qd.dot(mass_matrix(s.q2, p) * qd);
}

/// Potential energy, zero at the hanging rest configuration.
template <typename Scalar>
Scalar potential_energy(const PendulumState<Scalar>& s, const ModelParams<Scalar>& p) {
  using std::cos;
  const Scalar c1 = cos(s.q1);
  const Scalar c12 = cos(s.q1 + s.q2);
  const Scalar rest = p.mass_1 * p.com_1 + p.mass_2 * (p.length_1 + p.com_2);
  return p.gravity * (rest - p.mass_1 * p.com_1 * c1 - p.mass_2 * (p.length_1 * c1 + p.com_2 * c12));
}

template <typename Scalar>
Scalar total_energy(const PendulumState<Scalar>& s, const ModelParams<Scalar>& p) {
  if (!s.finite()) throw InvalidInput("total_energy: non-finite state");
  return kinetic_energy(s, p) + potential_energy(s, p);
}

}  // namespace areapo
