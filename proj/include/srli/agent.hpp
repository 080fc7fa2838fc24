#pragma once

// Robot state, action scaling, velocity-tracking flight model, and
// observation noise.

#include "srli/core.hpp"

#include <array>
#include <cmath>

namespace srli {

using Action = std::array<double, 4>;  // normalized, each in [-1, 1]

struct RobotState {
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 omega = Vec3::Zero();

  bool finite() const {
    return p.allFinite() && q.coeffs().allFinite() && v.allFinite() && omega.allFinite();
  }

  // p, q (w x y z), v, omega.
  std::array<double, 13> flatten() const {
    return {p.x(), p.y(), p.z(), q.w(), q.x(), q.y(), q.z(),
            v.x(), v.y(), v.z(), omega.x(), omega.y(), omega.z()};
  }
};

// Vehicle-frame velocity reference and yaw-rate reference.
struct ActionCommand {
  Vec3 v_ref = Vec3::Zero();
  double yaw_rate_ref = 0.0;
};

struct DynamicsParams {
  double tau_v = 0.2;
  double tau_w = 0.1;
  double physics_dt = 0.01;
  double control_dt = 0.1;
  double collision_radius = 0.15;

  int substeps() const { return static_cast<int>(std::lround(control_dt / physics_dt)); }

  void validate() const {
    if (!(tau_v > 0 && tau_w > 0)) throw InvalidArgument("time constants must be positive");
    if (!(physics_dt > 0 && physics_dt <= control_dt))
      throw InvalidArgument("need 0 < physics_dt <= control_dt");
    const double ratio = control_dt / physics_dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
      throw InvalidArgument("control_dt must be an integer multiple of physics_dt");
    if (!(collision_radius > 0)) throw InvalidArgument("collision_radius must be positive");
  }
};

// Defaults are engineering choices: no magnitudes are published for them.
struct NoiseParams {
  double wrench_std = 0.1;          // m/s^2, per axis
  double wrench_std_angular = 0.1;  // rad/s^2, yaw axis
  double position_halfwidth = 0.02;
  double orientation_halfwidth = 0.01;  // per quaternion component, before renormalization
  double velocity_halfwidth = 0.05;
  double angular_velocity_halfwidth = 0.05;
  double depth_k_sigma = 0.01;
  double mask_dropout = 0.0;

  static NoiseParams none() { return {0, 0, 0, 0, 0, 0, 0, 0}; }

  void validate() const {
    for (double x : {wrench_std, wrench_std_angular, position_halfwidth, orientation_halfwidth,
                     velocity_halfwidth, angular_velocity_halfwidth, depth_k_sigma, mask_dropout})
      if (!(x >= 0)) throw InvalidArgument("noise parameters must be non-negative");
  }
};

// Element-wise a * w_max after clamping a to [-1, 1]. `clamped`, when
// given, receives the number of entries that were out of range.
inline ActionCommand scale_action(const Action& a, const std::array<double, 4>& w_max,
                                  int* clamped = nullptr) {
  std::array<double, 4> c{};
  int n = 0;
  for (int i = 0; i < 4; ++i) {
    double x = std::isfinite(a[i]) ? a[i] : 0.0;
    if (x > 1.0 || x < -1.0 || !std::isfinite(a[i])) ++n;
    c[i] = std::clamp(x, -1.0, 1.0) * w_max[i];
  }
  if (clamped) *clamped = n;
  return {Vec3(c[0], c[1], c[2]), c[3]};
}

// Advances the state by `substeps` physics steps. Velocity and yaw rate follow
// first-order lags toward the command (integrated exactly over each step),
// disturbances enter as acceleration noise, and attitude stays level.
inline RobotState step_dynamics(RobotState s, const ActionCommand& cmd, const DynamicsParams& params,
                                const NoiseParams& noise, Rng& rng, int substeps) {
  const double dt = params.physics_dt;
  const double decay_v = std::exp(-dt / params.tau_v);
  const double decay_w = std::exp(-dt / params.tau_w);
  const double gain_v = params.tau_v * (1.0 - decay_v);
  const double gain_w = params.tau_w * (1.0 - decay_w);
  std::normal_distribution<double> n01(0.0, 1.0);
  double yaw = yaw_of(s.q);
  double wz = s.omega.z();
  for (int k = 0; k < substeps; ++k) {
    const Vec3 v_ref = yaw_quat(yaw) * cmd.v_ref;
    const Vec3 dv = s.v - v_ref;
    s.p += v_ref * dt + dv * gain_v;
    s.v = v_ref + dv * decay_v;
    const double dw = wz - cmd.yaw_rate_ref;
    yaw += cmd.yaw_rate_ref * dt + dw * gain_w;
    wz = cmd.yaw_rate_ref + dw * decay_w;
    if (noise.wrench_std > 0)
      s.v += Vec3(n01(rng), n01(rng), n01(rng)) * (noise.wrench_std * dt);
    if (noise.wrench_std_angular > 0) wz += n01(rng) * noise.wrench_std_angular * dt;
  }
  s.q = yaw_quat(wrap_angle(yaw));
  s.omega = Vec3(0, 0, wz);
  if (!s.finite()) throw DynamicsFault("non-finite robot state after integration");
  return s;
}

// Uniform additive noise on every field; the quaternion is renormalized.
inline RobotState perturb_state_observation(const RobotState& s, const NoiseParams& noise, Rng& rng) {
  auto u = [&](double h) { return h > 0 ? uniform(rng, -h, h) : 0.0; };
  RobotState o = s;
  for (int k = 0; k < 3; ++k) o.p[k] += u(noise.position_halfwidth);
  if (noise.orientation_halfwidth > 0) {
    o.q.w() += u(noise.orientation_halfwidth);
    o.q.x() += u(noise.orientation_halfwidth);
    o.q.y() += u(noise.orientation_halfwidth);
    o.q.z() += u(noise.orientation_halfwidth);
    o.q.normalize();
  }
  for (int k = 0; k < 3; ++k) o.v[k] += u(noise.velocity_halfwidth);
  for (int k = 0; k < 3; ++k) o.omega[k] += u(noise.angular_velocity_halfwidth);
  return o;
}

}  // namespace srli
