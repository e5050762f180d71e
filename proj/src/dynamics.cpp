// SPDX-License-Identifier: Apache-2.0
#include "fedld/dynamics.hpp"

#include <cmath>
#include <string>

namespace fedld {

StepSchedule StepSchedule::constant(double h) {
  if (!(h > 0.0)) throw ConfigError("Constant schedule: h must be > 0");
  StepSchedule s;
  s.kind = Kind::Constant;
  s.h = h;
  return s;
}

StepSchedule StepSchedule::poly_decay(double a, double b, double gamma) {
  if (!(a > 0.0)) throw ConfigError("PolyDecay schedule: a must be > 0");
  if (!(b >= 0.0)) throw ConfigError("PolyDecay schedule: b must be >= 0");
  if (!(gamma > 0.5 && gamma <= 1.0))
    throw ConfigError("PolyDecay schedule: gamma must lie in (0.5, 1]");
  StepSchedule s;
  s.kind = Kind::PolyDecay;
  s.a = a;
  s.b = b;
  s.gamma = gamma;
  return s;
}

double StepSchedule::value(long t) const {
  if (t < 0) throw std::invalid_argument("schedule_value: t must be >= 0");
  switch (kind) {
    case Kind::Constant:
      return h;
    case Kind::PolyDecay:
      return a * std::pow(b + static_cast<double>(t), -gamma);
  }
  throw std::logic_error("unreachable schedule kind");
}

double schedule_value(const StepSchedule& schedule, long t) {
  return schedule.value(t);
}

Vector step_theta(const ModelSpec& model, const Vector& theta,
                  const Vector& estimate, double h, const Vector& eta) {
  Vector next = theta + (0.5 * h) * estimate + eta;
  clamp_to_domain(model, next);
  return next;
}

void step(ChainState& state, const Vector& estimate,
          const StepSchedule& schedule, const ModelSpec& model) {
  if (!estimate.allFinite())
    throw NumericError("non-finite gradient estimate at step " +
                       std::to_string(state.t));
  const double h = schedule.value(state.t);
  if (!(h > 0.0)) throw NumericError("non-positive step size");
  const double sd = std::sqrt(h);
  Vector eta(state.theta.size());
  for (Eigen::Index k = 0; k < eta.size(); ++k)
    eta[k] = sd * state.rng.gaussian();
  state.theta = step_theta(model, state.theta, estimate, h, eta);
  ++state.t;
}

}  // namespace fedld
