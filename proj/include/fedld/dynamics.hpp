// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedld/models.hpp"
#include "fedld/rng.hpp"
#include "fedld/types.hpp"

namespace fedld {

/// Step-size schedule h_t. PolyDecay h_t = a*(b+t)^(-gamma) with
/// gamma in (0.5, 1] satisfies sum h_t = inf, sum h_t^2 < inf.
struct StepSchedule {
  enum class Kind { Constant, PolyDecay };
  Kind kind = Kind::Constant;
  double h = 1e-4;
  double a = 1.0;
  double b = 0.0;
  double gamma = 1.0;

  static StepSchedule constant(double h);
  static StepSchedule poly_decay(double a, double b, double gamma);
  double value(long t) const;
};

double schedule_value(const StepSchedule& schedule, long t);

struct ChainState {
  Vector theta;
  long t = 0;
  RandomStream rng;
};

/// Deterministic core of the Langevin update with the noise supplied by the
/// caller: theta + (h/2) * estimate + eta, then the model's domain clamp.
Vector step_theta(const ModelSpec& model, const Vector& theta,
                  const Vector& estimate, double h, const Vector& eta);

/// One unconditional Langevin transition (no accept-reject step):
/// draws eta ~ N(0, h_t I) from the state's stream, applies step_theta and
/// increments t. Throws NumericError on a non-finite estimate.
void step(ChainState& state, const Vector& estimate,
          const StepSchedule& schedule, const ModelSpec& model);

}  // namespace fedld
