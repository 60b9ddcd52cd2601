#pragma once

#include <stdexcept>
#include <utility>

#include "knotgrad/dynamics.hpp"
#include "knotgrad/knot.hpp"
#include "knotgrad/schedule.hpp"
#include "knotgrad/thickness.hpp"

namespace knotgrad {

/// Ropelength of the configuration the self-repelling process at exponent d
/// settles into: generate `spec`, run `schedule` with exponent d, measure the
/// final state. Throws NonConvergence when a required-stable phase runs out
/// of steps.
inline std::pair<ThicknessReport, SimState> electrical_ropelength(const TorusKnotSpec& spec, double d,
                                                                  const Schedule& schedule, SimParams params = {}) {
  params.force_field.exponent = d;
  params.validate();
  auto run = run_schedule(SimState(generate_torus(spec), params), schedule, true);
  auto rep = thickness(run.state.knot);
  return {rep, std::move(run.state)};
}

inline std::pair<ThicknessReport, SimState> electrical_ropelength(const TorusKnotSpec& spec, double d,
                                                                  long max_steps = 400000) {
  return electrical_ropelength(spec, d, damped_schedule(max_steps));
}

}  // namespace knotgrad
