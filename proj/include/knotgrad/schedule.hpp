#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "knotgrad/dynamics.hpp"
#include "knotgrad/energy.hpp"
#include "knotgrad/thickness.hpp"

namespace knotgrad {

/// Per-phase overrides of the state's stepping/stability parameters. They
/// apply for the duration of the phase only.
struct PhaseOverrides {
  std::optional<double> dt;
  std::optional<int> record_interval;
  std::optional<int> stability_window;
  std::optional<double> stability_epsilon;
};

namespace phase {

struct Evolve {
  Mode mode = Mode::damped;
  long max_steps = 100000;
  PhaseOverrides overrides{};
  /// When false, reaching max_steps is the intended end of the phase rather
  /// than a convergence failure.
  bool require_stable = true;
};

struct Perturb {
  double magnitude = 0.0;
  std::uint64_t seed = 1;
};

struct SetExponent {
  double exponent = 2.0;
};

struct RescaleGauge {};

struct MeasureThickness {
  std::size_t skip = 2;
};

struct Snapshot {
  std::string label;
};

}  // namespace phase

using Phase = std::variant<phase::Evolve, phase::Perturb, phase::SetExponent, phase::RescaleGauge,
                           phase::MeasureThickness, phase::Snapshot>;

inline std::string_view phase_name(const Phase& p) {
  static constexpr std::string_view names[] = {"evolve",        "perturb",           "set_exponent",
                                                "rescale_gauge", "measure_thickness", "snapshot"};
  return names[p.index()];
}

struct Schedule {
  std::vector<Phase> phases;

  void validate() const {
    bool has_evolve = false;
    std::set<std::string> labels;
    for (const auto& p : phases) {
      if (const auto* e = std::get_if<phase::Evolve>(&p)) {
        has_evolve = true;
        if (e->max_steps < 1) throw std::invalid_argument("evolve phase needs max_steps >= 1");
      } else if (const auto* pe = std::get_if<phase::Perturb>(&p)) {
        if (!(pe->magnitude >= 0.0)) throw std::invalid_argument("perturbation magnitude must be >= 0");
      } else if (const auto* sx = std::get_if<phase::SetExponent>(&p)) {
        ForceField ff;
        ff.exponent = sx->exponent;
        ff.validate();
      } else if (const auto* sn = std::get_if<phase::Snapshot>(&p)) {
        if (sn->label.empty()) throw std::invalid_argument("snapshot label must not be empty");
        if (!labels.insert(sn->label).second) throw std::invalid_argument("duplicate snapshot label '" + sn->label + "'");
      }
    }
    if (!has_evolve) throw std::invalid_argument("schedule needs at least one evolve phase");
  }
};

/// Default schedule: one damped evolve-until-stable, then a snapshot "stable".
inline Schedule damped_schedule(long max_steps, PhaseOverrides overrides = {}) {
  return {{phase::Evolve{Mode::damped, max_steps, overrides, true}, phase::Snapshot{"stable"}}};
}

struct Snapshot {
  std::string label;
  SimState state;
  EnergyReport energy;
  ThicknessReport thickness;

  /// Simon energy at the canonical length gauge.
  double gauged_energy() const {
    return gauged(energy.simon_energy, state.knot.total_length(), gauge_length(state.knot));
  }
};

struct PhaseOutcome {
  std::size_t index = 0;
  std::string kind;
  long first_step = 0;
  long last_step = 0;
  std::optional<StopReason> reason;  ///< evolve phases only
  bool required_stable = false;

  bool failed() const { return required_stable && reason == StopReason::max_steps; }
};

struct ScheduleRun {
  SimState state;
  EnergyTrace trace;
  std::vector<Snapshot> snapshots;
  std::vector<PhaseOutcome> phases;
  std::vector<std::pair<long, ThicknessReport>> measurements;  ///< (step, report)

  const Snapshot& snapshot(std::string_view label) const {
    for (const auto& s : snapshots) {
      if (s.label == label) return s;
    }
    throw std::out_of_range("no snapshot '" + std::string(label) + "'");
  }

  bool converged() const {
    for (const auto& p : phases) {
      if (p.failed()) return false;
    }
    return true;
  }

  /// True when some evolve phase ended in contact.
  bool jammed() const {
    for (const auto& p : phases) {
      if (p.reason == StopReason::jammed) return true;
    }
    return false;
  }
};

/// An evolve phase that had to stabilize ran out of steps.
class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, EnergyTrace partial)
      : std::runtime_error(what), partial_trace(std::move(partial)) {}
  EnergyTrace partial_trace;
};

inline Snapshot take_snapshot(std::string label, const SimState& s, std::size_t skip = 2) {
  return {std::move(label), s, energy_report(s.knot, s.params.force_field), thickness(s.knot, skip)};
}

/// Runs the phases in order. The trace is the concatenation of the evolve
/// phases' traces (the repeated initial record of each later phase dropped).
/// `observer(state, record)` is forwarded to every evolve phase. With
/// `throw_on_nonconvergence`, a required-stable phase hitting max_steps
/// raises NonConvergence; otherwise the outcome is recorded and the
/// schedule continues.
template <typename Observer>
ScheduleRun run_schedule(SimState s, const Schedule& schedule, Observer&& observer,
                         bool throw_on_nonconvergence = false) {
  schedule.validate();
  ScheduleRun run{std::move(s), {}, {}, {}, {}};
  auto& st = run.state;
  for (std::size_t i = 0; i < schedule.phases.size(); ++i) {
    const Phase& ph = schedule.phases[i];
    PhaseOutcome out{i, std::string(phase_name(ph)), st.step_index, st.step_index, std::nullopt, false};
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, phase::Evolve>) {
            const SimParams saved = st.params;
            st = set_mode(std::move(st), p.mode);
            auto& sp = st.params;
            if (p.overrides.dt) sp.dt = *p.overrides.dt;
            if (p.overrides.record_interval) sp.record_interval = *p.overrides.record_interval;
            if (p.overrides.stability_window) sp.stability_window = *p.overrides.stability_window;
            if (p.overrides.stability_epsilon) sp.stability_epsilon = *p.overrides.stability_epsilon;
            sp.validate();
            auto res = evolve_until_stable(std::move(st), p.max_steps, observer);
            auto first = res.trace.begin();
            if (!run.trace.empty() && first != res.trace.end() && first->step == run.trace.back().step) ++first;
            run.trace.insert(run.trace.end(), first, res.trace.end());
            st = std::move(res.state);
            const Mode mode = st.params.mode;
            st.params = saved;
            st.params.mode = mode;
            out.reason = res.reason;
            out.required_stable = p.require_stable;
            if (throw_on_nonconvergence && out.failed()) {
              throw NonConvergence("phase " + std::to_string(i) + " (evolve " + std::string(to_string(p.mode)) +
                                       ") did not stabilize within " + std::to_string(p.max_steps) + " steps",
                                   run.trace);
            }
          } else if constexpr (std::is_same_v<T, phase::Perturb>) {
            st = perturb(std::move(st), p.magnitude, p.seed);
          } else if constexpr (std::is_same_v<T, phase::SetExponent>) {
            st = set_exponent(std::move(st), p.exponent);
          } else if constexpr (std::is_same_v<T, phase::RescaleGauge>) {
            st.knot = apply_gauge(st.knot);
          } else if constexpr (std::is_same_v<T, phase::MeasureThickness>) {
            run.measurements.emplace_back(st.step_index, thickness(st.knot, p.skip));
          } else {
            run.snapshots.push_back(take_snapshot(p.label, st));
          }
        },
        ph);
    out.last_step = st.step_index;
    run.phases.push_back(std::move(out));
  }
  return run;
}

inline ScheduleRun run_schedule(SimState s, const Schedule& schedule, bool throw_on_nonconvergence = false) {
  return run_schedule(std::move(s), schedule, [](const SimState&, const EnergyRecord*) {}, throw_on_nonconvergence);
}

}  // namespace knotgrad
