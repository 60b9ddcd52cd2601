#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "knotgrad/dynamics.hpp"
#include "knotgrad/io.hpp"
#include "knotgrad/knot.hpp"
#include "knotgrad/ropelength.hpp"
#include "knotgrad/schedule.hpp"

namespace knotgrad {

/// Knobs shared by the scripted experiments.
struct ExperimentConfig {
  int n = 80;
  double exponent = 6.0;
  double spring_constant = 50.0;
  double damped_dt = 0.2;
  double undamped_dt = 0.1;
  double velocity_damping = 0.002;
  long max_steps = 400000;          ///< per damped evolve phase
  long undamped_steps = 60000;      ///< length of each undamped phase
  int record_interval = 10;
  int stability_window = 50;
  double stability_epsilon = 1e-7;
  double perturb_magnitude = 0.1;  ///< seeded kick before an escape attempt
  std::uint64_t seed = 7;
  double R = 2.0;
  double r = 1.0;

  SimParams sim_params() const {
    SimParams p;
    p.force_field.exponent = exponent;
    p.force_field.spring_constant = spring_constant;
    p.dt = damped_dt;
    p.velocity_damping = velocity_damping;
    p.record_interval = record_interval;
    p.stability_window = stability_window;
    p.stability_epsilon = stability_epsilon;
    p.rng_seed = seed;
    return p;
  }

  TorusKnotSpec spec(int p, int q) const { return {p, q, n, R, r}; }

  /// Defaults for a named experiment: the (3,4) run samples 84 vertices so
  /// both its 3- and 4-fold symmetries are vertex-compatible.
  static ExperimentConfig defaults_for(std::string_view experiment) {
    ExperimentConfig c;
    if (experiment == "torus34") c.n = 84;
    return c;
  }

  nlohmann::json to_json() const {
    return {{"n", n},
            {"exponent", exponent},
            {"spring_constant", spring_constant},
            {"damped_dt", damped_dt},
            {"undamped_dt", undamped_dt},
            {"velocity_damping", velocity_damping},
            {"max_steps", max_steps},
            {"undamped_steps", undamped_steps},
            {"record_interval", record_interval},
            {"stability_window", stability_window},
            {"stability_epsilon", stability_epsilon},
            {"perturb_magnitude", perturb_magnitude},
            {"seed", seed},
            {"R", R},
            {"r", r}};
  }
};

/// A declared outcome: value must lie in [lo, hi] (lo excluded when
/// `lo_open`).
struct Expectation {
  std::string name;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool lo_open = false;
  bool passed = false;

  static Expectation range(std::string name, double value, double lo, double hi) {
    Expectation e{std::move(name), value, lo, hi, false, false};
    e.passed = value >= lo && value <= hi;
    return e;
  }
  /// value > bound
  static Expectation above(std::string name, double value, double bound) {
    Expectation e{std::move(name), value, bound, std::numeric_limits<double>::infinity(), true, false};
    e.passed = value > bound;
    return e;
  }
  static Expectation holds(std::string name, bool ok) { return range(std::move(name), ok ? 1.0 : 0.0, 1.0, 1.0); }
};

struct NamedRun {
  std::string name;
  ScheduleRun run;
};

struct ExperimentResult {
  std::string name;
  nlohmann::json config;
  std::vector<NamedRun> runs;
  std::vector<std::pair<std::string, double>> ratios;
  std::vector<Expectation> expectations;
  double runtime_seconds = 0.0;

  bool passed() const {
    return std::all_of(expectations.begin(), expectations.end(), [](const Expectation& e) { return e.passed; });
  }

  const ScheduleRun& run(std::string_view name) const {
    for (const auto& r : runs) {
      if (r.name == name) return r.run;
    }
    throw std::out_of_range("no run '" + std::string(name) + "'");
  }

  double ratio(std::string_view name) const {
    for (const auto& [k, v] : ratios) {
      if (k == name) return v;
    }
    throw std::out_of_range("no ratio '" + std::string(name) + "'");
  }

  const Expectation& expectation(std::string_view name) const {
    for (const auto& e : expectations) {
      if (e.name == name) return e;
    }
    throw std::out_of_range("no expectation '" + std::string(name) + "'");
  }
};

/// Per-step checks every experiment run is subjected to: the no-crossing
/// guarantee (clearance positive, displacement within the cap) and, for
/// links, constant pairwise linking numbers.
class Watchdog {
 public:
  explicit Watchdog(bool check_linking) : check_linking_(check_linking) {}

  void operator()(const SimState& s, const EnergyRecord* record) {
    ++steps_seen_;
    if (!(s.knot.min_clearance() > 0.0)) crossing_ok_ = false;
    if (s.last_displacement > s.last_cap * (1.0 + 1e-12) + 0.0) crossing_ok_ = false;
    if (s.jammed) ++jammed_steps_;
    if (record && !(record->min_clearance > 0.0)) crossing_ok_ = false;
    if (!check_linking_ || s.knot.component_count() < 2) return;
    std::vector<int> lk;
    for (std::size_t a = 0; a < s.knot.component_count(); ++a) {
      for (std::size_t b = a + 1; b < s.knot.component_count(); ++b) {
        lk.push_back(linking_number(s.knot.component(a), s.knot.component(b)).value);
      }
    }
    if (initial_linking_.empty()) {
      initial_linking_ = lk;
    } else if (lk != initial_linking_) {
      linking_ok_ = false;
    }
    ++linking_checks_;
  }

  bool crossing_ok() const { return crossing_ok_; }
  bool linking_ok() const { return linking_ok_; }
  long jammed_steps() const { return jammed_steps_; }
  long linking_checks() const { return linking_checks_; }
  const std::vector<int>& initial_linking() const { return initial_linking_; }

 private:
  bool check_linking_;
  bool crossing_ok_ = true;
  bool linking_ok_ = true;
  long steps_seen_ = 0;
  long jammed_steps_ = 0;
  long linking_checks_ = 0;
  std::vector<int> initial_linking_;
};

namespace detail {

inline phase::Evolve damped_phase(const ExperimentConfig& c) {
  return {Mode::damped, c.max_steps, {c.damped_dt, std::nullopt, std::nullopt, std::nullopt}, true};
}

inline phase::Evolve undamped_phase(const ExperimentConfig& c) {
  return {Mode::undamped, c.undamped_steps, {c.undamped_dt, std::nullopt, std::nullopt, std::nullopt}, false};
}

// Largest relative rise of the gauged energy between consecutive records in
// the given step range.
inline double max_relative_rise(const EnergyTrace& trace, long from, long to) {
  double best = 0.0;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i - 1].step < from || trace[i].step > to) continue;
    const double a = trace[i - 1].gauged_energy();
    const double b = trace[i].gauged_energy();
    best = std::max(best, (b - a) / a);
  }
  return best;
}

struct WatchedRun {
  ScheduleRun run;
  bool crossing_ok = true;
  bool linking_ok = true;
  std::vector<int> linking;
};

inline WatchedRun run_watched(const PolyKnot& start, const SimParams& params, const Schedule& schedule,
                              bool check_linking) {
  Watchdog dog(check_linking);
  auto run = run_schedule(SimState(start, params), schedule, std::ref(dog));
  return {std::move(run), dog.crossing_ok(), dog.linking_ok(), dog.initial_linking()};
}

inline void add_run_checks(ExperimentResult& r, const std::string& name, const WatchedRun& w) {
  r.expectations.push_back(Expectation::holds(name + ".converged", w.run.converged()));
  r.expectations.push_back(Expectation::holds(name + ".no_crossing", w.crossing_ok));
  r.expectations.push_back(Expectation::holds(name + ".no_jam", !w.run.jammed()));
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Trefoil bistability: the (2,3) start relaxes to the global candidate
/// E_23; the (3,2) start relaxes under damping to a higher local minimum
/// E_32, and a seeded kick, an undamped phase and a damped settle descend
/// from there to E_32u.
inline ExperimentResult run_trefoil_experiment(const ExperimentConfig& c = {}) {
  if (c.n < 24) throw std::invalid_argument("trefoil experiment needs n >= 24");
  detail::Stopwatch clock;
  ExperimentResult r{"trefoil", c.to_json(), {}, {}, {}, 0.0};

  const Schedule s23{{detail::damped_phase(c), phase::RescaleGauge{}, phase::Snapshot{"stable"}}};
  const Schedule s32{{detail::damped_phase(c), phase::RescaleGauge{}, phase::Snapshot{"local"},
                      phase::Perturb{c.perturb_magnitude, c.seed}, detail::undamped_phase(c), detail::damped_phase(c),
                      phase::RescaleGauge{}, phase::Snapshot{"descended"}}};
  auto w23 = detail::run_watched(generate_torus(c.spec(2, 3)), c.sim_params(), s23, false);
  auto w32 = detail::run_watched(generate_torus(c.spec(3, 2)), c.sim_params(), s32, false);

  const double e23 = w23.run.snapshot("stable").gauged_energy();
  const double e32 = w32.run.snapshot("local").gauged_energy();
  const double e32u = w32.run.snapshot("descended").gauged_energy();
  const auto& undamped = w32.run.phases[4];
  const double rise = detail::max_relative_rise(w32.run.trace, undamped.first_step, undamped.last_step);

  r.ratios = {{"E_23", e23}, {"E_32", e32}, {"E_32u", e32u}, {"E_32/E_23", e32 / e23},
              {"E_32u/E_23", e32u / e23}, {"undamped_max_rise", rise}};
  r.expectations.push_back(Expectation::range("E_32/E_23", e32 / e23, 1.015, 1.055));
  r.expectations.push_back(Expectation::range("E_32u/E_23", e32u / e23, 0.995, 1.005));
  r.expectations.push_back(Expectation::range("undamped_oscillation", rise, 1e-4, std::numeric_limits<double>::infinity()));
  detail::add_run_checks(r, "23", w23);
  detail::add_run_checks(r, "32", w32);
  r.runs.push_back({"23", std::move(w23.run)});
  r.runs.push_back({"32", std::move(w32.run)});
  r.runtime_seconds = clock.seconds();
  return r;
}

/// (4,2) torus link: damped to a local minimum E_42, then a seeded kick, an
/// undamped phase and a damped settle to E_42u, compared with the (2,4) start's E_24. Linking
/// numbers are recomputed after every step.
inline ExperimentResult run_torus_link_experiment(const ExperimentConfig& c = {}) {
  if (c.n < 24 || c.n % 2 != 0) throw std::invalid_argument("link experiment needs even n >= 24");
  detail::Stopwatch clock;
  ExperimentResult r{"link42", c.to_json(), {}, {}, {}, 0.0};

  const Schedule s42{{detail::damped_phase(c), phase::RescaleGauge{}, phase::Snapshot{"local"},
                      phase::Perturb{c.perturb_magnitude, c.seed}, detail::undamped_phase(c), detail::damped_phase(c), phase::RescaleGauge{},
                      phase::Snapshot{"descended"}}};
  const Schedule s24{{detail::damped_phase(c), phase::RescaleGauge{}, phase::Snapshot{"stable"}}};
  auto w42 = detail::run_watched(generate_torus(c.spec(4, 2)), c.sim_params(), s42, true);
  auto w24 = detail::run_watched(generate_torus(c.spec(2, 4)), c.sim_params(), s24, true);

  const double e42 = w42.run.snapshot("local").gauged_energy();
  const double e42u = w42.run.snapshot("descended").gauged_energy();
  const double e24 = w24.run.snapshot("stable").gauged_energy();
  const int lk42 = w42.linking.empty() ? 0 : w42.linking.front();
  const int lk24 = w24.linking.empty() ? 0 : w24.linking.front();

  r.ratios = {{"E_42", e42},          {"E_42u", e42u},   {"E_24", e24}, {"E_42/E_42u", e42 / e42u},
              {"E_42u/E_24", e42u / e24}, {"linking_42", lk42}, {"linking_24", lk24}};
  r.expectations.push_back(Expectation::range("E_42/E_42u", e42 / e42u, 1.045, 1.105));
  r.expectations.push_back(Expectation::range("E_42u/E_24", e42u / e24, 0.99, 1.01));
  r.expectations.push_back(Expectation::range("|linking_42|", std::abs(lk42), 2, 2));
  r.expectations.push_back(Expectation::range("|linking_24|", std::abs(lk24), 2, 2));
  r.expectations.push_back(Expectation::holds("42.linking_constant", w42.linking_ok));
  r.expectations.push_back(Expectation::holds("24.linking_constant", w24.linking_ok));
  detail::add_run_checks(r, "42", w42);
  detail::add_run_checks(r, "24", w24);
  r.runs.push_back({"42", std::move(w42.run)});
  r.runs.push_back({"24", std::move(w24.run)});
  r.runtime_seconds = clock.seconds();
  return r;
}

/// Symmetric (3,4) trap: the damped flow keeps the start's symmetry and
/// stabilizes at E_sym; a seeded kick plus an undamped phase (and damped
/// settle) lands at E_pert. Thickness is measured at both minima.
inline ExperimentResult run_34_experiment(const ExperimentConfig& c = ExperimentConfig::defaults_for("torus34")) {
  if (c.n < 24) throw std::invalid_argument("(3,4) experiment needs n >= 24");
  detail::Stopwatch clock;
  ExperimentResult r{"torus34", c.to_json(), {}, {}, {}, 0.0};

  const Schedule s{{detail::damped_phase(c), phase::RescaleGauge{}, phase::Snapshot{"symmetric"},
                    phase::Perturb{c.perturb_magnitude, c.seed}, detail::undamped_phase(c), detail::damped_phase(c),
                    phase::RescaleGauge{}, phase::Snapshot{"perturbed"}}};
  auto w = detail::run_watched(generate_torus(c.spec(3, 4)), c.sim_params(), s, false);

  const auto& sym = w.run.snapshot("symmetric");
  const auto& pert = w.run.snapshot("perturbed");
  const double es = sym.gauged_energy();
  const double ep = pert.gauged_energy();
  r.ratios = {{"E_sym", es},
              {"E_pert", ep},
              {"E_sym/E_pert", es / ep},
              {"ERL_sym", sym.thickness.ropelength},
              {"ERL_pert", pert.thickness.ropelength}};
  r.expectations.push_back(Expectation::range("E_sym/E_pert", es / ep, 1.002, 1.02));
  r.expectations.push_back(Expectation::above("ERL_pert-ERL_sym", pert.thickness.ropelength - sym.thickness.ropelength, 0.0));
  detail::add_run_checks(r, "34", w);
  r.runs.push_back({"34", std::move(w.run)});
  r.runtime_seconds = clock.seconds();
  return r;
}

struct ErlCell {
  double exponent = 0.0;
  std::optional<ThicknessReport> report;  ///< empty when the run did not converge
  double simon_energy = 0.0;              ///< gauged
  bool jammed = false;                    ///< the descent ended in edge contact
  std::string error;
};

/// ERL at each exponent with the default damped schedule; a cell that fails
/// to converge is recorded and the sweep continues. Sorted by exponent.
inline std::vector<ErlCell> run_erl_sweep(const TorusKnotSpec& spec, std::vector<double> exponents,
                                          const ExperimentConfig& c = {}) {
  std::sort(exponents.begin(), exponents.end());
  std::vector<ErlCell> out;
  for (const double d : exponents) {
    ErlCell cell{d, std::nullopt, 0.0, {}};
    try {
      auto [rep, st] = electrical_ropelength(spec, d, damped_schedule(c.max_steps, {c.damped_dt, {}, {}, {}}),
                                             c.sim_params());
      cell.report = rep;
      cell.jammed = st.jammed;
      cell.simon_energy = gauged(simon_energy(st.knot), st.knot.total_length(), gauge_length(st.knot));
    } catch (const NonConvergence& e) {
      cell.error = e.what();
    }
    out.push_back(std::move(cell));
  }
  return out;
}

/// ERL of the trefoil at d = 2, 3.5, 6 against the reference values and the
/// monotonicity in d.
inline ExperimentResult run_erl_experiment(const ExperimentConfig& c = {}) {
  detail::Stopwatch clock;
  ExperimentResult r{"erl-sweep", c.to_json(), {}, {}, {}, 0.0};
  const auto cells = run_erl_sweep(c.spec(2, 3), {2.0, 3.5, 6.0}, c);
  auto erl = [&](double d) {
    for (const auto& cell : cells) {
      if (cell.exponent == d && cell.report) return cell.report->ropelength;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  for (const auto& cell : cells) {
    r.ratios.emplace_back("ERL(" + format_real(cell.exponent) + ")", erl(cell.exponent));
    r.ratios.emplace_back("jammed(d=" + format_real(cell.exponent) + ")", cell.jammed ? 1.0 : 0.0);
    r.expectations.push_back(Expectation::holds("converged(d=" + format_real(cell.exponent) + ")", cell.report.has_value()));
  }
  r.expectations.push_back(Expectation::range("ERL(6)", erl(6.0), 32.68 * 0.9, 32.68 * 1.1));
  r.expectations.push_back(Expectation::range("ERL(3.5)", erl(3.5), 40.45 * 0.9, 40.45 * 1.1));
  r.expectations.push_back(Expectation::above("ERL(2)-ERL(3.5)", erl(2.0) - erl(3.5), 0.0));
  r.expectations.push_back(Expectation::above("ERL(3.5)-ERL(6)", erl(3.5) - erl(6.0), 0.0));
  r.runtime_seconds = clock.seconds();
  return r;
}

// ---------------------------------------------------------------------------
// Artifacts

inline nlohmann::json expectation_to_json(const Expectation& e) {
  nlohmann::json j = {{"name", e.name}, {"value", round_sig(e.value)}, {"passed", e.passed}};
  j["lo"] = std::isfinite(e.lo) ? nlohmann::json(round_sig(e.lo)) : nlohmann::json(nullptr);
  j["hi"] = std::isfinite(e.hi) ? nlohmann::json(round_sig(e.hi)) : nlohmann::json(nullptr);
  j["lo_open"] = e.lo_open;
  return j;
}

inline nlohmann::json manifest_json(const ExperimentResult& r) {
  nlohmann::json ratios = nlohmann::json::object();
  for (const auto& [k, v] : r.ratios) ratios[k] = std::isfinite(v) ? nlohmann::json(round_sig(v)) : nlohmann::json(nullptr);
  nlohmann::json exps = nlohmann::json::array();
  for (const auto& e : r.expectations) exps.push_back(expectation_to_json(e));
  nlohmann::json runs = nlohmann::json::object();
  for (const auto& nr : r.runs) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : nr.run.phases) {
      nlohmann::json pj = {{"index", p.index}, {"kind", p.kind}, {"first_step", p.first_step}, {"last_step", p.last_step}};
      if (p.reason) pj["stopped_reason"] = to_string(*p.reason);
      phases.push_back(std::move(pj));
    }
    nlohmann::json snaps = nlohmann::json::object();
    for (const auto& s : nr.run.snapshots) {
      snaps[s.label] = {{"step", s.state.step_index},
                        {"gauged_simon_energy", round_sig(s.gauged_energy())},
                        {"energy", report_to_json(s.energy)},
                        {"thickness", report_to_json(s.thickness)}};
    }
    runs[nr.name] = {{"phases", std::move(phases)}, {"snapshots", std::move(snaps)}};
  }
  return {{"experiment", r.name},
          {"config", r.config},
          {"ratios", std::move(ratios)},
          {"expectations", std::move(exps)},
          {"passed", r.passed()},
          {"runtime_seconds", round_sig(r.runtime_seconds, 4)},
          {"runs", std::move(runs)}};
}

/// Writes `<run>.trace.csv`, `<run>.<snapshot>.knot` and `manifest.json`
/// into `dir` (created if needed).
inline void write_experiment_artifacts(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& nr : r.runs) {
    write_file(dir / (nr.name + ".trace.csv"), trace_to_csv(nr.run.trace));
    for (const auto& s : nr.run.snapshots) {
      save_knot(s.state.knot, dir / (nr.name + "." + s.label + ".knot"), KnotFormat::structured,
                {{"experiment", r.name}, {"run", nr.name}, {"snapshot", s.label}, {"step", s.state.step_index}});
    }
  }
  write_file(dir / "manifest.json", manifest_json(r).dump(2) + "\n");
}

}  // namespace knotgrad
