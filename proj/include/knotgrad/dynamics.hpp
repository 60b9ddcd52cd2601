#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "knotgrad/energy.hpp"
#include "knotgrad/knot.hpp"

namespace knotgrad {

enum class Mode { damped, undamped };

inline std::string_view to_string(Mode m) { return m == Mode::damped ? "damped" : "undamped"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "damped") return Mode::damped;
  if (s == "undamped") return Mode::undamped;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

struct SimParams {
  ForceField force_field{};
  double dt = 0.01;
  double mass = 1.0;
  Mode mode = Mode::damped;
  double velocity_damping = 0.002;  ///< undamped-mode drag per step
  double safety_fraction = 0.25;    ///< displacement cap, as a fraction of the clearance
  int stability_window = 50;        ///< in records
  double stability_epsilon = 1e-7;
  int record_interval = 10;  ///< steps between trace records
  int projection_rounds = 3;
  std::uint64_t rng_seed = 1;

  void validate() const {
    force_field.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(mass > 0.0)) throw std::invalid_argument("mass must be positive");
    if (!(velocity_damping >= 0.0 && velocity_damping <= 1.0)) {
      throw std::invalid_argument("velocity_damping must lie in [0, 1]");
    }
    if (!(safety_fraction > 0.0 && safety_fraction < 0.5)) {
      throw std::invalid_argument("safety_fraction must lie in (0, 0.5)");
    }
    if (stability_window < 2) throw std::invalid_argument("stability_window must be >= 2");
    if (!(stability_epsilon > 0.0)) throw std::invalid_argument("stability_epsilon must be positive");
    if (record_interval < 1) throw std::invalid_argument("record_interval must be >= 1");
    if (projection_rounds < 0) throw std::invalid_argument("projection_rounds must be >= 0");
  }
};

/// Raised when a step would leave the configuration invalid. Carries a dump
/// of the pre-step state for diagnosis.
class StepFailure : public std::runtime_error {
 public:
  StepFailure(const std::string& what, std::vector<Vec3> dump)
      : std::runtime_error(what), state_dump(std::move(dump)) {}
  std::vector<Vec3> state_dump;
};

struct SimState {
  explicit SimState(PolyKnot k, SimParams p = {})
      : knot(std::move(k)), velocities(knot.vertex_count()), params(p) {
    params.validate();
  }

  PolyKnot knot;
  std::vector<Vec3> velocities;
  long step_index = 0;
  SimParams params;
  /// Largest vertex displacement of the most recent step (before the gauge
  /// similarity in damped mode), and the clearance it was capped against.
  double last_displacement = 0.0;
  double last_cap = 0.0;
  /// Set when the most recent step was refused because two edges were in
  /// contact (see detail::lost_clearance).
  bool jammed = false;
};

struct EnergyRecord {
  long step = 0;
  double simon_energy = 0.0;
  double spring_energy = 0.0;
  double min_clearance = 0.0;
  Mode mode = Mode::damped;
  double total_length = 0.0;
  double gauge = 0.0;  ///< canonical length the energy is normalised to

  /// Simon energy at the canonical length gauge.
  double gauged_energy() const { return knotgrad::gauged(simon_energy, total_length, gauge); }
};

using EnergyTrace = std::vector<EnergyRecord>;

inline EnergyRecord record_of(const SimState& s) {
  const auto& k = s.knot;
  return {s.step_index,      simon_energy(k), spring_energy(k, s.params.force_field), k.min_clearance(),
          s.params.mode,     k.total_length(), gauge_length(k)};
}

namespace detail {

inline double max_norm(const std::vector<Vec3>& d) {
  double m = 0.0;
  for (const auto& v : d) m = std::max(m, norm2(v));
  return std::sqrt(m);
}

// Gauss-Seidel sweeps moving both endpoints of each edge symmetrically so
// the edge approaches `rest`.
inline void project_edges(std::vector<Vec3>& x, std::span<const std::size_t> offsets, double rest, int rounds) {
  const auto edges = build_edges(offsets);
  for (int r = 0; r < rounds; ++r) {
    for (const auto& e : edges) {
      const Vec3 d = x[e.to] - x[e.from];
      const double len = norm(d);
      const Vec3 corr = d * (0.5 * (len - rest) / len);
      x[e.from] += corr;
      x[e.to] -= corr;
    }
  }
}

// Solves the symmetric positive definite cyclic tridiagonal system with
// diagonal a, couplings c[i] between unknowns i and i+1 (c[m-1] couples
// m-1 and 0), right-hand side b. Eliminates the last unknown as a border.
inline std::vector<double> solve_cyclic_spd(const std::vector<double>& a, const std::vector<double>& c,
                                            const std::vector<double>& b) {
  const std::size_t m = a.size();
  const std::size_t k = m - 1;  // size of the inner tridiagonal block
  // Thomas on the inner block for two right-hand sides: b and the border column.
  std::vector<double> diag(a.begin(), a.begin() + k), y1(b.begin(), b.begin() + k), y2(k, 0.0);
  y2[0] += c[m - 1];
  y2[k - 1] += c[k - 1];
  for (std::size_t i = 1; i < k; ++i) {
    const double w = c[i - 1] / diag[i - 1];
    diag[i] -= w * c[i - 1];
    y1[i] -= w * y1[i - 1];
    y2[i] -= w * y2[i - 1];
  }
  y1[k - 1] /= diag[k - 1];
  y2[k - 1] /= diag[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) {
    y1[i] = (y1[i] - c[i] * y1[i + 1]) / diag[i];
    y2[i] = (y2[i] - c[i] * y2[i + 1]) / diag[i];
  }
  const double t = (b[k] - c[k - 1] * y1[k - 1] - c[m - 1] * y1[0]) / (a[k] - c[k - 1] * y2[k - 1] - c[m - 1] * y2[0]);
  std::vector<double> x(m);
  for (std::size_t i = 0; i < k; ++i) x[i] = y1[i] - t * y2[i];
  x[k] = t;
  return x;
}

// Removes from f the part that would change edge lengths to first order:
// f - sum_j lambda_j grad|e_j| with the multipliers from the Gram system.
inline void project_to_tangent(std::vector<Vec3>& f, std::span<const Vec3> x, std::span<const std::size_t> offsets) {
  for (std::size_t c = 0; c + 1 < offsets.size(); ++c) {
    const std::size_t o = offsets[c], m = offsets[c + 1] - o;
    auto at = [&](std::size_t j) { return o + (j % m); };
    std::vector<Vec3> u(m);
    for (std::size_t j = 0; j < m; ++j) {
      const Vec3 e = x[at(j + 1)] - x[at(j)];
      u[j] = e / norm(e);
    }
    std::vector<double> a(m, 2.0), cpl(m), rhs(m);
    for (std::size_t j = 0; j < m; ++j) {
      cpl[j] = -dot(u[j], u[(j + 1) % m]);
      rhs[j] = dot(u[j], f[at(j + 1)] - f[at(j)]);
    }
    const auto lambda = solve_cyclic_spd(a, cpl, rhs);
    for (std::size_t j = 0; j < m; ++j) {
      f[at(j + 1)] -= u[j] * lambda[j];
      f[at(j)] += u[j] * lambda[j];
    }
  }
}

inline PolyKnot commit(const SimState& s, std::vector<Vec3> next, double rest) {
  try {
    return s.knot.with_vertices(std::move(next), rest);
  } catch (const std::exception& e) {
    std::ostringstream msg;
    msg << "step " << s.step_index << " produced an invalid configuration: " << e.what();
    throw StepFailure(msg.str(), std::vector<Vec3>(s.knot.vertices().begin(), s.knot.vertices().end()));
  }
}

// Below this fraction of the rest length two edges count as touching.
inline constexpr double contact_floor = 1e-9;

// With every vertex moving at most safety*c, no clearance can drop below
// (1 - 2*safety)*c in exact arithmetic. Falling below that (or below the
// contact floor) means the edges are close enough for rounding to matter,
// and the move is refused.
inline bool lost_clearance(const PolyKnot& before, double after, double safety) {
  const double bound = before.min_clearance() * (1.0 - 2.0 * safety) * (1.0 - 1e-9);
  return after < bound || after < contact_floor * before.rest_edge_length();
}

// A refused step: configuration unchanged, velocities cleared, clock advanced.
inline SimState frozen(const SimState& s) {
  SimState out = s;
  std::fill(out.velocities.begin(), out.velocities.end(), Vec3{});
  out.last_displacement = 0.0;
  out.last_cap = s.params.safety_fraction * s.knot.min_clearance();
  out.jammed = true;
  ++out.step_index;
  return out;
}

}  // namespace detail

/// Advances one step.
///
/// Damped: first-order gradient flow x += dt F / m on the fixed-edge-length
/// manifold. F is projected onto the constraint tangent space, so critical
/// configurations are exact fixed points; edge re-projection then removes the
/// second-order length drift and the length gauge is restored. Velocities
/// stay zero. The spring forces and the edge-neighbour repulsion point along
/// edges and would be projected away, so they are left out of F up front.
/// Undamped: semi-implicit Euler with a small drag; springs carry energy.
/// In both modes the displacement field is scaled so no vertex moves further
/// than safety_fraction * min_clearance, which keeps edges from passing
/// through each other within one step.
inline SimState step(const SimState& s) {
  const auto& p = s.params;
  const auto& k = s.knot;
  const std::size_t n = k.vertex_count();
  const auto x = k.vertices();
  auto force = p.mode == Mode::damped ? constrained_repulsive_forces(k, p.force_field) : total_forces(k, p.force_field);
  if (p.mode == Mode::damped) detail::project_to_tangent(force, x, k.offsets());
  const double cap = p.safety_fraction * k.min_clearance();

  SimState out = s;
  out.jammed = false;
  std::vector<Vec3> next(x.begin(), x.end());
  std::vector<Vec3> disp(n);

  if (p.mode == Mode::damped) {
    for (std::size_t i = 0; i < n; ++i) disp[i] = force[i] * (p.dt / p.mass);
    const double m0 = detail::max_norm(disp);
    if (m0 > cap) {
      for (auto& d : disp) d *= cap / m0;
    }
    for (std::size_t i = 0; i < n; ++i) next[i] += disp[i];
    detail::project_edges(next, k.offsets(), k.rest_edge_length(), p.projection_rounds);
    // The projection is part of the move; cap the combined field as well.
    for (std::size_t i = 0; i < n; ++i) disp[i] = next[i] - x[i];
    const double m1 = detail::max_norm(disp);
    if (m1 > cap) {
      for (std::size_t i = 0; i < n; ++i) next[i] = x[i] + disp[i] * (cap / m1);
    }
    out.last_displacement = std::min(m1, cap);
    std::fill(out.velocities.begin(), out.velocities.end(), Vec3{});
    const double factor = detail::scale_to_length(next, k.offsets(), gauge_length(k));
    out.knot = detail::commit(s, std::move(next), k.rest_edge_length() * factor);
    if (detail::lost_clearance(k, out.knot.min_clearance() / factor, p.safety_fraction)) return detail::frozen(s);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      out.velocities[i] += force[i] * (p.dt / p.mass);
      out.velocities[i] *= (1.0 - p.velocity_damping);
      disp[i] = out.velocities[i] * p.dt;
    }
    const double m = detail::max_norm(disp);
    if (m > cap) {
      const double f = cap / m;
      for (std::size_t i = 0; i < n; ++i) {
        disp[i] *= f;
        out.velocities[i] *= f;
      }
    }
    for (std::size_t i = 0; i < n; ++i) next[i] += disp[i];
    out.last_displacement = std::min(m, cap);
    out.knot = detail::commit(s, std::move(next), k.rest_edge_length());
    if (detail::lost_clearance(k, out.knot.min_clearance(), p.safety_fraction)) return detail::frozen(s);
  }
  out.last_cap = cap;
  ++out.step_index;
  return out;
}

/// Switching to damped zeroes all velocities.
inline SimState set_mode(SimState s, Mode mode) {
  s.params.mode = mode;
  if (mode == Mode::damped) std::fill(s.velocities.begin(), s.velocities.end(), Vec3{});
  return s;
}

inline SimState set_exponent(SimState s, double d) {
  s.params.force_field.exponent = d;
  s.params.force_field.validate();
  return s;
}

/// Displaces each vertex by an independent vector drawn uniformly from the
/// ball of radius magnitude * rest_edge_length, capped like a step.
inline SimState perturb(SimState s, double magnitude, std::uint64_t seed) {
  if (!(magnitude >= 0.0)) throw std::invalid_argument("perturbation magnitude must be >= 0");
  if (magnitude == 0.0) return s;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double radius = magnitude * s.knot.rest_edge_length();
  std::vector<Vec3> disp(s.knot.vertex_count());
  for (auto& d : disp) {
    Vec3 v;
    do {
      v = {u(rng), u(rng), u(rng)};
    } while (norm2(v) > 1.0);
    d = v * radius;
  }
  const double cap = s.params.safety_fraction * s.knot.min_clearance();
  const double m = detail::max_norm(disp);
  if (m > cap) {
    for (auto& d : disp) d *= cap / m;
  }
  std::vector<Vec3> next(s.knot.vertices().begin(), s.knot.vertices().end());
  for (std::size_t i = 0; i < next.size(); ++i) next[i] += disp[i];
  s.knot = detail::commit(s, std::move(next), s.knot.rest_edge_length());
  return s;
}

/// `jammed`: a step was refused because two edges reached contact; the
/// damped flow cannot leave such a state, so evolution ends there.
enum class StopReason { stable, max_steps, jammed };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::stable: return "stable";
    case StopReason::jammed: return "jammed";
    default: return "max_steps";
  }
}

struct EvolveResult {
  SimState state;
  EnergyTrace trace;
  StopReason reason = StopReason::max_steps;
};

/// True when the last `window` gauged energies vary by less than `epsilon`
/// relative to their mean.
inline bool is_stable(const EnergyTrace& trace, int window, double epsilon) {
  if (trace.size() < static_cast<std::size_t>(window)) return false;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double sum = 0.0;
  for (auto it = trace.end() - window; it != trace.end(); ++it) {
    const double e = it->gauged_energy();
    lo = std::min(lo, e);
    hi = std::max(hi, e);
    sum += e;
  }
  return (hi - lo) / (sum / window) < epsilon;
}

/// Steps until the trailing window of recorded energies is flat, until a
/// damped step jams, or until max_steps. The trace starts with a record of the initial state.
///
/// `observer(state, record)` runs after every step (and once for the initial
/// state); `record` is non-null on the steps that were recorded. Throwing
/// from the observer aborts the evolution.
template <typename Observer>
EvolveResult evolve_until_stable(SimState s, long max_steps, Observer&& observer) {
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  EvolveResult result{std::move(s), {}, StopReason::max_steps};
  auto& st = result.state;
  const auto& p = st.params;
  result.trace.push_back(record_of(st));
  observer(std::as_const(st), &result.trace.back());
  for (long i = 1; i <= max_steps; ++i) {
    st = step(st);
    if (i % p.record_interval == 0 || i == max_steps || st.jammed) {
      result.trace.push_back(record_of(st));
      observer(std::as_const(st), &result.trace.back());
      if (st.jammed && p.mode == Mode::damped) {
        result.reason = StopReason::jammed;
        break;
      }
      if (is_stable(result.trace, p.stability_window, p.stability_epsilon)) {
        result.reason = StopReason::stable;
        break;
      }
    } else {
      observer(std::as_const(st), static_cast<const EnergyRecord*>(nullptr));
    }
  }
  return result;
}

inline EvolveResult evolve_until_stable(SimState s, long max_steps) {
  return evolve_until_stable(std::move(s), max_steps, [](const SimState&, const EnergyRecord*) {});
}

}  // namespace knotgrad
