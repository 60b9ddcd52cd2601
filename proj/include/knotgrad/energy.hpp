#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "knotgrad/knot.hpp"

namespace knotgrad {

/// Pairwise repulsion with force magnitude strength * r^-exponent, plus Hooke
/// springs on every edge.
struct ForceField {
  double exponent = 2.0;
  double repulsion_strength = 1.0;
  double spring_constant = 50.0;

  void validate() const {
    if (!(exponent >= 2.0 && exponent <= 6.0)) throw std::invalid_argument("force exponent must lie in [2, 6]");
    if (!(repulsion_strength > 0.0)) throw std::invalid_argument("repulsion_strength must be positive");
    if (!(spring_constant > 0.0)) throw std::invalid_argument("spring_constant must be positive");
  }
};

struct EnergyReport {
  double simon_energy = 0.0;
  double potential_energy_d = 0.0;
  double spring_energy = 0.0;
  double min_clearance = 0.0;
};

namespace detail {

inline void check_separated(double r2, std::size_t i, std::size_t j) {
  if (!(r2 > 0.0)) {
    throw DegenerateGeometry("coincident vertices " + std::to_string(i) + " and " + std::to_string(j));
  }
}

// r^-exponent for the common integer exponents without calling pow.
inline double inv_pow(double r, double r2, double exponent) {
  if (exponent == 2.0) return 1.0 / r2;
  if (exponent == 3.0) return 1.0 / (r2 * r);
  if (exponent == 4.0) return 1.0 / (r2 * r2);
  if (exponent == 6.0) return 1.0 / (r2 * r2 * r2);
  return std::pow(r, -exponent);
}

}  // namespace detail

/// Sum of 1/|v_i - v_j| over every unordered pair of distinct vertices,
/// across all components, edge neighbours included.
inline double simon_energy(std::span<const Vec3> v) {
  double e = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const double r2 = norm2(v[i] - v[j]);
      detail::check_separated(r2, i, j);
      e += 1.0 / std::sqrt(r2);
    }
  }
  return e;
}

inline double simon_energy(const PolyKnot& k) { return simon_energy(k.vertices()); }

/// Conservative pair potential for the active exponent:
/// strength * sum r^-(d-1) / (d-1). At d = 2 this is the Simon energy.
inline double repulsive_potential(std::span<const Vec3> v, const ForceField& ff) {
  const double d = ff.exponent;
  double e = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const double r2 = norm2(v[i] - v[j]);
      detail::check_separated(r2, i, j);
      const double r = std::sqrt(r2);
      e += r * detail::inv_pow(r, r2, d);
    }
  }
  return ff.repulsion_strength * e / (d - 1.0);
}

/// Force on vertex i: strength * sum_j (v_i - v_j) / |v_i - v_j|^(d+1).
inline std::vector<Vec3> repulsive_forces(std::span<const Vec3> v, const ForceField& ff) {
  std::vector<Vec3> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const Vec3 diff = v[i] - v[j];
      const double r2 = norm2(diff);
      detail::check_separated(r2, i, j);
      const double r = std::sqrt(r2);
      const Vec3 fij = diff * (ff.repulsion_strength * detail::inv_pow(r, r2, ff.exponent) / r);
      f[i] += fij;
      f[j] -= fij;
    }
  }
  return f;
}

inline std::vector<Vec3> repulsive_forces(const PolyKnot& k, const ForceField& ff) {
  return repulsive_forces(k.vertices(), ff);
}

/// Two-sided Hooke springs: each endpoint of an edge of length l is pulled
/// toward the other with magnitude spring_constant * (l - rest).
inline std::vector<Vec3> spring_forces(std::span<const Vec3> v, std::span<const std::size_t> offsets, double rest,
                                       const ForceField& ff) {
  std::vector<Vec3> f(v.size());
  for (const auto& e : detail::build_edges(offsets)) {
    const Vec3 d = v[e.to] - v[e.from];
    const double len = norm(d);
    const Vec3 pull = d * (ff.spring_constant * (len - rest) / len);
    f[e.from] += pull;
    f[e.to] -= pull;
  }
  return f;
}

inline std::vector<Vec3> spring_forces(const PolyKnot& k, const ForceField& ff) {
  return spring_forces(k.vertices(), k.offsets(), k.rest_edge_length(), ff);
}

inline double spring_energy(std::span<const Vec3> v, std::span<const std::size_t> offsets, double rest,
                            const ForceField& ff) {
  double e = 0.0;
  for (const auto& edge : detail::build_edges(offsets)) {
    const double ext = distance(v[edge.from], v[edge.to]) - rest;
    e += 0.5 * ff.spring_constant * ext * ext;
  }
  return e;
}

inline double spring_energy(const PolyKnot& k, const ForceField& ff) {
  return spring_energy(k.vertices(), k.offsets(), k.rest_edge_length(), ff);
}

/// Repulsive forces with the edge-neighbour pairs left out. Those pair forces
/// (like the spring forces) act purely along edges, i.e. normal to the
/// fixed-edge-length constraint, so a constrained flow never feels them.
inline std::vector<Vec3> constrained_repulsive_forces(const PolyKnot& k, const ForceField& ff) {
  const auto v = k.vertices();
  const auto off = k.offsets();
  std::vector<Vec3> f(v.size());
  std::vector<std::size_t> comp(v.size());
  for (std::size_t c = 0; c + 1 < off.size(); ++c) {
    for (std::size_t i = off[c]; i < off[c + 1]; ++i) comp[i] = c;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t ci = comp[i];
    const std::size_t m = off[ci + 1] - off[ci];
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      if (comp[j] == ci && detail::cyclic_separation(i - off[ci], j - off[ci], m) == 1) continue;
      const Vec3 diff = v[i] - v[j];
      const double r2 = norm2(diff);
      detail::check_separated(r2, i, j);
      const double r = std::sqrt(r2);
      const Vec3 fij = diff * (ff.repulsion_strength * detail::inv_pow(r, r2, ff.exponent) / r);
      f[i] += fij;
      f[j] -= fij;
    }
  }
  return f;
}

inline std::vector<Vec3> total_forces(const PolyKnot& k, const ForceField& ff) {
  auto f = repulsive_forces(k, ff);
  const auto s = spring_forces(k, ff);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += s[i];
  return f;
}

inline EnergyReport energy_report(const PolyKnot& k, const ForceField& ff) {
  return {simon_energy(k), repulsive_potential(k.vertices(), ff), spring_energy(k, ff), k.min_clearance()};
}

}  // namespace knotgrad
