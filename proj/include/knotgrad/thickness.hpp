#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>
#include <string_view>

#include "knotgrad/geometry.hpp"
#include "knotgrad/knot.hpp"

namespace knotgrad {

enum class BindingConstraint { self_distance, curvature };

inline std::string_view to_string(BindingConstraint b) {
  return b == BindingConstraint::self_distance ? "self_distance" : "curvature";
}

namespace detail {

// Vertex v (neighbours a, b) is a critical point of the distance to y when
// both incident edges leave v on the same side of the plane through v normal
// to y - v: the distance has a local minimum or maximum there.
inline bool vertex_turns(const Vec3& v, const Vec3& a, const Vec3& b, const Vec3& y) {
  return dot(y - v, a - v) * dot(y - v, b - v) >= 0.0;
}

// Parameter in (0, 1) of the foot of the perpendicular from y to segment
// [p, q], if there is one.
inline std::optional<double> interior_foot(const Vec3& p, const Vec3& q, const Vec3& y) {
  const Vec3 d = q - p;
  const double t = dot(y - p, d) / dot(d, d);
  if (t > 0.0 && t < 1.0) return t;
  return std::nullopt;
}

// Smallest doubly-critical self-distance: the shortest chord x-y whose ends
// are both critical points of the distance to the other end. Candidates are
// interior-interior (perpendicular to both edges), vertex-interior and
// vertex-vertex pairs. Same-component pairs whose edges lie within `skip` of
// each other are ignored.
inline double doubly_critical_distance(const PolyKnot& k, std::size_t skip) {
  const auto v = k.vertices();
  const auto off = k.offsets();
  const auto edges = build_edges(off);
  const std::size_t n = v.size();
  std::vector<std::size_t> comp(n);
  for (std::size_t c = 0; c + 1 < off.size(); ++c) {
    for (std::size_t i = off[c]; i < off[c + 1]; ++i) comp[i] = c;
  }
  auto size_of = [&](std::size_t c) { return off[c + 1] - off[c]; };
  auto prev = [&](std::size_t g) { return off[comp[g]] + (g - off[comp[g]] + size_of(comp[g]) - 1) % size_of(comp[g]); };
  auto next = [&](std::size_t g) { return off[comp[g]] + (g - off[comp[g]] + 1) % size_of(comp[g]); };
  // Edges are indexed by their start vertex.
  auto far_edges = [&](std::size_t e, std::size_t f) {
    return comp[e] != comp[f] || cyclic_separation(e - off[comp[e]], f - off[comp[f]], size_of(comp[e])) > skip;
  };
  auto far_vertex_edge = [&](std::size_t g, std::size_t f) { return far_edges(prev(g), f) && far_edges(g, f); };
  auto turns = [&](std::size_t g, const Vec3& y) { return vertex_turns(v[g], v[prev(g)], v[next(g)], y); };

  double best2 = std::numeric_limits<double>::infinity();
  auto offer = [&](const Vec3& x, const Vec3& y) { best2 = std::min(best2, norm2(x - y)); };

  // Interior-interior.
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Vec3 p1 = v[edges[i].from], d1 = v[edges[i].to] - p1;
    for (std::size_t j = i + 1; j < edges.size(); ++j) {
      if (!far_edges(edges[i].from, edges[j].from)) continue;
      const Vec3 p2 = v[edges[j].from], d2 = v[edges[j].to] - p2;
      const Vec3 r = p1 - p2;
      const double a = dot(d1, d1), e = dot(d2, d2), b = dot(d1, d2), c = dot(d1, r), f = dot(d2, r);
      const double denom = a * e - b * b;
      if (denom <= 1e-12 * a * e) {
        // Parallel: every pair on the common perpendicular strip is critical.
        const double t0 = f / e, t1 = (f + b) / e;
        if (std::max(t0, t1) > 0.0 && std::min(t0, t1) < 1.0) best2 = std::min(best2, norm2(r - d2 * t0));
        continue;
      }
      const double s = (b * f - c * e) / denom;
      const double t = (a * f - b * c) / denom;
      if (s > 0.0 && s < 1.0 && t > 0.0 && t < 1.0) offer(p1 + d1 * s, p2 + d2 * t);
    }
  }
  // Vertex-interior.
  for (std::size_t g = 0; g < n; ++g) {
    for (const auto& f : edges) {
      if (!far_vertex_edge(g, f.from)) continue;
      if (const auto t = interior_foot(v[f.from], v[f.to], v[g])) {
        const Vec3 y = v[f.from] + (v[f.to] - v[f.from]) * *t;
        if (turns(g, y)) offer(v[g], y);
      }
    }
  }
  // Vertex-vertex.
  for (std::size_t g = 0; g < n; ++g) {
    for (std::size_t h = g + 1; h < n; ++h) {
      if (!far_vertex_edge(g, h) || !far_vertex_edge(g, prev(h))) continue;
      if (turns(g, v[h]) && turns(h, v[g])) offer(v[g], v[h]);
    }
  }
  return std::sqrt(best2);
}

}  // namespace detail

struct ThicknessReport {
  double tube_radius = 0.0;
  BindingConstraint binding_constraint = BindingConstraint::self_distance;
  double total_length = 0.0;
  double ropelength = 0.0;
  std::size_t skip = 2;
  double distance_radius = 0.0;   ///< half the doubly-critical self-distance
  double curvature_radius = 0.0;  ///< smallest circumradius of consecutive vertex triples
};

/// Largest tube radius the polygon admits, and length / radius.
///
/// The radius is the smaller of half the doubly-critical self-distance (edge
/// pairs more than `skip` edges apart, and all pairs across components) and
/// the smallest circumradius of three consecutive vertices. Only chords that
/// are critical at both ends count: along a gently curving chain the nearby
/// strand is just a neighbour, not a place where a growing tube would touch
/// itself.
inline ThicknessReport thickness(const PolyKnot& k, std::size_t skip = 2) {
  ThicknessReport rep;
  rep.skip = skip;
  rep.total_length = k.total_length();
  rep.distance_radius = 0.5 * detail::doubly_critical_distance(k, skip);

  double curv = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k.component_count(); ++c) {
    const auto loop = k.component(c);
    const std::size_t m = loop.size();
    for (std::size_t i = 0; i < m; ++i) {
      curv = std::min(curv, circumradius(loop[(i + m - 1) % m], loop[i], loop[(i + 1) % m]));
    }
  }
  rep.curvature_radius = curv;

  if (rep.distance_radius <= rep.curvature_radius) {
    rep.tube_radius = rep.distance_radius;
    rep.binding_constraint = BindingConstraint::self_distance;
  } else {
    rep.tube_radius = rep.curvature_radius;
    rep.binding_constraint = BindingConstraint::curvature;
  }
  rep.ropelength = rep.total_length / rep.tube_radius;
  return rep;
}

}  // namespace knotgrad
