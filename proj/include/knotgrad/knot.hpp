#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "knotgrad/geometry.hpp"

namespace knotgrad {

/// A configuration that breaks a PolyKnot invariant. The message names the
/// offending loop/vertex or edge pair.
class InvalidKnot : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Closed edge i -> next(i) of a loop, addressed both globally (flat vertex
/// indices) and locally (component, position within the component).
struct EdgeRef {
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t component = 0;
  std::size_t local = 0;
};

/// Closest pair of edges found by an exhaustive scan.
struct EdgePairDistance {
  double distance = std::numeric_limits<double>::infinity();
  EdgeRef first{};
  EdgeRef second{};
};

namespace detail {

// Cyclic separation along one loop of m edges.
inline std::size_t cyclic_separation(std::size_t i, std::size_t j, std::size_t m) {
  const std::size_t d = i > j ? i - j : j - i;
  return std::min(d, m - d);
}

inline std::vector<EdgeRef> build_edges(std::span<const std::size_t> offsets) {
  std::vector<EdgeRef> edges;
  edges.reserve(offsets.back());
  for (std::size_t c = 0; c + 1 < offsets.size(); ++c) {
    const std::size_t begin = offsets[c];
    const std::size_t m = offsets[c + 1] - begin;
    for (std::size_t l = 0; l < m; ++l) {
      edges.push_back({begin + l, begin + (l + 1) % m, c, l});
    }
  }
  return edges;
}

// Minimum distance over edge pairs whose cyclic separation exceeds `skip`
// (same loop) plus every inter-component pair. skip = 1 excludes exactly the
// edges that share a vertex.
inline EdgePairDistance min_edge_distance(std::span<const Vec3> verts, std::span<const std::size_t> offsets,
                                          std::size_t skip) {
  const auto edges = build_edges(offsets);
  EdgePairDistance best;
  double best2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const EdgeRef& e = edges[i];
    const std::size_t m = offsets[e.component + 1] - offsets[e.component];
    for (std::size_t j = i + 1; j < edges.size(); ++j) {
      const EdgeRef& f = edges[j];
      if (f.component == e.component && cyclic_separation(e.local, f.local, m) <= skip) continue;
      const double d2 = segment_distance2(verts[e.from], verts[e.to], verts[f.from], verts[f.to]);
      if (d2 < best2) {
        best2 = d2;
        best.first = e;
        best.second = f;
      }
    }
  }
  best.distance = std::sqrt(best2);
  return best;
}

}  // namespace detail

/// One or more closed polygonal loops sharing a spring rest length.
///
/// Vertices are stored flat, component after component; `offsets()` has
/// component_count()+1 entries delimiting them. Construction validates every
/// invariant (>= 3 vertices per loop, finite coordinates, positive edge
/// lengths, no two non-adjacent edges touching) and caches the resulting
/// clearance, so a PolyKnot that exists is always a valid embedding.
class PolyKnot {
 public:
  using Loop = std::vector<Vec3>;

  PolyKnot(const std::vector<Loop>& components, double rest_edge_length) : rest_(rest_edge_length) {
    offsets_.push_back(0);
    for (const auto& loop : components) {
      vertices_.insert(vertices_.end(), loop.begin(), loop.end());
      offsets_.push_back(vertices_.size());
    }
    validate();
  }

  /// Same topology (component sizes), new coordinates.
  PolyKnot with_vertices(std::vector<Vec3> vertices) const {
    if (vertices.size() != vertices_.size()) throw InvalidKnot("vertex count mismatch");
    return PolyKnot(std::move(vertices), offsets_, rest_);
  }

  PolyKnot with_vertices(std::vector<Vec3> vertices, double rest) const {
    if (vertices.size() != vertices_.size()) throw InvalidKnot("vertex count mismatch");
    return PolyKnot(std::move(vertices), offsets_, rest);
  }

  PolyKnot with_rest_edge_length(double rest) const { return PolyKnot(vertices_, offsets_, rest); }

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t component_count() const { return offsets_.size() - 1; }
  std::span<const Vec3> vertices() const { return vertices_; }
  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const Vec3> component(std::size_t c) const {
    return std::span<const Vec3>(vertices_).subspan(offsets_[c], offsets_[c + 1] - offsets_[c]);
  }
  std::vector<Loop> components() const {
    std::vector<Loop> out;
    for (std::size_t c = 0; c < component_count(); ++c) {
      auto s = component(c);
      out.emplace_back(s.begin(), s.end());
    }
    return out;
  }
  double rest_edge_length() const { return rest_; }

  /// Minimum distance between edges that do not share a vertex (+inf if none).
  double min_clearance() const { return clearance_; }

  std::vector<EdgeRef> edges() const { return detail::build_edges(offsets_); }

  double total_length() const;

  Vec3 centroid() const {
    Vec3 c;
    for (const auto& v : vertices_) c += v;
    return c / static_cast<double>(vertices_.size());
  }

 private:
  PolyKnot(std::vector<Vec3> vertices, std::vector<std::size_t> offsets, double rest)
      : vertices_(std::move(vertices)), offsets_(std::move(offsets)), rest_(rest) {
    validate();
  }

  void validate() {
    if (!(rest_ > 0.0) || !std::isfinite(rest_)) throw InvalidKnot("rest_edge_length must be positive and finite");
    if (component_count() == 0) throw InvalidKnot("knot has no components");
    for (std::size_t c = 0; c < component_count(); ++c) {
      const std::size_t m = offsets_[c + 1] - offsets_[c];
      if (m < 3) {
        throw InvalidKnot("loop too small: loop " + std::to_string(c) + " has " + std::to_string(m) + " vertices");
      }
      for (std::size_t l = 0; l < m; ++l) {
        const Vec3& v = vertices_[offsets_[c] + l];
        if (!is_finite(v)) {
          throw InvalidKnot("non-finite coordinate at loop " + std::to_string(c) + " vertex " + std::to_string(l));
        }
        if (norm2(vertices_[offsets_[c] + (l + 1) % m] - v) <= 0.0) {
          throw InvalidKnot("zero-length edge at loop " + std::to_string(c) + " vertex " + std::to_string(l));
        }
      }
    }
    const auto closest = detail::min_edge_distance(vertices_, offsets_, 1);
    if (!(closest.distance > 0.0)) {
      std::ostringstream msg;
      msg << "edges intersect: loop " << closest.first.component << " edge " << closest.first.local << " and loop "
          << closest.second.component << " edge " << closest.second.local;
      throw InvalidKnot(msg.str());
    }
    clearance_ = closest.distance;
  }

  std::vector<Vec3> vertices_;
  std::vector<std::size_t> offsets_;
  double rest_ = 1.0;
  double clearance_ = std::numeric_limits<double>::infinity();
};

namespace detail {

inline double polygon_length(std::span<const Vec3> v, std::span<const std::size_t> offsets) {
  double sum = 0.0;
  for (const auto& e : build_edges(offsets)) sum += distance(v[e.from], v[e.to]);
  return sum;
}

// Scales about the centroid in place; returns the factor applied.
inline double scale_to_length(std::vector<Vec3>& v, std::span<const std::size_t> offsets, double length) {
  const double factor = length / polygon_length(v, offsets);
  Vec3 c;
  for (const auto& p : v) c += p;
  c = c / static_cast<double>(v.size());
  for (auto& p : v) p = c + (p - c) * factor;
  return factor;
}

}  // namespace detail

inline double PolyKnot::total_length() const { return detail::polygon_length(vertices_, offsets_); }

inline double min_clearance(const PolyKnot& k) { return k.min_clearance(); }

/// Uniform scaling about the centroid so the total polygon length is `length`.
inline PolyKnot rescale_to_length(const PolyKnot& k, double length) {
  if (!(length > 0.0)) throw std::invalid_argument("target length must be positive");
  std::vector<Vec3> verts(k.vertices().begin(), k.vertices().end());
  const double factor = detail::scale_to_length(verts, k.offsets(), length);
  return k.with_vertices(std::move(verts), k.rest_edge_length() * factor);
}

/// The canonical length gauge: total length equals the vertex count (unit mean edge).
inline double gauge_length(const PolyKnot& k) { return static_cast<double>(k.vertex_count()); }

inline PolyKnot apply_gauge(const PolyKnot& k) { return rescale_to_length(k, gauge_length(k)); }

/// Simon energy normalised to the canonical gauge (energy is homogeneous of degree -1).
inline double gauged(double energy, double total_length, double gauge) { return energy * total_length / gauge; }

// ---------------------------------------------------------------------------
// Torus knots and links

struct TorusKnotSpec {
  int p = 2;  ///< longitudinal winding
  int q = 3;  ///< meridional winding
  int n = 80;
  double R = 2.0;
  double r = 1.0;
};

/// Builds the (p,q) torus knot (gcd 1) or the gcd(p,q)-component torus link.
///
/// Component j is the (p/g, q/g) curve phase-shifted by 2*pi*j/(g*q/g) in the
/// longitudinal angle, so the components are congruent under a rotation about
/// the z axis. Each component gets n/g vertices.
inline PolyKnot generate_torus(const TorusKnotSpec& spec) {
  if (spec.p < 0 || spec.q < 0 || spec.p + spec.q == 0) throw std::invalid_argument("p, q must be non-negative, not both zero");
  if (!(spec.R > 0.0) || !(spec.r > 0.0) || !(spec.r < spec.R)) throw std::invalid_argument("need 0 < r < R");
  if (spec.n < 3 * std::max(spec.p, spec.q) || spec.n < 3) {
    throw std::invalid_argument("n = " + std::to_string(spec.n) + " is below 3*max(p,q)");
  }
  const int g = std::gcd(spec.p, spec.q);
  if (spec.n % g != 0) {
    throw std::invalid_argument("n = " + std::to_string(spec.n) + " not divisible by gcd(p,q) = " + std::to_string(g));
  }
  const int pp = spec.p / g;
  const int qq = spec.q / g;
  const int per = spec.n / g;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  std::vector<PolyKnot::Loop> loops;
  for (int j = 0; j < g; ++j) {
    // Components satisfy qq*phi - pp*psi = 2*pi*j/g on the torus.
    const double phi0 = qq != 0 ? two_pi * j / (g * qq) : 0.0;
    const double psi0 = qq != 0 ? 0.0 : -two_pi * j / (g * pp);
    PolyKnot::Loop loop;
    loop.reserve(per);
    for (int k = 0; k < per; ++k) {
      const double t = two_pi * k / per;
      const double phi = pp * t + phi0;
      const double psi = qq * t + psi0;
      const double rho = spec.R + spec.r * std::cos(psi);
      loop.push_back({rho * std::cos(phi), rho * std::sin(phi), spec.r * std::sin(psi)});
    }
    loops.push_back(std::move(loop));
  }

  // Rest length is the mean edge length of the generated polygon.
  double len = 0.0;
  for (const auto& loop : loops) {
    for (std::size_t i = 0; i < loop.size(); ++i) len += distance(loop[i], loop[(i + 1) % loop.size()]);
  }
  return PolyKnot(loops, len / spec.n);
}

// ---------------------------------------------------------------------------
// Linking number

struct LinkingNumber {
  int value = 0;
  double residual = 0.0;  ///< distance of the raw half-crossing sum from an integer
  int crossings = 0;      ///< crossings between the two loops in the projection used
};

namespace detail {

struct Rotation {
  double m[3][3];
  Vec3 apply(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
};

inline Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  double w = gauss(rng), x = gauss(rng), y = gauss(rng), z = gauss(rng);
  const double s = 1.0 / std::sqrt(w * w + x * x + y * y + z * z);
  w *= s, x *= s, y *= s, z *= s;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

enum class CrossingKind { none, generic, degenerate };

struct Crossing {
  CrossingKind kind = CrossingKind::none;
  int sign = 0;   ///< right-handed +1
  bool a_over = false;
};

// Crossing of the xy-projections of a0->a1 and b0->b1, viewed from +z.
inline Crossing projected_crossing(const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1) {
  constexpr double eps = 1e-9;
  const double dax = a1.x - a0.x, day = a1.y - a0.y;
  const double dbx = b1.x - b0.x, dby = b1.y - b0.y;
  const double denom = dax * dby - day * dbx;
  const double rx = b0.x - a0.x, ry = b0.y - a0.y;
  const double scale = std::sqrt((dax * dax + day * day) * (dbx * dbx + dby * dby));
  if (std::abs(denom) <= 1e-12 * scale) {
    // Parallel projections: harmless unless collinear and overlapping.
    const double off = rx * day - ry * dax;
    if (std::abs(off) > 1e-12 * scale) return {};
    const double la = dax * dax + day * day;
    const double t0 = (rx * dax + ry * day) / la;
    const double t1 = ((b1.x - a0.x) * dax + (b1.y - a0.y) * day) / la;
    if (std::max(t0, t1) < -eps || std::min(t0, t1) > 1.0 + eps) return {};
    return {CrossingKind::degenerate};
  }
  const double s = (rx * dby - ry * dbx) / denom;
  const double t = (rx * day - ry * dax) / denom;
  if (s < -eps || s > 1.0 + eps || t < -eps || t > 1.0 + eps) return {};
  if (s < eps || s > 1.0 - eps || t < eps || t > 1.0 - eps) return {CrossingKind::degenerate};
  const double za = a0.z + s * (a1.z - a0.z);
  const double zb = b0.z + t * (b1.z - b0.z);
  if (za == zb) return {CrossingKind::degenerate};
  const bool a_over = za > zb;
  // (over x under) . z_hat > 0 is a right-handed crossing.
  const double over_cross_under = a_over ? denom : -denom;
  return {CrossingKind::generic, over_cross_under > 0 ? 1 : -1, a_over};
}

}  // namespace detail

/// Gauss linking number of two disjoint closed loops, from the signed
/// crossings of a generic projection. Non-generic projections are retried
/// under fresh pseudo-random rotations (deterministic, up to 8 retries).
inline LinkingNumber linking_number(std::span<const Vec3> c1, std::span<const Vec3> c2) {
  if (c1.size() < 3 || c2.size() < 3) throw InvalidKnot("loop too small");
  for (std::size_t i = 0; i < c1.size(); ++i) {
    for (std::size_t j = 0; j < c2.size(); ++j) {
      const double d2 = detail::segment_distance2(c1[i], c1[(i + 1) % c1.size()], c2[j], c2[(j + 1) % c2.size()]);
      if (!(d2 > 0.0)) throw InvalidKnot("loops touch: edge " + std::to_string(i) + " and edge " + std::to_string(j));
    }
  }

  std::mt19937_64 rng(0x6b6e6f74ULL);
  for (int attempt = 0; attempt <= 8; ++attempt) {
    const auto rot = detail::random_rotation(rng);
    std::vector<Vec3> a(c1.size()), b(c2.size());
    for (std::size_t i = 0; i < c1.size(); ++i) a[i] = rot.apply(c1[i]);
    for (std::size_t j = 0; j < c2.size(); ++j) b[j] = rot.apply(c2[j]);

    bool generic = true;
    int signed_sum = 0;
    int count = 0;
    for (std::size_t i = 0; i < a.size() && generic; ++i) {
      for (std::size_t j = 0; j < b.size(); ++j) {
        const auto x = detail::projected_crossing(a[i], a[(i + 1) % a.size()], b[j], b[(j + 1) % b.size()]);
        if (x.kind == detail::CrossingKind::degenerate) {
          generic = false;
          break;
        }
        if (x.kind == detail::CrossingKind::generic) {
          signed_sum += x.sign;
          ++count;
        }
      }
    }
    if (!generic) continue;
    const double raw = 0.5 * signed_sum;
    const double rounded = std::round(raw);
    const double residual = std::abs(raw - rounded);
    if (residual >= 0.01) continue;
    return {static_cast<int>(rounded), residual, count};
  }
  throw std::runtime_error("linking_number: no generic projection found");
}

/// Number of self-crossings of one loop in the xy-projection after `rot`;
/// returns -1 when the projection is not generic.
inline int projected_self_crossings(std::span<const Vec3> loop, const detail::Rotation& rot) {
  std::vector<Vec3> a(loop.size());
  for (std::size_t i = 0; i < loop.size(); ++i) a[i] = rot.apply(loop[i]);
  const std::size_t m = a.size();
  int count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 2; j < m; ++j) {
      if (i == 0 && j == m - 1) continue;
      const auto x = detail::projected_crossing(a[i], a[(i + 1) % m], a[j], a[(j + 1) % m]);
      if (x.kind == detail::CrossingKind::degenerate) return -1;
      if (x.kind == detail::CrossingKind::generic) ++count;
    }
  }
  return count;
}

/// Fewest projected self-crossings of a loop over `directions` seeded random
/// projection directions. A cheap diagram-complexity diagnostic.
inline int min_projected_crossings(std::span<const Vec3> loop, int directions = 100, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  int best = std::numeric_limits<int>::max();
  for (int i = 0; i < directions; ++i) {
    const int c = projected_self_crossings(loop, detail::random_rotation(rng));
    if (c >= 0) best = std::min(best, c);
  }
  return best;
}

}  // namespace knotgrad
