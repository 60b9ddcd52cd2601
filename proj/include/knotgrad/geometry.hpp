#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace knotgrad {

/// Raised when a geometric primitive is handed degenerate input
/// (coincident points, zero-length segments, non-finite coordinates).
class DegenerateGeometry : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend constexpr Vec3 operator/(Vec3 a, double s) { return a *= (1.0 / s); }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

constexpr double norm2(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(norm2(a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline bool is_finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// A non-degenerate straight segment a -> b.
class Segment {
 public:
  Segment(const Vec3& a, const Vec3& b) : a_(a), b_(b) {
    if (!is_finite(a) || !is_finite(b)) throw DegenerateGeometry("segment has non-finite endpoint");
    if (norm2(b - a) <= 0.0) throw DegenerateGeometry("zero-length segment");
  }

  const Vec3& a() const { return a_; }
  const Vec3& b() const { return b_; }
  Vec3 direction() const { return b_ - a_; }
  double length() const { return norm(b_ - a_); }
  Vec3 at(double s) const { return a_ + (b_ - a_) * s; }

 private:
  Vec3 a_;
  Vec3 b_;
};

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline double point_segment_distance2(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double t = clamp01(dot(p - a, d) / norm2(d));
  return norm2(p - (a + d * t));
}

struct ClosestParams {
  double s = 0.0;
  double t = 0.0;
  double distance2 = 0.0;
};

// Parameters of a closest pair on p1->q1 and p2->q2 (clamped line-line
// solve; the parallel case picks the best endpoint projection).
inline ClosestParams segment_closest(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = dot(d1, d1);
  const double e = dot(d2, d2);
  const double b = dot(d1, d2);
  const double c = dot(d1, r);
  const double f = dot(d2, r);
  const double denom = a * e - b * b;

  if (denom <= 1e-12 * a * e) {
    ClosestParams best{0.0, 0.0, std::numeric_limits<double>::infinity()};
    auto consider = [&](double s, double t) {
      const double d2v = norm2((p1 + d1 * s) - (p2 + d2 * t));
      if (d2v < best.distance2) best = {s, t, d2v};
    };
    consider(0.0, clamp01(f / e));
    consider(1.0, clamp01((f + b) / e));
    consider(clamp01(-c / a), 0.0);
    consider(clamp01((b - c) / a), 1.0);
    return best;
  }

  double s = clamp01((b * f - c * e) / denom);
  double t = (b * s + f) / e;
  if (t < 0.0) {
    t = 0.0;
    s = clamp01(-c / a);
  } else if (t > 1.0) {
    t = 1.0;
    s = clamp01((b - c) / a);
  }
  return {s, t, norm2((p1 + d1 * s) - (p2 + d2 * t))};
}

// Raw-endpoint version shared by the Segment overload and the hot loops in
// energy/dynamics, which already know their edges are non-degenerate.
inline double segment_distance2(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = dot(d1, d1);
  const double e = dot(d2, d2);
  const double b = dot(d1, d2);
  const double c = dot(d1, r);
  const double f = dot(d2, r);
  const double denom = a * e - b * b;

  if (denom <= 1e-12 * a * e) {
    // Parallel or nearly so: the minimum is attained at an endpoint of one of the two.
    return std::min({point_segment_distance2(p1, p2, q2), point_segment_distance2(q1, p2, q2),
                     point_segment_distance2(p2, p1, q1), point_segment_distance2(q2, p1, q1)});
  }

  double s = clamp01((b * f - c * e) / denom);
  double t = (b * s + f) / e;
  if (t < 0.0) {
    t = 0.0;
    s = clamp01(-c / a);
  } else if (t > 1.0) {
    t = 1.0;
    s = clamp01((b - c) / a);
  }
  return norm2((p1 + d1 * s) - (p2 + d2 * t));
}

}  // namespace detail

/// Minimum Euclidean distance between any point of s1 and any point of s2.
inline double segment_min_distance(const Segment& s1, const Segment& s2) {
  return std::sqrt(detail::segment_distance2(s1.a(), s1.b(), s2.a(), s2.b()));
}

/// Radius of the circle through a, b, c. Returns +infinity when the three
/// points are collinear (area below 1e-12 of the squared longest side).
inline double circumradius(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double ab = distance(a, b);
  const double bc = distance(b, c);
  const double ca = distance(c, a);
  if (ab <= 0.0 || bc <= 0.0 || ca <= 0.0) throw DegenerateGeometry("circumradius of coincident points");
  const double twice_area = norm(cross(b - a, c - a));
  const double longest = std::max({ab, bc, ca});
  if (0.5 * twice_area < 1e-12 * longest * longest) return std::numeric_limits<double>::infinity();
  return ab * bc * ca / (2.0 * twice_area);
}

}  // namespace knotgrad
