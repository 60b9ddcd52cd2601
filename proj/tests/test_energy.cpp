#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "knotgrad/energy.hpp"

using namespace knotgrad;

namespace {

constexpr double pi = std::numbers::pi;

// A random star-shaped loop around the z axis: radii and heights jittered,
// angles strictly increasing, so it is always embedded.
PolyKnot random_loop(std::mt19937_64& rng, int m = 10) {
  std::uniform_real_distribution<double> radius(0.8, 1.2), height(-0.3, 0.3), jitter(-0.3, 0.3);
  PolyKnot::Loop loop;
  for (int i = 0; i < m; ++i) {
    const double t = 2.0 * pi * (i + jitter(rng)) / m;
    const double r = 2.0 * radius(rng);
    loop.push_back({r * std::cos(t), r * std::sin(t), height(rng)});
  }
  return PolyKnot({loop}, 1.2);
}

PolyKnot regular_polygon(int m, double radius) {
  PolyKnot::Loop loop;
  for (int i = 0; i < m; ++i) loop.push_back({radius * std::cos(2 * pi * i / m), radius * std::sin(2 * pi * i / m), 0});
  return PolyKnot({loop}, 2 * radius * std::sin(pi / m));
}

// Central-difference gradient of f at every coordinate.
template <typename F>
std::vector<Vec3> numeric_gradient(const PolyKnot& k, F f, double h = 1e-5) {
  std::vector<Vec3> v(k.vertices().begin(), k.vertices().end());
  std::vector<Vec3> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (double Vec3::*axis : {&Vec3::x, &Vec3::y, &Vec3::z}) {
      const double orig = v[i].*axis;
      v[i].*axis = orig + h;
      const double up = f(v);
      v[i].*axis = orig - h;
      const double down = f(v);
      v[i].*axis = orig;
      g[i].*axis = (up - down) / (2.0 * h);
    }
  }
  return g;
}

double max_abs(const std::vector<Vec3>& f) {
  double m = 0.0;
  for (const auto& v : f) m = std::max(m, norm(v));
  return m;
}

void expect_forces_match(const std::vector<Vec3>& force, const std::vector<Vec3>& grad, double rel) {
  const double scale = max_abs(grad);
  for (std::size_t i = 0; i < force.size(); ++i) {
    EXPECT_LE(norm(force[i] + grad[i]), rel * scale) << "vertex " << i;
  }
}

}  // namespace

TEST(SimonEnergy, UnitSquare) {
  const PolyKnot k({{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}}, 1.0);
  EXPECT_NEAR(simon_energy(k), 4.0 + std::sqrt(2.0), 1e-15);
}

TEST(SimonEnergy, EquilateralTriangle) {
  const PolyKnot k({{{0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2, 0}}}, 1.0);
  EXPECT_NEAR(simon_energy(k), 3.0, 1e-14);
}

TEST(SimonEnergy, RegularPolygonClosedForm) {
  const int n = 80;
  // Radius giving total length 80.
  const double radius = 1.0 / (2.0 * std::sin(pi / n));
  double closed = 0.0;
  for (int k = 1; k < n; ++k) closed += 1.0 / (2.0 * radius * std::sin(pi * k / n));
  closed *= n / 2.0;
  const auto k = regular_polygon(n, radius);
  EXPECT_NEAR(k.total_length(), 80.0, 1e-10);
  EXPECT_NEAR(simon_energy(k), closed, 1e-10 * closed);
}

TEST(SimonEnergy, Homogeneous) {
  std::mt19937_64 rng(3);
  const auto k = random_loop(rng, 30);
  const double e = simon_energy(k);
  for (const double lambda : {0.5, 2.0, 10.0}) {
    std::vector<Vec3> v(k.vertices().begin(), k.vertices().end());
    for (auto& p : v) p *= lambda;
    EXPECT_NEAR(simon_energy(v), e / lambda, 1e-10 * e / lambda);
  }
}

TEST(SimonEnergy, IncludesAllComponents) {
  const PolyKnot::Loop a{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const PolyKnot::Loop b{{0, 0, 5}, {1, 0, 5}, {0, 1, 5}};
  const PolyKnot k({a, b}, 1.0);
  double brute = 0.0;
  const auto v = k.vertices();
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) brute += 1.0 / distance(v[i], v[j]);
  }
  EXPECT_NEAR(simon_energy(k), brute, 1e-14);
}

TEST(SimonEnergy, CoincidentVerticesRejected) {
  const std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {0, 0, 0}};
  EXPECT_THROW(simon_energy(v), DegenerateGeometry);
}

TEST(Potential, ExponentTwoIsSimonEnergy) {
  std::mt19937_64 rng(4);
  const auto k = random_loop(rng, 20);
  ForceField ff;
  ff.exponent = 2.0;
  EXPECT_NEAR(repulsive_potential(k.vertices(), ff), simon_energy(k), 1e-12 * simon_energy(k));
}

TEST(ForceField, ExponentRange) {
  ForceField ff;
  ff.exponent = 7.0;
  EXPECT_THROW(ff.validate(), std::invalid_argument);
  ff.exponent = 1.5;
  EXPECT_THROW(ff.validate(), std::invalid_argument);
  ff.exponent = 6.0;
  EXPECT_NO_THROW(ff.validate());
  ff.spring_constant = 0.0;
  EXPECT_THROW(ff.validate(), std::invalid_argument);
}

TEST(RepulsiveForces, TwoPoints) {
  const std::vector<Vec3> v{{0, 0, 0}, {2, 0, 0}};
  const auto f = repulsive_forces(v, ForceField{});
  EXPECT_NEAR(f[0].x, -0.25, 1e-15);
  EXPECT_NEAR(f[1].x, 0.25, 1e-15);
}

TEST(RepulsiveForces, TriangleRadial) {
  const PolyKnot k({{{1, 0, 0}, {std::cos(2 * pi / 3), std::sin(2 * pi / 3), 0},
                     {std::cos(4 * pi / 3), std::sin(4 * pi / 3), 0}}},
                   1.0);
  const auto f = repulsive_forces(k, ForceField{});
  for (std::size_t i = 0; i < 3; ++i) {
    const Vec3 radial = k.vertices()[i];
    EXPECT_NEAR(norm(cross(f[i], radial)), 0.0, 1e-14);
    EXPECT_GT(dot(f[i], radial), 0.0);
    EXPECT_NEAR(norm(f[i]), norm(f[0]), 1e-14);
  }
}

TEST(RepulsiveForces, NegativeGradientOfPotential) {
  std::mt19937_64 rng(5);
  for (const double d : {2.0, 3.0, 3.5, 6.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto k = random_loop(rng);
      ForceField ff;
      ff.exponent = d;
      const auto grad = numeric_gradient(k, [&](const std::vector<Vec3>& v) { return repulsive_potential(v, ff); });
      expect_forces_match(repulsive_forces(k, ff), grad, 1e-6);
    }
  }
}

TEST(RepulsiveForces, NetForceZero) {
  std::mt19937_64 rng(6);
  const auto k = random_loop(rng, 40);
  for (const double d : {2.0, 3.5, 6.0}) {
    ForceField ff;
    ff.exponent = d;
    const auto f = repulsive_forces(k, ff);
    Vec3 sum;
    double mean = 0.0;
    for (const auto& v : f) {
      sum += v;
      mean += norm(v) / f.size();
    }
    EXPECT_LE(norm(sum), 1e-9 * mean);
  }
}

TEST(RepulsiveForces, CoRotate) {
  std::mt19937_64 rng(7);
  const auto k = random_loop(rng, 20);
  const double c = std::cos(0.7), s = std::sin(0.7);
  auto rot = [&](const Vec3& v) { return Vec3{c * v.x - s * v.y, s * v.x + c * v.y, v.z} + Vec3{3, -1, 2}; };
  std::vector<Vec3> moved;
  for (const auto& v : k.vertices()) moved.push_back(rot(v));
  ForceField ff;
  ff.exponent = 3.5;
  const auto f0 = repulsive_forces(k, ff);
  const auto f1 = repulsive_forces(moved, ff);
  for (std::size_t i = 0; i < f0.size(); ++i) {
    const Vec3 r = rot(f0[i]) - Vec3{3, -1, 2};
    EXPECT_NEAR(distance(r, f1[i]), 0.0, 1e-9 * norm(f0[i]));
  }
  EXPECT_NEAR(simon_energy(moved), simon_energy(k), 1e-9 * simon_energy(k));
}

TEST(SpringForces, AtRestIsZero) {
  const PolyKnot k({{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}}, 1.0);
  for (const auto& f : spring_forces(k, ForceField{})) EXPECT_EQ(norm(f), 0.0);
  EXPECT_EQ(spring_energy(k, ForceField{}), 0.0);
}

TEST(SpringForces, HookeMagnitude) {
  // Equilateral triangle, every edge stretched to rest + 0.1.
  const double side = 1.1;
  const PolyKnot k({{{0, 0, 0}, {side, 0, 0}, {side / 2, side * std::sqrt(3.0) / 2, 0}}}, 1.0);
  ForceField ff;
  ff.spring_constant = 10.0;
  const auto f = spring_forces(k, ff);
  // Each vertex: two pulls of magnitude 1.0 at 60 degrees -> sqrt(3).
  for (const auto& fi : f) EXPECT_NEAR(norm(fi), std::sqrt(3.0), 1e-12);
  EXPECT_GT(f[0].x, 0.0);  // pulled toward the others
  EXPECT_NEAR(spring_energy(k, ff), 3 * 0.5 * 10.0 * 0.01, 1e-12);
}

TEST(SpringForces, CompressionPushesApart) {
  // Isosceles triangle: edges 0-2 and 1-2 at rest, edge 0-1 compressed to 0.9.
  const double h = std::sqrt(1.0 - 0.45 * 0.45);
  const std::vector<Vec3> v{{0, 0, 0}, {0.9, 0, 0}, {0.45, h, 0}};
  const std::vector<std::size_t> off{0, 3};
  ForceField ff;
  ff.spring_constant = 10.0;
  const auto f = spring_forces(v, off, 1.0, ff);
  EXPECT_NEAR(f[0].x, -1.0, 1e-12);
  EXPECT_NEAR(f[1].x, 1.0, 1e-12);
  EXPECT_NEAR(norm(f[2]), 0.0, 1e-12);
}

TEST(SpringForces, NegativeGradientOfEnergy) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto k = random_loop(rng);
    ForceField ff;
    const auto grad = numeric_gradient(
        k, [&](const std::vector<Vec3>& v) { return spring_energy(v, k.offsets(), k.rest_edge_length(), ff); });
    expect_forces_match(spring_forces(k, ff), grad, 1e-6);
  }
}

TEST(TotalForces, NegativeGradientOfTotalEnergy) {
  std::mt19937_64 rng(9);
  for (const double d : {2.0, 3.5, 6.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto k = random_loop(rng, 12);
      ForceField ff;
      ff.exponent = d;
      const auto grad = numeric_gradient(k, [&](const std::vector<Vec3>& v) {
        return repulsive_potential(v, ff) + spring_energy(v, k.offsets(), k.rest_edge_length(), ff);
      });
      expect_forces_match(total_forces(k, ff), grad, 1e-6);
    }
  }
}

TEST(ConstrainedForces, SkipEdgeNeighbours) {
  std::mt19937_64 rng(10);
  const auto k = random_loop(rng, 12);
  ForceField ff;
  ff.exponent = 3.5;
  const auto v = k.vertices();
  const std::size_t m = v.size();
  // Oracle: potential over all pairs except consecutive ones.
  auto potential = [&](const std::vector<Vec3>& x) {
    double e = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        if (j == i + 1 || (i == 0 && j == m - 1)) continue;
        e += std::pow(distance(x[i], x[j]), 1.0 - ff.exponent) / (ff.exponent - 1.0);
      }
    }
    return e;
  };
  expect_forces_match(constrained_repulsive_forces(k, ff), numeric_gradient(k, potential), 1e-6);
}

TEST(EnergyReport, Fields) {
  std::mt19937_64 rng(11);
  const auto k = random_loop(rng, 16);
  ForceField ff;
  ff.exponent = 6.0;
  const auto r = energy_report(k, ff);
  EXPECT_EQ(r.simon_energy, simon_energy(k));
  EXPECT_EQ(r.potential_energy_d, repulsive_potential(k.vertices(), ff));
  EXPECT_EQ(r.spring_energy, spring_energy(k, ff));
  EXPECT_EQ(r.min_clearance, k.min_clearance());
}

TEST(Performance, EightyVertexEvaluationUnderOneMillisecond) {
  std::mt19937_64 rng(12);
  const auto k = random_loop(rng, 80);
  ForceField ff;
  ff.exponent = 3.5;
  const int reps = 200;
  const auto t0 = std::chrono::steady_clock::now();
  double sink = 0.0;
  for (int i = 0; i < reps; ++i) sink += total_forces(k, ff)[0].x + simon_energy(k);
  const double per = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
  EXPECT_TRUE(std::isfinite(sink));
  EXPECT_LT(per, 1e-3);
}

TEST(Determinism, RepeatedEvaluationBitIdentical) {
  std::mt19937_64 rng(13);
  const auto k = random_loop(rng, 40);
  ForceField ff;
  ff.exponent = 3.5;
  EXPECT_EQ(total_forces(k, ff), total_forces(k, ff));
  EXPECT_EQ(simon_energy(k), simon_energy(k));
}
