// Acceptance gate: one PASS/FAIL line per criterion A1-A8, details beneath.
// Exit status is nonzero when any criterion fails.

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "knotgrad/experiments.hpp"

using namespace knotgrad;

namespace {

// Tolerances.
constexpr double trefoil_ratio_lo = 1.015, trefoil_ratio_hi = 1.055;
constexpr double descent_ratio_lo = 0.995, descent_ratio_hi = 1.005;
constexpr double min_oscillation_rise = 1e-4;
constexpr double link_ratio_lo = 1.045, link_ratio_hi = 1.105;
constexpr double link_equiv_lo = 0.99, link_equiv_hi = 1.01;
constexpr double erl6_ref = 32.68, erl35_ref = 40.45, erl_rel_tol = 0.10;
constexpr double trap_ratio_lo = 1.002, trap_ratio_hi = 1.02;
constexpr double force_fd_rel_tol = 1e-6;
constexpr double homogeneity_tol = 1e-10;
constexpr double scale_invariance_tol = 1e-9;
constexpr double round_unknot_rel_tol = 0.01;
constexpr int fd_configs = 20;
// Two minima are ordered only if their energies differ by more than the
// convergence noise: 100x the relative stability tolerance.
constexpr double ordering_rel_margin = 100 * 1e-7;
constexpr double trefoil_runtime_budget_s = 300.0;

struct Criterion {
  std::string id;
  std::string title;
  bool passed = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    passed = passed && ok;
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string num(double v) { return format_real(v, 8); }

std::string in_range(const std::string& name, double v, double lo, double hi) {
  return name + " = " + num(v) + " in [" + num(lo) + ", " + num(hi) + "]";
}

void check_range(Criterion& c, const std::string& name, double v, double lo, double hi) {
  c.check(v >= lo && v <= hi, in_range(name, v, lo, hi));
}

void check_expectations(Criterion& c, const ExperimentResult& r, const std::string& suffix) {
  for (const auto& e : r.expectations) {
    if (e.name.size() >= suffix.size() && e.name.compare(e.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      c.check(e.passed, r.name + ": " + e.name);
    }
  }
}

// Fourth-order central difference of f at every coordinate.
template <typename F>
std::vector<Vec3> numeric_gradient(std::vector<Vec3> v, F f, double h = 1e-4) {
  std::vector<Vec3> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (double Vec3::*axis : {&Vec3::x, &Vec3::y, &Vec3::z}) {
      const double orig = v[i].*axis;
      auto at = [&](double dx) {
        v[i].*axis = orig + dx;
        return f(v);
      };
      const double d = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12.0 * h);
      v[i].*axis = orig;
      g[i].*axis = d;
    }
  }
  return g;
}

double force_mismatch(const std::vector<Vec3>& force, const std::vector<Vec3>& grad) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < force.size(); ++i) {
    diff = std::max(diff, norm(force[i] + grad[i]));
    scale = std::max(scale, norm(force[i]));
  }
  return diff / scale;
}

PolyKnot random_loop(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> radius(0.8, 1.2), height(-0.3, 0.3), jitter(-0.3, 0.3);
  PolyKnot::Loop loop;
  for (int i = 0; i < m; ++i) {
    const double t = 2.0 * std::numbers::pi * (i + jitter(rng)) / m;
    const double r = 2.0 * radius(rng);
    loop.push_back({r * std::cos(t), r * std::sin(t), height(rng)});
  }
  return PolyKnot({loop}, 1.2);
}

PolyKnot regular_polygon(int m) {
  const double radius = 1.0 / (2.0 * std::sin(std::numbers::pi / m));
  PolyKnot::Loop loop;
  for (int i = 0; i < m; ++i) {
    const double t = 2.0 * std::numbers::pi * i / m;
    loop.push_back({radius * std::cos(t), radius * std::sin(t), 0.0});
  }
  return PolyKnot({loop}, 1.0);
}

bool traces_identical(const EnergyTrace& a, const EnergyTrace& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step || a[i].simon_energy != b[i].simon_energy || a[i].min_clearance != b[i].min_clearance) {
      return false;
    }
  }
  return true;
}

bool clearance_positive(const ExperimentResult& r) {
  for (const auto& nr : r.runs) {
    for (const auto& rec : nr.run.trace) {
      if (!(rec.min_clearance > 0.0)) return false;
    }
  }
  return true;
}

void print(const Criterion& c) {
  std::cout << c.id << ' ' << (c.passed ? "PASS" : "FAIL") << "  " << c.title << '\n';
  for (const auto& d : c.details) std::cout << "    " << d << '\n';
  std::cout.flush();
}

}  // namespace

int main() {
  std::vector<Criterion> results;
  auto report = [&](Criterion c) {
    print(c);
    results.push_back(std::move(c));
  };

  const ExperimentConfig base;
  const auto trefoil = run_trefoil_experiment(base);
  {
    Criterion c{"A1", "trefoil bistability: E_32/E_23 at n = 80"};
    check_range(c, "E_32/E_23", trefoil.ratio("E_32/E_23"), trefoil_ratio_lo, trefoil_ratio_hi);
    c.check(trefoil.expectation("23.converged").passed && trefoil.expectation("32.converged").passed,
            "both damped runs stabilized");
    c.check(trefoil.runtime_seconds < trefoil_runtime_budget_s,
            "runtime " + num(trefoil.runtime_seconds) + " s < " + num(trefoil_runtime_budget_s) + " s");
    report(std::move(c));
  }
  {
    Criterion c{"A2", "trefoil descent: undamped escape from the (3,2) minimum"};
    check_range(c, "E_32u/E_23", trefoil.ratio("E_32u/E_23"), descent_ratio_lo, descent_ratio_hi);
    const double rise = trefoil.ratio("undamped_max_rise");
    c.check(rise >= min_oscillation_rise, "undamped trace rise " + num(rise) + " >= " + num(min_oscillation_rise));
    report(std::move(c));
  }

  const auto link = run_torus_link_experiment(base);
  {
    Criterion c{"A3", "(4,2) link descends to the (2,4) form with linking number 2"};
    check_range(c, "E_42/E_42u", link.ratio("E_42/E_42u"), link_ratio_lo, link_ratio_hi);
    check_range(c, "E_42u/E_24", link.ratio("E_42u/E_24"), link_equiv_lo, link_equiv_hi);
    c.check(std::abs(link.ratio("linking_42")) == 2.0 && std::abs(link.ratio("linking_24")) == 2.0,
            "|linking| = 2 (" + num(link.ratio("linking_42")) + ", " + num(link.ratio("linking_24")) + ")");
    check_expectations(c, link, "linking_constant");
    report(std::move(c));
  }

  const auto erl = run_erl_experiment(base);
  {
    Criterion c{"A4", "electrical ropelength of the trefoil at d = 6 and d = 3.5"};
    check_range(c, "ERL(6)", erl.ratio("ERL(6)"), erl6_ref * (1 - erl_rel_tol), erl6_ref * (1 + erl_rel_tol));
    check_range(c, "ERL(3.5)", erl.ratio("ERL(3.5)"), erl35_ref * (1 - erl_rel_tol), erl35_ref * (1 + erl_rel_tol));
    report(std::move(c));
  }
  {
    Criterion c{"A5", "ERL strictly decreasing over d = 2, 3.5, 6"};
    const double e2 = erl.ratio("ERL(2)"), e35 = erl.ratio("ERL(3.5)"), e6 = erl.ratio("ERL(6)");
    c.check(e2 > e35, "ERL(2) = " + num(e2) + " > ERL(3.5) = " + num(e35) +
                          (erl.ratio("jammed(d=2)") == 1.0 ? " (d = 2 descent ended in edge contact)" : ""));
    c.check(e35 > e6, "ERL(3.5) = " + num(e35) + " > ERL(6) = " + num(e6));
    report(std::move(c));
  }

  const auto trap = run_34_experiment();
  {
    Criterion c{"A6", "(3,4) symmetric trap and ERL ordering"};
    check_range(c, "E_sym/E_pert", trap.ratio("E_sym/E_pert"), trap_ratio_lo, trap_ratio_hi);
    c.check(trap.ratio("ERL_pert") > trap.ratio("ERL_sym"),
            "ERL_pert = " + num(trap.ratio("ERL_pert")) + " > ERL_sym = " + num(trap.ratio("ERL_sym")));
    report(std::move(c));
  }

  {
    Criterion c{"A7", "property suites"};
    std::mt19937_64 rng(20240607);
    for (const double d : {2.0, 3.5, 6.0}) {
      ForceField ff;
      ff.exponent = d;
      double worst = 0.0;
      for (int i = 0; i < fd_configs; ++i) {
        const auto k = random_loop(rng, 20);
        const auto grad = numeric_gradient(std::vector<Vec3>(k.vertices().begin(), k.vertices().end()),
                                           [&](const std::vector<Vec3>& v) {
                                             return repulsive_potential(v, ff) +
                                                    spring_energy(v, k.offsets(), k.rest_edge_length(), ff);
                                           });
        worst = std::max(worst, force_mismatch(total_forces(k, ff), grad));
      }
      c.check(worst <= force_fd_rel_tol, "force = -grad energy at d = " + num(d) + ": worst relative error " +
                                             num(worst) + " over " + std::to_string(fd_configs) + " configs");
    }
    {
      const auto k = generate_torus({2, 3, 80, 2.0, 1.0});
      double worst = 0.0;
      for (const double lambda : {0.5, 3.0, 17.0}) {
        const double scaled = simon_energy(rescale_to_length(k, lambda * k.total_length()));
        worst = std::max(worst, std::abs(scaled * lambda / simon_energy(k) - 1.0));
      }
      c.check(worst <= homogeneity_tol, "E(lambda k) = E(k)/lambda, worst " + num(worst));
      const auto settled = trefoil.run("23").snapshot("stable").state.knot;
      const double rl = thickness(settled).ropelength;
      double rl_worst = 0.0;
      for (const double lambda : {0.01, 2.5, 1000.0}) {
        rl_worst = std::max(rl_worst, std::abs(thickness(rescale_to_length(settled, lambda * settled.total_length())).ropelength / rl - 1.0));
      }
      c.check(rl_worst <= scale_invariance_tol, "ropelength scale invariance, worst " + num(rl_worst));
    }
    {
      const double rl = thickness(regular_polygon(256)).ropelength;
      const double two_pi = 2.0 * std::numbers::pi;
      check_range(c, "round 256-gon ropelength", rl, two_pi * (1 - round_unknot_rel_tol), two_pi * (1 + round_unknot_rel_tol));
    }
    for (const auto* r : {&trefoil, &link, &trap}) {
      check_expectations(c, *r, "no_crossing");
      c.check(clearance_positive(*r), r->name + ": min_clearance > 0 at every record");
    }
    c.check(clearance_positive(erl), erl.name + ": min_clearance > 0 at every record");
    {
      ExperimentConfig small;
      small.n = 40;
      const Schedule s{{phase::Evolve{Mode::damped, 600, {}, false}, phase::Perturb{0.1, 7},
                        phase::Evolve{Mode::undamped, 600, {small.undamped_dt, {}, {}, {}}, false}}};
      const auto a = run_schedule(SimState(generate_torus(small.spec(3, 2)), small.sim_params()), s);
      const auto b = run_schedule(SimState(generate_torus(small.spec(3, 2)), small.sim_params()), s);
      c.check(traces_identical(a.trace, b.trace) && knot_to_plain(a.state.knot) == knot_to_plain(b.state.knot),
              "identical seeds give bit-identical traces and knots");
    }
    report(std::move(c));
  }

  {
    Criterion c{"A8", "orderings hold at half resolution"};
    ExperimentConfig half = base;
    half.n = base.n / 2;
    const auto t = run_trefoil_experiment(half);
    const double e32 = t.ratio("E_32"), e23 = t.ratio("E_23");
    c.check(e32 > e23 * (1 + ordering_rel_margin), "n = " + std::to_string(half.n) + ": E_32 = " + num(e32) +
                                                       " > E_23 = " + num(e23) + " (E_32/E_23 - 1 = " +
                                                       num(e32 / e23 - 1) + ", margin " + num(ordering_rel_margin) + ")");
    ExperimentConfig half34 = ExperimentConfig::defaults_for("torus34");
    half34.n /= 2;
    const auto p = run_34_experiment(half34);
    const double es = p.ratio("E_sym"), ep = p.ratio("E_pert");
    c.check(es > ep * (1 + ordering_rel_margin), "n = " + std::to_string(half34.n) + ": E_sym = " + num(es) +
                                                     " > E_pert = " + num(ep) + " (E_sym/E_pert - 1 = " +
                                                     num(es / ep - 1) + ", margin " + num(ordering_rel_margin) + ")");
    report(std::move(c));
  }

  int failed = 0;
  for (const auto& c : results) failed += c.passed ? 0 : 1;
  std::cout << "\nsummary:";
  for (const auto& c : results) std::cout << ' ' << c.id << '=' << (c.passed ? "PASS" : "FAIL");
  std::cout << "\n" << (results.size() - failed) << '/' << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
