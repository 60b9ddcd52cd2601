// knotgrad command-line driver: generate, evolve, measure, experiment, serve, replay.
// Exit codes: 0 success, 1 expectation/convergence failure, 2 usage/input error.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "knotgrad/experiments.hpp"
#include "knotgrad/io.hpp"
#include "knotgrad/server.hpp"
#include "knotgrad/service.hpp"

using namespace knotgrad;
namespace fs = std::filesystem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failed = 1;
constexpr int exit_usage = 2;
constexpr std::uint64_t default_seed = 7;

struct GenerateArgs {
  TorusKnotSpec spec;
  std::string out;
  std::string format = "structured";
};

struct EvolveArgs {
  std::string in, out, trace;
  std::string mode = "damped";
  double d = 6.0;
  long max_steps = 400000;
  double dt = 0.2;
  std::uint64_t seed = default_seed;
  double perturb = 0.0;
};

struct MeasureArgs {
  std::string in;
  int skip = 2;
  double d = 6.0;
};

struct ExperimentArgs {
  std::string name;
  std::optional<int> n;
  std::string out_dir;
  std::uint64_t seed = default_seed;
};

struct ServeArgs {
  unsigned short port = 8765;
  std::string bind = "127.0.0.1";
};

struct ReplayArgs {
  std::string log, out;
};

void print_line(const std::string& key, const std::string& value) { std::cout << key << ": " << value << '\n'; }
void print_line(const std::string& key, double value) { print_line(key, format_real(value)); }

int run_generate(const GenerateArgs& a) {
  const auto k = generate_torus(a.spec);
  save_knot(k, a.out, parse_knot_format(a.format),
            {{"p", a.spec.p}, {"q", a.spec.q}, {"n", a.spec.n}, {"R", a.spec.R}, {"r", a.spec.r}});
  print_line("vertices", std::to_string(k.vertex_count()));
  print_line("components", std::to_string(k.component_count()));
  print_line("total_length", k.total_length());
  print_line("simon_energy", simon_energy(k));
  return exit_ok;
}

int run_evolve(const EvolveArgs& a) {
  SimParams params;
  params.force_field.exponent = a.d;
  params.dt = a.dt;
  params.mode = parse_mode(a.mode);
  params.rng_seed = a.seed;
  params.validate();
  SimState s(load_knot(a.in), params);
  s = perturb(std::move(s), a.perturb, a.seed);
  const auto res = evolve_until_stable(std::move(s), a.max_steps);
  save_knot(res.state.knot, a.out);
  if (!a.trace.empty()) write_file(a.trace, trace_to_csv(res.trace));
  const auto& k = res.state.knot;
  print_line("steps", std::to_string(res.state.step_index));
  print_line("simon_energy", simon_energy(k));
  print_line("gauged_simon_energy", gauged(simon_energy(k), k.total_length(), gauge_length(k)));
  print_line("min_clearance", k.min_clearance());
  print_line("stopped_reason", std::string(to_string(res.reason)));
  return res.reason == StopReason::stable ? exit_ok : exit_failed;
}

int run_measure(const MeasureArgs& a) {
  const auto k = load_knot(a.in);
  ForceField ff;
  ff.exponent = a.d;
  ff.validate();
  const nlohmann::json out = {{"vertices", k.vertex_count()},
                              {"components", k.component_count()},
                              {"energy", report_to_json(energy_report(k, ff))},
                              {"thickness", report_to_json(thickness(k, a.skip))}};
  std::cout << out.dump(2) << '\n';
  return exit_ok;
}

int run_experiment(const ExperimentArgs& a) {
  auto c = ExperimentConfig::defaults_for(a.name);
  if (a.n) c.n = *a.n;
  c.seed = a.seed;
  ExperimentResult r;
  if (a.name == "trefoil") r = run_trefoil_experiment(c);
  else if (a.name == "link42") r = run_torus_link_experiment(c);
  else if (a.name == "torus34") r = run_34_experiment(c);
  else r = run_erl_experiment(c);
  const fs::path dir = a.out_dir.empty() ? fs::path("out") / a.name : fs::path(a.out_dir);
  write_experiment_artifacts(r, dir);
  for (const auto& [k, v] : r.ratios) print_line(k, v);
  for (const auto& e : r.expectations) {
    std::cout << (e.passed ? "PASS " : "FAIL ") << e.name << " = " << format_real(e.value) << '\n';
  }
  print_line("runtime_seconds", format_real(r.runtime_seconds, 4));
  print_line("manifest", (dir / "manifest.json").string());
  return r.passed() ? exit_ok : exit_failed;
}

int run_serve(const ServeArgs& a) {
  service::SessionManager manager;
  service::Server server(manager, a.bind, a.port);
  server.stop_on_signals();
  std::cout << "listening on ws://" << a.bind << ':' << server.port() << std::endl;
  server.run();
  return exit_ok;
}

int run_replay(const ReplayArgs& a) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(a.log));
  } catch (const nlohmann::json::exception& e) {
    throw FileFormatError(std::string("command log: ") + e.what());
  }
  if (j.value("protocol", 0) != service::protocol_version) throw FileFormatError("command log: unsupported protocol");
  SimState initial(knot_from_json(j.at("initial").at("knot")), params_from_json(j.at("initial").at("params")));
  const auto log = service::log_from_json(j.at("commands"));
  const auto s = service::replay(std::move(initial), log, j.at("final_step").get<long>());
  if (!a.out.empty()) save_knot(s.knot, a.out);
  print_line("steps", std::to_string(s.step_index));
  print_line("commands", std::to_string(log.size()));
  print_line("simon_energy", simon_energy(s.knot));
  print_line("min_clearance", s.knot.min_clearance());
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knotgrad: self-repelling polygonal knots"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a (p,q) torus knot or link");
  g->add_option("--p", gen.spec.p, "longitudinal winding")->default_val(2);
  g->add_option("--q", gen.spec.q, "meridional winding")->default_val(3);
  g->add_option("--n", gen.spec.n, "vertex count")->default_val(80);
  g->add_option("--R", gen.spec.R, "major radius")->default_val(2.0);
  g->add_option("--r", gen.spec.r, "minor radius")->default_val(1.0);
  g->add_option("--out", gen.out, "output knot file")->required();
  g->add_option("--format", gen.format, "file format")->check(CLI::IsMember({"structured", "plain"}))->default_val("structured");

  EvolveArgs ev;
  auto* e = app.add_subcommand("evolve", "evolve a knot file until stable");
  e->add_option("--in", ev.in, "input knot file")->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "output knot file")->required();
  e->add_option("--mode", ev.mode)->check(CLI::IsMember({"damped", "undamped"}))->default_val("damped");
  e->add_option("--d", ev.d, "force exponent")->check(CLI::Range(2.0, 6.0))->default_val(6.0);
  e->add_option("--max-steps", ev.max_steps)->check(CLI::PositiveNumber)->default_val(400000);
  e->add_option("--dt", ev.dt)->check(CLI::PositiveNumber)->default_val(0.2);
  e->add_option("--seed", ev.seed)->default_val(default_seed);
  e->add_option("--perturb", ev.perturb, "seeded kick before evolving")->check(CLI::NonNegativeNumber)->default_val(0.0);
  e->add_option("--trace", ev.trace, "energy trace CSV");

  MeasureArgs me;
  auto* m = app.add_subcommand("measure", "print energy and thickness reports");
  m->add_option("--in", me.in, "knot file")->required()->check(CLI::ExistingFile);
  m->add_option("--skip", me.skip, "edge-pair skip for self-distance")->check(CLI::NonNegativeNumber)->default_val(2);
  m->add_option("--d", me.d, "exponent for the potential")->check(CLI::Range(2.0, 6.0))->default_val(6.0);

  ExperimentArgs ex;
  auto* x = app.add_subcommand("experiment", "run a scripted experiment and write its artifacts");
  x->add_option("--name", ex.name)->required()->check(CLI::IsMember({"trefoil", "link42", "torus34", "erl-sweep"}));
  x->add_option("--n", ex.n, "vertex count (experiment default if absent)");
  x->add_option("--out-dir", ex.out_dir, "artifact directory (default out/<name>)");
  x->add_option("--seed", ex.seed)->default_val(default_seed);

  ServeArgs sv;
  auto* s = app.add_subcommand("serve", "start the websocket steering service");
  s->add_option("--port", sv.port)->default_val(8765);
  s->add_option("--bind", sv.bind)->default_val("127.0.0.1");

  ReplayArgs rp;
  auto* r = app.add_subcommand("replay", "replay an exported session command log");
  r->add_option("--log", rp.log, "exported log (JSON)")->required()->check(CLI::ExistingFile);
  r->add_option("--out", rp.out, "final knot file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (*g) return run_generate(gen);
    if (*e) return run_evolve(ev);
    if (*m) return run_measure(me);
    if (*x) return run_experiment(ex);
    if (*s) return run_serve(sv);
    if (*r) return run_replay(rp);
  } catch (const service::ServiceError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_usage;
  } catch (const FileFormatError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_usage;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_usage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_failed;
  }
  return exit_usage;
}
