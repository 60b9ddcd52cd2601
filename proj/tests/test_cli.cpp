#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "knotgrad/io.hpp"
#include "knotgrad/service.hpp"

using namespace knotgrad;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Result cli(const std::string& args) {
  const std::string command = std::string(KNOTGRAD_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("knotgrad_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenerateTrefoil) {
  const auto r = cli("generate --p 2 --q 3 --n 80 --out " + path("t23.knot"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("vertices: 80"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("components: 1"), std::string::npos) << r.out;
  const auto k = load_knot(path("t23.knot"));
  EXPECT_EQ(k.vertex_count(), 80u);
  EXPECT_EQ(k.component_count(), 1u);
}

TEST_F(Cli, GenerateLinkHasTwoComponents) {
  const auto r = cli("generate --p 4 --q 2 --n 80 --format plain --out " + path("l.knot"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("components: 2"), std::string::npos) << r.out;
  EXPECT_EQ(load_knot(path("l.knot")).component_count(), 2u);
}

TEST_F(Cli, GenerateTooFewVerticesIsInputError) {
  const auto r = cli("generate --p 2 --q 3 --n 5 --out " + path("x.knot"));
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("error"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("x.knot")));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("experiment --name nothing").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST_F(Cli, EvolveExponentOutOfRange) {
  ASSERT_EQ(cli("generate --n 40 --out " + path("t.knot")).code, 0);
  const auto r = cli("evolve --in " + path("t.knot") + " --out " + path("o.knot") + " --d 7");
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST_F(Cli, EvolveToStableWritesKnotAndMonotoneTrace) {
  ASSERT_EQ(cli("generate --p 3 --q 2 --n 40 --out " + path("t32.knot")).code, 0);
  const auto r = cli("evolve --in " + path("t32.knot") + " --out " + path("s.knot") + " --trace " + path("s.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("stopped_reason: stable"), std::string::npos) << r.out;
  EXPECT_EQ(load_knot(path("s.knot")).vertex_count(), 40u);
  const auto trace = trace_from_csv(read_file(path("s.csv")), 40.0);
  ASSERT_GT(trace.size(), 10u);
  EXPECT_EQ(trace.front().step, 0);
}

TEST_F(Cli, EvolveNonConvergenceKeepsPartialOutputs) {
  ASSERT_EQ(cli("generate --p 3 --q 2 --n 40 --out " + path("t.knot")).code, 0);
  const auto r = cli("evolve --in " + path("t.knot") + " --out " + path("o.knot") + " --max-steps 30 --trace " +
                     path("o.csv"));
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("stopped_reason: max_steps"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(path("o.knot")));
  EXPECT_TRUE(fs::exists(path("o.csv")));
}

TEST_F(Cli, EvolvePerturbedIsDeterministic) {
  ASSERT_EQ(cli("generate --p 3 --q 4 --n 48 --out " + path("t.knot")).code, 0);
  const std::string common = "evolve --in " + path("t.knot") + " --perturb 0.1 --seed 7 --max-steps 200 --mode undamped";
  cli(common + " --out " + path("a.knot") + " --trace " + path("a.csv"));
  cli(common + " --out " + path("b.knot") + " --trace " + path("b.csv"));
  EXPECT_EQ(read_file(path("a.knot")), read_file(path("b.knot")));
  EXPECT_EQ(read_file(path("a.csv")), read_file(path("b.csv")));
}

TEST_F(Cli, MeasureRound256Gon) {
  PolyKnot::Loop loop;
  const double radius = 256.0 / (2.0 * 256.0 * std::sin(M_PI / 256.0));
  for (int i = 0; i < 256; ++i) {
    const double t = 2.0 * M_PI * i / 256.0;
    loop.push_back({radius * std::cos(t), radius * std::sin(t), 0.0});
  }
  save_knot(PolyKnot({loop}, 1.0), path("round.knot"), KnotFormat::plain);
  const auto r = cli("measure --in " + path("round.knot"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["thickness"]["ropelength"].get<double>(), 2.0 * M_PI, 0.01 * 2.0 * M_PI);
  EXPECT_TRUE(j["energy"].contains("simon_energy"));
}

TEST_F(Cli, MeasureMalformedFile) {
  write_file(path("bad.knot"), "1 2\nnonsense\n");
  EXPECT_EQ(cli("measure --in " + path("bad.knot")).code, 2);
}

TEST_F(Cli, ExperimentFailureStillWritesManifest) {
  // n = 24 torus34 does not show the trap, so expectations fail (exit 1) but
  // the artifacts are written.
  const auto r = cli("experiment --name torus34 --n 24 --out-dir " + path("exp"));
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("FAIL E_sym/E_pert"), std::string::npos) << r.out;
  const auto m = nlohmann::json::parse(read_file(path("exp/manifest.json")));
  EXPECT_EQ(m["experiment"], "torus34");
  EXPECT_EQ(m["config"]["n"], 24);
  EXPECT_EQ(m["config"]["seed"], 7);
}

TEST_F(Cli, ReplayExportedLog) {
  service::Session s("s1", SimState(generate_torus({3, 2, 24, 2.0, 1.0}), [] {
                       SimParams p;
                       p.force_field.exponent = 6.0;
                       p.dt = 0.2;
                       return p;
                     }()),
                     10);
  s.enqueue(service::cmd::Run{});
  for (int taken = 0; taken < 20;) taken += s.tick();
  s.enqueue(service::cmd::Perturb{0.1, 7});
  s.enqueue(service::cmd::SetMode{Mode::undamped});
  for (int taken = 0; taken < 15;) taken += s.tick();
  write_file(path("log.json"), s.export_log().dump());
  const auto r = cli("replay --log " + path("log.json") + " --out " + path("final.knot"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("steps: 35"), std::string::npos) << r.out;
  EXPECT_EQ(read_file(path("final.knot")), knot_to_json(s.state().knot).dump(1) + "\n");
}

TEST_F(Cli, ServePortInUse) {
  // Hold a port with a first server, then ask the CLI for the same one.
  FILE* first = popen((std::string(KNOTGRAD_CLI) + " serve --port 0 2>&1").c_str(), "r");
  ASSERT_NE(first, nullptr);
  char line[256] = {};
  ASSERT_NE(std::fgets(line, sizeof line, first), nullptr);
  const std::string banner = line;
  const auto colon = banner.rfind(':');
  ASSERT_NE(colon, std::string::npos) << banner;
  const std::string port = banner.substr(colon + 1, banner.find_first_of("\r\n") - colon - 1);
  const auto r = cli("serve --port " + port);
  EXPECT_NE(r.code, 0) << r.out;
  std::system(("pkill -INT -f 'knotgrad serve --port 0'"));
  pclose(first);
}
