#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "wormhole/cli.hpp"
#include "wormhole/datasets.hpp"
#include "wormhole/io.hpp"

using namespace wormhole;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wormhole_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

json small_evolve(const fs::path& out, const std::string& flow = "psi") {
  return json{{"command", "evolve"},
              {"model", {{"ell", 1}, {"n", 1}}},
              {"grid", {{"X", 20.0}, {"N", 129}}},
              {"output_dir", out.string()},
              {"evolve", {{"flow", flow}, {"T", 1.0}, {"cadence", 0.5}, {"snapshot_times", {0.5}}}}};
}

}  // namespace

TEST(Config, ParsesBlocks) {
  const json j = {{"command", "certify"},
                  {"grid", {{"X", 30.0}, {"N", 513}}},
                  {"seed", 7},
                  {"certify", {{"d", 7}, {"R", {1.0, 2.0}}, {"count", 2}, {"T", 10.0}}}};
  const cli::RunConfig c = cli::parse_config(j);
  EXPECT_EQ(c.command, cli::Command::Certify);
  EXPECT_EQ(c.dim, 7);
  EXPECT_EQ(c.radii.size(), 2u);
  EXPECT_EQ(c.count, 2);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_DOUBLE_EQ(c.grid_r_max, 30.0);
  EXPECT_EQ(c.grid_n, 513u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(cli::parse_config(json{{"command", "harmonic"}, {"gird", json::object()}}), Error);
  EXPECT_THROW(cli::parse_config(json{{"command", "harmonic"}, {"model", {{"l", 1}}}}), Error);
  EXPECT_THROW(cli::parse_config(json{{"command", "evolve"}, {"evolve", {{"flow", "nope"}}}}), Error);
  EXPECT_THROW(cli::parse_config(json{{"command", "launch"}}), Error);
  EXPECT_THROW(cli::parse_config(json{{"model", {{"ell", 1}}}}), Error);
  EXPECT_THROW(cli::parse_config(json{{"command", "harmonic"}, {"model", {{"ell", "one"}}}}), Error);
}

TEST(Config, EvenGridIsAValidationErrorWithoutArtifacts) {
  const fs::path out = scratch("even");
  json j = small_evolve(out);
  j["grid"]["N"] = 128;
  const cli::RunOutcome o = cli::run_json(j);
  EXPECT_EQ(o.exit_code, 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Provenance, Sha256KnownVectors) {
  EXPECT_EQ(cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Run, EvolveIsDeterministic) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(cli::run_json(small_evolve(a)).exit_code, 0);
  ASSERT_EQ(cli::run_json(small_evolve(b)).exit_code, 0);
  EXPECT_EQ(slurp(a / "energy.csv"), slurp(b / "energy.csv"));
  EXPECT_EQ(slurp(a / "snapshot_1.csv"), slurp(b / "snapshot_1.csv"));
  const json ma = io::read_json(a / "manifest.json"), mb = io::read_json(b / "manifest.json");
  EXPECT_NE(ma.at("config_hash"), mb.at("config_hash"));  // output_dir differs
  EXPECT_EQ(ma.at("energy_drift"), mb.at("energy_drift"));
  const FieldState s = io::read_state(a / "snapshot_1.json");
  EXPECT_NEAR(s.time, 1.0, 1e-12);
}

TEST(Run, HarmonicManifestHasHeadlineKeys) {
  const fs::path out = scratch("harm");
  const json j = {{"command", "harmonic"}, {"grid", {{"X", 20.0}, {"N", 257}}}, {"output_dir", out.string()}};
  ASSERT_EQ(cli::run_json(j).exit_code, 0);
  const json m = io::read_json(out / "manifest.json");
  EXPECT_NEAR(m.at("b_star").get<double>(), 1.79714929312374, 1e-10);
  EXPECT_GT(m.at("alpha").get<double>(), 0.0);
  EXPECT_TRUE(m.contains("config_hash"));
  EXPECT_TRUE(fs::exists(out / "harmonic.csv"));
}

TEST(Sweep, EmptyDuplicateAndAggregate) {
  const fs::path agg = scratch("agg") / "aggregate.csv";
  const cli::SweepReport empty = cli::sweep({}, agg);
  EXPECT_EQ(empty.exit_code, 0);
  EXPECT_EQ(slurp(agg), "index,command,output_dir,exit_code,config_hash,headline\n");

  const fs::path d = scratch("dup");
  EXPECT_THROW(cli::sweep({small_evolve(d), small_evolve(d)}, agg), Error);
  EXPECT_FALSE(fs::exists(d));

  const fs::path a = scratch("sw_a"), b = scratch("sw_b");
  json bad = small_evolve(b);
  bad["evolve"]["cfl"] = 5.0;
  const cli::SweepReport rep = cli::sweep({small_evolve(a), bad}, agg, 2);
  EXPECT_EQ(rep.exit_code, 3);
  EXPECT_EQ(rep.runs[0].exit_code, 0);
  EXPECT_NE(rep.runs[1].exit_code, 0);
  std::ifstream is(agg);
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(StateIo, RoundTripCsvAndBinary) {
  std::mt19937_64 rng(3);
  auto g = grid_for_radius(15.0, 65);
  FieldState s = data::random_state(g, Form::U, ModelParams::make(2, 1), rng);
  s.time = 0.75;
  for (auto enc : {io::Encoding::Csv, io::Encoding::Binary}) {
    const fs::path stem = scratch(enc == io::Encoding::Csv ? "state_csv" : "state_bin") / "s";
    io::write_state(stem, s, enc);
    const FieldState r = io::read_state(fs::path(stem).replace_extension(".json"));
    EXPECT_EQ(r.form, s.form);
    EXPECT_EQ(r.params.ell, 2);
    EXPECT_EQ(r.time, s.time);
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(r.f[i], s.f[i]);
      EXPECT_EQ(r.g[i], s.g[i]);
    }
  }
}

TEST(StateIo, MismatchedGridIsRejected) {
  const fs::path stem = scratch("state_bad") / "s";
  auto g = grid_for_radius(15.0, 65);
  io::write_state(stem, make_state(g, Form::U, ModelParams::make(1, 1)));
  json h = io::read_json(fs::path(stem).replace_extension(".json"));
  h["grid"]["X"] = 2.0;
  io::write_json(fs::path(stem).replace_extension(".json"), h);
  try {
    io::read_state(fs::path(stem).replace_extension(".json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridMismatch);
  }
}

class Convergence : public ::testing::TestWithParam<const char*> {};

TEST_P(Convergence, FourthOrderInSpaceAndTime) {
  cli::RunConfig c;
  c.command = cli::Command::Converge;
  c.flow = flow_from_string(GetParam());
  c.grid_r_max = 20.0;
  c.grid_n = 257;
  c.T = 2.0;
  c.initial.amp = 0.1;
  c.initial.center = 3.0;
  c.initial.width = 2.0;
  const cli::ConvergenceResult r = cli::self_convergence(c);
  EXPECT_GT(r.order, 3.5) << r.diff_coarse << " " << r.diff_fine;
  EXPECT_LT(r.order, 4.6) << r.diff_coarse << " " << r.diff_fine;
}

INSTANTIATE_TEST_SUITE_P(AllFlows, Convergence,
                         ::testing::Values("psi", "u", "linear", "free-wormhole", "free-flat"));

TEST(Binary, SubcommandsAndExitCodes) {
  const fs::path out = scratch("bin");
  const std::string lab = WORMHOLE_LAB_PATH;
  const std::string ok = lab + " harmonic --grid-x 20 --grid-n 129 --output " + out.string() + " > /dev/null";
  EXPECT_EQ(WEXITSTATUS(std::system(ok.c_str())), 0);
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
  const std::string even = lab + " evolve --grid-n 128 --output " + (out / "even").string() + " > /dev/null 2>&1";
  EXPECT_EQ(WEXITSTATUS(std::system(even.c_str())), 2);
  EXPECT_FALSE(fs::exists(out / "even"));
  const std::string junk = lab + " evolve --bogus 1 > /dev/null 2>&1";
  EXPECT_EQ(WEXITSTATUS(std::system(junk.c_str())), 2);
  const std::string cfg = " evolve --config " + std::string(WORMHOLE_SOURCE_DIR) + "/configs/evolve_psi.json";
  const std::string early = lab + cfg + " --T 0.5 --grid-n 129 --output " + (out / "early").string() + " > /dev/null 2>&1";
  EXPECT_EQ(WEXITSTATUS(std::system(early.c_str())), 2);
  EXPECT_FALSE(fs::exists(out / "early"));
  const std::string sample = lab + cfg + " --T 16 --grid-n 129 --output " + (out / "cfg").string() + " > /dev/null";
  EXPECT_EQ(WEXITSTATUS(std::system(sample.c_str())), 0);
  EXPECT_TRUE(fs::exists(out / "cfg" / "energy.csv"));
}
