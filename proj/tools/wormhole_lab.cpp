#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "wormhole/cli.hpp"

using nlohmann::json;
namespace wc = wormhole::cli;

namespace {

struct Overrides {
  std::string config;
  std::optional<int> ell, n;
  std::optional<double> grid_x, cfl, T;
  std::optional<std::size_t> grid_n;
  std::optional<std::string> output, flow;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON run config");
  sub->add_option("--ell", o.ell, "equivariance class");
  sub->add_option("--n", o.n, "degree");
  sub->add_option("--grid-x", o.grid_x, "outer radius r_max");
  sub->add_option("--grid-n", o.grid_n, "number of grid points (odd)");
  sub->add_option("--cfl", o.cfl, "time step over grid spacing");
  sub->add_option("--T", o.T, "final time");
  sub->add_option("--output", o.output, "output directory");
}

// Block that receives T / cfl / flow for each command.
const char* block_for(const std::string& cmd) {
  if (cmd == "evolve" || cmd == "converge" || cmd == "resolve") return cmd.c_str();
  if (cmd == "certify" || cmd == "exterior") return cmd.c_str();
  return nullptr;
}

json effective_config(const std::string& cmd, const Overrides& o) {
  json j = json::object();
  if (!o.config.empty()) {
    j = wormhole::io::read_json(o.config);
    wormhole::require(j.is_object(), wormhole::ErrorCode::InvalidArgument,
                      "config must be a JSON object");
  }
  if (j.contains("command")) {
    wormhole::require(j["command"] == cmd, wormhole::ErrorCode::InvalidArgument,
                      "config command differs from the subcommand");
  }
  j["command"] = cmd;
  if (o.ell) j["model"]["ell"] = *o.ell;
  if (o.n) j["model"]["n"] = *o.n;
  if (o.grid_x) j["grid"]["X"] = *o.grid_x;
  if (o.grid_n) j["grid"]["N"] = *o.grid_n;
  if (o.output) j["output_dir"] = *o.output;
  if (!j.contains("output_dir")) j["output_dir"] = "out/" + cmd;
  const char* blk = block_for(cmd);
  if (blk != nullptr) {
    if (o.T) j[blk]["T"] = *o.T;
    if (o.cfl) j[blk]["cfl"] = *o.cfl;
    if (o.flow) j[blk]["flow"] = *o.flow;
  } else if (o.T || o.cfl || o.flow) {
    wormhole::fail(wormhole::ErrorCode::InvalidArgument, "--T/--cfl/--flow do not apply to " + cmd);
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equivariant wave maps on a wormhole: harmonic maps, flows and diagnostics"};
  app.require_subcommand(1);
  Overrides o;
  for (const char* name : {"harmonic", "evolve", "resolve", "exterior", "certify", "converge"}) {
    auto* sub = app.add_subcommand(name);
    add_common(sub, o);
    if (std::string(name) == "evolve" || std::string(name) == "converge") {
      sub->add_option("--flow", o.flow, "psi | u | linear | free-wormhole | free-flat");
    }
  }
  std::string sweep_file, aggregate = "sweep.csv";
  unsigned jobs = 0;
  auto* sw = app.add_subcommand("sweep", "run a list of configs in parallel");
  sw->add_option("--config", sweep_file, "JSON array of run configs")->required();
  sw->add_option("--aggregate", aggregate, "aggregate CSV path");
  sw->add_option("--jobs", jobs, "parallel runs (0 = hardware threads)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (sw->parsed()) {
      const json list = wormhole::io::read_json(sweep_file);
      wormhole::require(list.is_array(), wormhole::ErrorCode::InvalidArgument,
                        "sweep config must be a JSON array");
      std::vector<json> cfgs(list.begin(), list.end());
      const auto rep = wc::sweep(cfgs, wc::resolve_output(aggregate), jobs);
      for (std::size_t i = 0; i < rep.runs.size(); ++i) {
        std::cout << i << ' ' << rep.runs[i].exit_code << ' ' << rep.runs[i].message << '\n';
      }
      return rep.exit_code;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    const wc::RunOutcome r = wc::run_json(effective_config(cmd, o));
    if (r.exit_code == 0) {
      std::cout << r.output_dir.string() << ' ' << r.headline.dump() << '\n';
    } else {
      std::cerr << r.message << '\n';
    }
    return r.exit_code;
  } catch (const wormhole::Error& e) {
    std::cerr << e.what() << '\n';
    return e.is_validation() ? 2 : 3;
  }
}
