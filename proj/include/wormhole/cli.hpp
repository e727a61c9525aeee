#pragma once

// Batch front door: validated run configs, the six commands, and sweeps.

#include <openssl/evp.h>

#include <cstdlib>
#include <filesystem>
#include <future>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "wormhole/analysis.hpp"
#include "wormhole/datasets.hpp"
#include "wormhole/error.hpp"
#include "wormhole/evolve.hpp"
#include "wormhole/harmonic.hpp"
#include "wormhole/io.hpp"
#include "wormhole/model.hpp"

namespace wormhole::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.3.0";
inline constexpr const char* kOutputRootEnv = "WORMHOLE_OUTPUT_ROOT";

enum class Command { Harmonic, Evolve, Resolve, Exterior, Certify, Converge };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::Harmonic: return "harmonic";
    case Command::Evolve: return "evolve";
    case Command::Resolve: return "resolve";
    case Command::Exterior: return "exterior";
    case Command::Certify: return "certify";
    case Command::Converge: return "converge";
  }
  return "?";
}

inline Command command_from_string(const std::string& s) {
  for (Command c : {Command::Harmonic, Command::Evolve, Command::Resolve, Command::Exterior,
                    Command::Certify, Command::Converge}) {
    if (s == to_string(c)) return c;
  }
  fail(ErrorCode::InvalidArgument, "unknown command '" + s + "'");
}

/// Initial perturbation: amp * profile(r) in f, vel * profile(r) in f_t.
struct InitialData {
  std::string shape = "gaussian";  // gaussian | bump
  double amp = 0.1;
  double vel = 0.0;
  double center = 1.0;
  double width = 2.0;

  double profile(double r) const {
    return shape == "bump" ? data::bump(r, center, width) : data::gaussian(r, center, width);
  }
};

struct RunConfig {
  Command command = Command::Harmonic;
  int ell = 1;
  int n = 1;
  double grid_r_max = 60.0;  // outer radius; the x half-width is asinh of it
  std::size_t grid_n = 4097;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  // harmonic
  SolveOptions solve;

  // evolve / converge / resolve
  FlowKind flow = FlowKind::PsiNonlinear;
  double T = 10.0;
  double cfl = 0.5;
  double cadence = 0.5;
  std::vector<double> snapshot_times;
  bool sponge = false;
  int flat_dim = 5;
  std::optional<double> inner_radius;
  InitialData initial;
  bool binary = false;

  // resolve
  std::vector<double> extraction_times{10.0, 20.0, 40.0};
  double window_A = 5.0;
  bool free_wave = false;
  double snapshot_spacing = 1.0;

  // exterior / certify
  int dim = 5;
  std::vector<double> radii{1.0, 2.0};
  int count = 10;
  double span = 3.0;
  double cert_T = 20.0;
  double cert_tol = 0.05;

  json source;  // validated input, hashed for provenance
};

// ---------------------------------------------------------------------------
// Parsing with unknown-key rejection.

namespace detail {
inline void only_keys(const json& j, std::initializer_list<const char*> keys,
                      const std::string& where) {
  require(j.is_object(), ErrorCode::InvalidArgument, where + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(allowed.count(it.key()) == 1, ErrorCode::InvalidArgument,
            "unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidArgument, std::string("bad value for '") + key + "'");
  }
}
}  // namespace detail

inline void validate(const RunConfig& c) {
  ModelParams::make(c.ell, c.n);
  require(c.grid_r_max > 0.0, ErrorCode::InvalidArgument, "grid.X must be positive");
  require(c.grid_n % 2 == 1 && c.grid_n >= 33, ErrorCode::InvalidArgument,
          "grid.N must be odd and >= 33");
  require(c.T > 0.0 && c.cadence > 0.0, ErrorCode::InvalidArgument, "T and cadence must be positive");
  require(c.cfl > 0.0 && c.cfl <= kCflMax, ErrorCode::InvalidArgument, "cfl must lie in (0, 0.8]");
  require(!c.output_dir.empty(), ErrorCode::InvalidArgument, "output_dir must be set");
  require(c.initial.shape == "gaussian" || c.initial.shape == "bump", ErrorCode::InvalidArgument,
          "initial.shape must be gaussian or bump");
  require(c.initial.width > 0.0, ErrorCode::InvalidArgument, "initial.width must be positive");
  require(c.dim >= 5 && c.dim % 2 == 1, ErrorCode::InvalidArgument, "d must be odd and >= 5");
  require(c.count >= 0 && c.span > 0.0 && c.cert_T > 0.0, ErrorCode::InvalidArgument,
          "count, span and T must be positive");
  for (double R : c.radii) require(R > 0.0, ErrorCode::InvalidArgument, "radii must be positive");
  require(c.window_A > 0.0 && c.snapshot_spacing > 0.0, ErrorCode::InvalidArgument,
          "window and snapshot spacing must be positive");
  require(c.flat_dim >= 3 && c.flat_dim % 2 == 1, ErrorCode::InvalidArgument,
          "flat_dim must be odd and >= 3");
  for (double t : c.snapshot_times) {
    require(t >= 0.0 && t <= c.T, ErrorCode::InvalidArgument, "snapshot time outside [0, T]");
  }
}

inline RunConfig parse_config(const json& j) {
  using detail::only_keys;
  using detail::take;
  only_keys(j,
            {"command", "model", "grid", "output_dir", "seed", "harmonic", "evolve", "resolve",
             "exterior", "certify", "converge"},
            "config");
  RunConfig c;
  c.source = j;
  std::string cmd;
  require(j.contains("command"), ErrorCode::InvalidArgument, "config needs 'command'");
  take(j, "command", cmd);
  c.command = command_from_string(cmd);
  if (j.contains("model")) {
    only_keys(j["model"], {"ell", "n"}, "model");
    take(j["model"], "ell", c.ell);
    take(j["model"], "n", c.n);
  }
  if (j.contains("grid")) {
    only_keys(j["grid"], {"X", "N"}, "grid");
    take(j["grid"], "X", c.grid_r_max);
    take(j["grid"], "N", c.grid_n);
  }
  take(j, "output_dir", c.output_dir);
  take(j, "seed", c.seed);
  if (j.contains("harmonic")) {
    const json& h = j["harmonic"];
    only_keys(h, {"tol_b", "x_end", "dx_ode", "shot_margin", "conv_tol"}, "harmonic");
    take(h, "tol_b", c.solve.tol_b);
    take(h, "x_end", c.solve.x_end);
    take(h, "dx_ode", c.solve.dx_ode);
    take(h, "shot_margin", c.solve.rules.margin);
    take(h, "conv_tol", c.solve.rules.conv_tol);
  }
  auto flow_block = [&](const json& e, const std::string& where) {
    only_keys(e,
              {"flow", "T", "cfl", "cadence", "snapshot_times", "sponge", "flat_dim",
               "inner_radius", "initial", "binary"},
              where);
    std::string flow;
    take(e, "flow", flow);
    if (!flow.empty()) c.flow = flow_from_string(flow);
    take(e, "T", c.T);
    take(e, "cfl", c.cfl);
    take(e, "cadence", c.cadence);
    take(e, "snapshot_times", c.snapshot_times);
    take(e, "sponge", c.sponge);
    take(e, "flat_dim", c.flat_dim);
    take(e, "binary", c.binary);
    if (e.contains("inner_radius") && !e["inner_radius"].is_null()) {
      double r = 0.0;
      take(e, "inner_radius", r);
      c.inner_radius = r;
    }
    if (e.contains("initial")) {
      const json& in = e["initial"];
      only_keys(in, {"shape", "amp", "vel", "center", "width"}, where + ".initial");
      take(in, "shape", c.initial.shape);
      take(in, "amp", c.initial.amp);
      take(in, "vel", c.initial.vel);
      take(in, "center", c.initial.center);
      take(in, "width", c.initial.width);
    }
  };
  if (j.contains("evolve")) flow_block(j["evolve"], "evolve");
  if (j.contains("converge")) flow_block(j["converge"], "converge");
  if (j.contains("resolve")) {
    const json& r = j["resolve"];
    only_keys(r,
              {"T", "cfl", "initial", "extraction_times", "A", "free_wave", "snapshot_spacing",
               "sponge"},
              "resolve");
    json sub = json::object();
    for (const char* k : {"T", "cfl", "initial", "sponge"}) {
      if (r.contains(k)) sub[k] = r[k];
    }
    flow_block(sub, "resolve");
    take(r, "extraction_times", c.extraction_times);
    take(r, "A", c.window_A);
    take(r, "free_wave", c.free_wave);
    take(r, "snapshot_spacing", c.snapshot_spacing);
  }
  for (const char* blk : {"exterior", "certify"}) {
    if (!j.contains(blk)) continue;
    const json& e = j[blk];
    only_keys(e, {"d", "R", "count", "span", "T", "tol", "cfl"}, blk);
    take(e, "d", c.dim);
    if (e.contains("R")) {
      if (e["R"].is_array()) {
        take(e, "R", c.radii);
      } else {
        double R = 1.0;
        take(e, "R", R);
        c.radii = {R};
      }
    }
    take(e, "count", c.count);
    take(e, "span", c.span);
    take(e, "T", c.cert_T);
    take(e, "tol", c.cert_tol);
    take(e, "cfl", c.cfl);
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Provenance.

inline std::string sha256_hex(const std::string& text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr, ErrorCode::Io, "cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, text.data(), text.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  require(ok, ErrorCode::Io, "sha-256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

/// Hash of the canonical (sorted-key, compact) config text.
inline std::string config_hash(const json& cfg) { return sha256_hex(cfg.dump()); }

inline fs::path resolve_output(const std::string& dir) {
  fs::path p(dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return fs::path(root) / p;
  }
  return p;
}

inline json provenance(const RunConfig& c) {
  return json{{"config_hash", config_hash(c.source)},
              {"config", c.source},
              {"versions", {{"wormhole_lab", kVersion}, {"compiler", __VERSION__}}}};
}

// ---------------------------------------------------------------------------
// Shared builders.

inline GridPtr config_grid(const RunConfig& c, std::size_t n = 0) {
  return grid_for_radius(c.grid_r_max, n ? n : c.grid_n);
}

inline FlowSpec config_flow(const RunConfig& c, const std::optional<HarmonicMap>& q) {
  FlowSpec f;
  f.kind = c.flow;
  f.params = ModelParams::make(c.ell, c.n);
  if (f.kind == FlowKind::FreeFlatD) f.params = ModelParams::make(c.ell, 0);
  f.q_ref = q;
  f.flat_dim = c.flat_dim;
  f.inner_radius = c.inner_radius;
  f.sponge.enabled = c.sponge;
  return f;
}

inline bool flow_needs_q(FlowKind k) {
  return k == FlowKind::PsiNonlinear || k == FlowKind::UNonlinear || k == FlowKind::LinearizedQ;
}

/// Initial state of the configured flow on `grid`.
inline FieldState initial_state(const RunConfig& c, const FlowSpec& flow, GridPtr grid) {
  const RadialGrid& g = *grid;
  std::size_t lo = 0;
  if (flow.kind == FlowKind::FreeFlatD && flow.inner_radius) {
    lo = g.lower_index(std::asinh(*flow.inner_radius));
  }
  FieldState s = make_state(grid, state_form(flow.kind), flow.params, lo);
  for (std::size_t i = lo; i < g.size(); ++i) {
    const double r = flow.kind == FlowKind::FreeFlatD ? std::abs(g.r[i]) : g.r[i];
    const double p = c.initial.profile(r);
    s.f[i] = c.initial.amp * p;
    s.g[i] = c.initial.vel * p;
    if (flow.kind == FlowKind::PsiNonlinear) s.f[i] += flow.q_ref->Q[i];
  }
  if (lo > 0) {
    s.f[lo] = 0.0;
    s.g[lo] = 0.0;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Self-convergence on N, 2N-1, 4N-3.

struct ConvergenceResult {
  std::vector<std::size_t> sizes;
  double diff_coarse = 0.0;  // max |u_N - u_{2N-1}| on the coarse nodes
  double diff_fine = 0.0;    // max |u_{2N-1} - u_{4N-3}|
  double order = 0.0;
  std::vector<double> energy_drift;
};

inline ConvergenceResult self_convergence(const RunConfig& c) {
  ConvergenceResult out;
  const ModelParams p = ModelParams::make(c.ell, c.n);
  std::optional<HarmonicMap> q_base;
  if (flow_needs_q(c.flow)) q_base = solve_Q(p, config_grid(c, 33), c.solve);
  std::vector<std::vector<double>> finals;
  for (int level = 0; level < 3; ++level) {
    const std::size_t n = (c.grid_n - 1) * (std::size_t{1} << level) + 1;
    out.sizes.push_back(n);
    GridPtr grid = config_grid(c, n);
    std::optional<HarmonicMap> q;
    if (q_base) q = resample(*q_base, grid);
    const FlowSpec flow = config_flow(c, q);
    EvolveOptions eo;
    eo.cfl = c.cfl;
    eo.cadence = c.T;
    eo.snapshot_times = {c.T};
    const EvolutionLog log = evolve(flow, initial_state(c, flow, grid), c.T, eo);
    out.energy_drift.push_back(relative_energy_drift(log));
    const auto& f = log.snapshots.front().f;
    std::vector<double> coarse(c.grid_n);
    for (std::size_t i = 0; i < c.grid_n; ++i) coarse[i] = f[i << level];
    finals.push_back(std::move(coarse));
  }
  for (std::size_t i = 0; i < c.grid_n; ++i) {
    out.diff_coarse = std::max(out.diff_coarse, std::abs(finals[0][i] - finals[1][i]));
    out.diff_fine = std::max(out.diff_fine, std::abs(finals[1][i] - finals[2][i]));
  }
  out.order = std::log2(out.diff_coarse / out.diff_fine);
  return out;
}

// ---------------------------------------------------------------------------
// Commands.

struct RunOutcome {
  int exit_code = 0;
  std::string message;
  json headline = json::object();
  fs::path output_dir;
};

inline json run_harmonic(const RunConfig& c, const fs::path& out) {
  const ModelParams p = ModelParams::make(c.ell, c.n);
  const HarmonicMap q = solve_Q(p, config_grid(c), c.solve);
  json prov = provenance(c);
  io::write_harmonic(out, q, c.solve, prov);
  return json{{"b_star", q.b_star}, {"alpha", q.alpha}, {"alpha_drift", q.alpha_drift}};
}

inline json run_evolve(const RunConfig& c, const fs::path& out) {
  const ModelParams p = ModelParams::make(c.ell, c.n);
  GridPtr grid = config_grid(c);
  std::optional<HarmonicMap> q;
  if (flow_needs_q(c.flow)) q = solve_Q(p, grid, c.solve);
  const FlowSpec flow = config_flow(c, q);
  const FieldState init = initial_state(c, flow, grid);
  EvolveOptions eo;
  eo.cfl = c.cfl;
  eo.cadence = c.cadence;
  eo.snapshot_times = c.snapshot_times;
  eo.snapshot_times.push_back(init.time + c.T);
  const EvolutionLog log = evolve(flow, init, c.T, eo);
  io::write_energy(out / "energy.csv", log);
  json snaps = json::array();
  for (std::size_t k = 0; k < log.snapshots.size(); ++k) {
    const std::string stem = "snapshot_" + std::to_string(k);
    io::write_state(out / stem, log.snapshots[k],
                    c.binary ? io::Encoding::Binary : io::Encoding::Csv,
                    {{"config_hash", config_hash(c.source)}});
    snaps.push_back({{"t", log.snapshots[k].time}, {"file", stem + ".json"}});
  }
  json m = provenance(c);
  const double drift = relative_energy_drift(log);
  m["flow"] = to_string(c.flow);
  m["dt"] = log.dt;
  m["cfl"] = log.cfl;
  m["steps"] = log.steps;
  m["energy_initial"] = log.energy.front();
  m["energy_final"] = log.energy.back();
  m["energy_drift"] = drift;
  m["absorbed"] = log.boundary_flux.back();
  m["snapshots"] = snaps;
  m["energy_csv"] = "energy.csv";
  io::write_json(out / "manifest.json", m);
  return json{{"energy_drift", drift}, {"dt", log.dt}};
}

inline json run_resolve(const RunConfig& c, const fs::path& out) {
  const ModelParams p = ModelParams::make(c.ell, c.n);
  GridPtr grid = config_grid(c);
  const HarmonicMap q = solve_Q(p, grid, c.solve);
  RunConfig rc = c;
  rc.flow = FlowKind::PsiNonlinear;
  const FlowSpec flow = config_flow(rc, q);
  EvolveOptions eo;
  eo.cfl = c.cfl;
  eo.cadence = c.snapshot_spacing;
  for (double t = 0.0; t <= c.T + 1e-9; t += c.snapshot_spacing) eo.snapshot_times.push_back(t);
  const EvolutionLog log = evolve(flow, initial_state(rc, flow, grid), c.T, eo);
  ResolutionOptions ro;
  ro.A = c.window_A;
  ro.free_wave = c.free_wave;
  ro.cfl = c.cfl;
  const ResolutionReport rep = resolution_diagnostic(log, q, c.extraction_times, ro);
  io::write_resolution(out / "resolution.csv", rep);
  io::write_energy(out / "energy.csv", log);
  json sups = json::array();
  for (const auto& s : rep.delta_series) sups.push_back({{"T_m", s.T_m}, {"sup_delta", s.sup()}});
  const double peak = *std::max_element(rep.local_energy.begin(), rep.local_energy.end());
  const double final_local = rep.local_energy.back();
  json m = provenance(c);
  m["sup_delta"] = sups;
  m["local_energy_peak"] = peak;
  m["local_energy_final"] = final_local;
  m["local_decay_factor"] = final_local > 0.0 ? peak / final_local : 0.0;
  m["energy_drift"] = relative_energy_drift(log);
  io::write_json(out / "manifest.json", m);
  return json{{"local_decay_factor", m["local_decay_factor"]}, {"sup_delta", sups}};
}

inline json run_exterior(const RunConfig& c, const fs::path& out) {
  GridPtr grid = config_grid(c);
  std::mt19937_64 rng(c.seed);
  json rows = json::array();
  double worst = 0.0;
  for (double R : c.radii) {
    for (int k = 0; k < c.count; ++k) {
      const FieldState s = data::random_flat_data(grid, c.dim, R, c.span, rng);
      const ProjectionReport rep = project_exterior(s, R);
      worst = std::max(worst, rep.max_coefficient_gap);
      json row = io::projection_json(rep);
      row["sample"] = k;
      rows.push_back(row);
    }
  }
  json m = provenance(c);
  m["projections"] = rows;
  m["max_coefficient_gap"] = worst;
  io::write_json(out / "manifest.json", m);
  return json{{"max_coefficient_gap", worst}};
}

inline json run_certify(const RunConfig& c, const fs::path& out) {
  GridPtr grid = config_grid(c);
  std::mt19937_64 rng(c.seed);
  CertifyOptions co;
  co.tol = c.cert_tol;
  co.cfl = c.cfl;
  json rows = json::array();
  int passed = 0, total = 0;
  for (double R : c.radii) {
    for (int k = 0; k < c.count; ++k) {
      const FieldState s = data::random_flat_data(grid, c.dim, R, c.span, rng);
      const CertificationRecord rec = certify_exterior_estimate(s, R, c.cert_T, co);
      passed += rec.pass ? 1 : 0;
      ++total;
      rows.push_back(io::certification_json(rec));
    }
  }
  json m = provenance(c);
  m["certifications"] = rows;
  m["passed"] = passed;
  m["total"] = total;
  io::write_json(out / "manifest.json", m);
  return json{{"passed", passed}, {"total", total}};
}

inline json run_converge(const RunConfig& c, const fs::path& out) {
  const ConvergenceResult r = self_convergence(c);
  json m = provenance(c);
  m["flow"] = to_string(c.flow);
  m["sizes"] = r.sizes;
  m["diff_coarse"] = r.diff_coarse;
  m["diff_fine"] = r.diff_fine;
  m["order"] = r.order;
  m["energy_drift"] = r.energy_drift;
  io::write_json(out / "manifest.json", m);
  return json{{"order", r.order}};
}

/// Runs one validated config. Exit status 0 ok, 2 validation, 3 numerical.
inline RunOutcome run(const RunConfig& c) {
  RunOutcome o;
  try {
    o.output_dir = resolve_output(c.output_dir);
    // Everything that can be validated cheaply is checked before any artifact exists.
    config_grid(c);
    if (c.flow == FlowKind::FreeFlatD) validate_flow(config_flow(c, std::nullopt));
    fs::create_directories(o.output_dir);
    switch (c.command) {
      case Command::Harmonic: o.headline = run_harmonic(c, o.output_dir); break;
      case Command::Evolve: o.headline = run_evolve(c, o.output_dir); break;
      case Command::Resolve: o.headline = run_resolve(c, o.output_dir); break;
      case Command::Exterior: o.headline = run_exterior(c, o.output_dir); break;
      case Command::Certify: o.headline = run_certify(c, o.output_dir); break;
      case Command::Converge: o.headline = run_converge(c, o.output_dir); break;
    }
    o.message = "ok";
  } catch (const BlowupError& e) {
    o.exit_code = 3;
    o.message = e.what();
    try {
      io::write_state(o.output_dir / "last_good", e.last_good());
      io::write_json(o.output_dir / "manifest.json",
                     json{{"command", to_string(c.command)},
                          {"config_hash", config_hash(c.source)},
                          {"error", o.message},
                          {"last_good", "last_good.json"}});
    } catch (const std::exception&) {
    }
  } catch (const Error& e) {
    o.exit_code = e.is_validation() ? 2 : 3;
    o.message = e.what();
  } catch (const fs::filesystem_error& e) {
    o.exit_code = 2;
    o.message = e.what();
  } catch (const std::exception& e) {
    o.exit_code = 3;
    o.message = e.what();
  }
  return o;
}

inline RunOutcome run_json(const json& j) {
  try {
    return run(parse_config(j));
  } catch (const Error& e) {
    return RunOutcome{e.is_validation() ? 2 : 3, e.what(), json::object(), {}};
  }
}

// ---------------------------------------------------------------------------
// Sweeps.

struct SweepReport {
  std::vector<RunOutcome> runs;
  int exit_code = 0;
};

/// Runs independent configs in parallel. Duplicate output directories are a
/// validation error (nothing runs); a failing child does not stop the others.
inline SweepReport sweep(const std::vector<json>& configs, const fs::path& aggregate_csv,
                         unsigned max_parallel = 0) {
  SweepReport rep;
  std::vector<std::optional<RunConfig>> parsed;
  std::vector<RunOutcome> rejected(configs.size());
  std::set<fs::path> seen;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const json& j = configs[i];
    if (j.is_object() && j.contains("output_dir") && j["output_dir"].is_string()) {
      const fs::path dir = fs::weakly_canonical(resolve_output(j["output_dir"].get<std::string>()));
      require(seen.insert(dir).second, ErrorCode::InvalidArgument,
              "duplicate output directory " + dir.string());
      rejected[i].output_dir = dir;
    }
    // A config that fails validation is a failed child, not a failed sweep.
    try {
      parsed.emplace_back(parse_config(j));
    } catch (const Error& e) {
      parsed.emplace_back(std::nullopt);
      rejected[i].exit_code = 2;
      rejected[i].message = e.what();
    }
  }
  if (max_parallel == 0) max_parallel = std::max(1u, std::thread::hardware_concurrency());
  rep.runs = rejected;
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (parsed[i]) todo.push_back(i);
  }
  std::size_t next = 0;
  while (next < todo.size()) {
    std::vector<std::future<RunOutcome>> batch;
    const std::size_t first = next;
    for (; next < todo.size() && next - first < max_parallel; ++next) {
      batch.push_back(std::async(std::launch::async, [&, i = todo[next]] { return run(*parsed[i]); }));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) rep.runs[todo[first + k]] = batch[k].get();
  }
  auto os = io::open_out(aggregate_csv);
  os << "index,command,output_dir,exit_code,config_hash,headline\n";
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const auto& r = rep.runs[i];
    if (r.exit_code != 0) rep.exit_code = 3;
    std::string head = r.headline.dump();
    for (char& ch : head) {
      if (ch == '"') ch = '\'';
    }
    const std::string cmd = parsed[i] ? to_string(parsed[i]->command) : "invalid";
    const std::string hash = parsed[i] ? config_hash(parsed[i]->source) : config_hash(configs[i]);
    os << i << ',' << cmd << ',' << r.output_dir.string() << ',' << r.exit_code << ',' << hash
       << ",\"" << head << "\"\n";
  }
  require(os.good(), ErrorCode::Io, "cannot write " + aggregate_csv.string());
  return rep;
}

}  // namespace wormhole::cli
