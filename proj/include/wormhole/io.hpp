#pragma once

// Artifact formats: JSON headers/manifests plus CSV or little-endian binary columns.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "wormhole/analysis.hpp"
#include "wormhole/error.hpp"
#include "wormhole/evolve.hpp"
#include "wormhole/harmonic.hpp"
#include "wormhole/model.hpp"

namespace wormhole::io {

using nlohmann::json;
namespace fs = std::filesystem;

enum class Encoding { Csv, Binary };

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::ofstream open_out(const fs::path& p, bool binary = false) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, binary ? std::ios::binary : std::ios::out);
  require(os.good(), ErrorCode::Io, "cannot write " + p.string());
  return os;
}

inline void write_json(const fs::path& p, const json& j) {
  auto os = open_out(p);
  os << j.dump(2) << '\n';
  require(os.good(), ErrorCode::Io, "write failed for " + p.string());
}

inline json read_json(const fs::path& p) {
  std::ifstream is(p);
  require(is.good(), ErrorCode::Io, "cannot read " + p.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Io, p.string() + ": " + e.what());
  }
}

/// Writes columns as CSV with a header row.
inline void write_csv(const fs::path& p, const std::vector<std::string>& names,
                      const std::vector<const std::vector<double>*>& cols) {
  require(names.size() == cols.size() && !cols.empty(), ErrorCode::InvalidArgument,
          "csv needs one name per column");
  const std::size_t rows = cols.front()->size();
  for (auto* c : cols) require(c->size() == rows, ErrorCode::InvalidArgument, "ragged csv columns");
  auto os = open_out(p);
  for (std::size_t k = 0; k < names.size(); ++k) os << (k ? "," : "") << names[k];
  os << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << fmt((*cols[k])[i]);
    os << '\n';
  }
  require(os.good(), ErrorCode::Io, "write failed for " + p.string());
}

inline std::vector<std::vector<double>> read_csv(const fs::path& p, std::size_t n_cols) {
  std::ifstream is(p);
  require(is.good(), ErrorCode::Io, "cannot read " + p.string());
  std::string line;
  std::getline(is, line);  // header
  std::vector<std::vector<double>> cols(n_cols);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ss, cell, ',')) {
      require(k < n_cols, ErrorCode::Io, "too many columns in " + p.string());
      cols[k++].push_back(std::stod(cell));
    }
    require(k == n_cols, ErrorCode::Io, "too few columns in " + p.string());
  }
  return cols;
}

namespace detail {
inline void put_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  os.write(buf, 8);
}

inline double get_le(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  std::uint64_t bits;
  std::memcpy(&bits, buf, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}
}  // namespace detail

inline json params_json(const ModelParams& p) {
  return json{{"ell", p.ell}, {"n", p.degree}, {"d", p.dim}};
}

inline json grid_json(const RadialGrid& g) {
  return json{{"X", g.half_width}, {"N", g.size()}, {"r_max", g.r_max()}};
}

/// State header `<stem>.json` plus samples `<stem>.csv` or `<stem>.bin`.
/// Binary rows are (x, f, g) as little-endian float64.
inline void write_state(const fs::path& stem, const FieldState& s, Encoding enc = Encoding::Csv,
                        const json& extra = json::object()) {
  const RadialGrid& g = s.mesh();
  const fs::path data = fs::path(stem).replace_extension(enc == Encoding::Csv ? ".csv" : ".bin");
  json h = {{"params", params_json(s.params)},
            {"grid", grid_json(g)},
            {"form", to_string(s.form)},
            {"time", s.time},
            {"lo", s.lo},
            {"encoding", enc == Encoding::Csv ? "csv" : "binary"},
            {"columns", {"x", "f", "g"}},
            {"data", data.filename().string()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) h[it.key()] = it.value();
  write_json(fs::path(stem).replace_extension(".json"), h);
  if (enc == Encoding::Csv) {
    write_csv(data, {"x", "f", "g"}, {&g.x, &s.f, &s.g});
  } else {
    auto os = open_out(data, true);
    for (std::size_t i = 0; i < g.size(); ++i) {
      detail::put_le(os, g.x[i]);
      detail::put_le(os, s.f[i]);
      detail::put_le(os, s.g[i]);
    }
    require(os.good(), ErrorCode::Io, "write failed for " + data.string());
  }
}

inline FieldState read_state(const fs::path& header) {
  const json h = read_json(header);
  try {
    const auto& pj = h.at("params");
    const ModelParams p = ModelParams::make(pj.at("ell").get<int>(), pj.at("n").get<int>());
    const auto& gj = h.at("grid");
    auto grid = make_grid_ptr(gj.at("X").get<double>(), gj.at("N").get<std::size_t>());
    FieldState s = make_state(grid, form_from_string(h.at("form").get<std::string>()), p,
                              h.value("lo", std::size_t{0}));
    s.time = h.at("time").get<double>();
    const fs::path data = header.parent_path() / h.at("data").get<std::string>();
    const std::size_t n = grid->size();
    std::vector<double> x(n);
    if (h.at("encoding").get<std::string>() == "csv") {
      auto cols = read_csv(data, 3);
      require(cols[0].size() == n, ErrorCode::GridMismatch, "sample count differs from grid size");
      x = cols[0];
      s.f = cols[1];
      s.g = cols[2];
    } else {
      std::ifstream is(data, std::ios::binary);
      require(is.good(), ErrorCode::Io, "cannot read " + data.string());
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = detail::get_le(is);
        s.f[i] = detail::get_le(is);
        s.g[i] = detail::get_le(is);
      }
      require(is.good(), ErrorCode::Io, "truncated binary state " + data.string());
    }
    for (std::size_t i = 0; i < n; ++i) {
      require(std::abs(x[i] - grid->x[i]) <= 1e-12 * (1.0 + std::abs(x[i])),
              ErrorCode::GridMismatch, "stored abscissae differ from the header grid");
    }
    return s;
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, header.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

inline json harmonic_manifest(const HarmonicMap& q, const SolveOptions& opt) {
  json m = {{"params", params_json(q.params)},
            {"grid", grid_json(*q.grid)},
            {"b_star", q.b_star},
            {"alpha", q.alpha},
            {"alpha_drift", q.alpha_drift},
            {"tolerances",
             {{"tol_b", opt.tol_b},
              {"shot_margin", opt.rules.margin},
              {"shot_conv_tol", opt.rules.conv_tol},
              {"alpha_max_drift", 1e-3}}},
            {"integrator", {{"scheme", "rk4"}, {"dx", opt.dx_ode}, {"x_end", opt.x_end}}}};
  if (q.profile) m["x_match"] = q.profile->x_match;
  const RadialGrid& g = *q.grid;
  double anti = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    anti = std::max(anti, std::abs(q.Q[i] + q.Q[g.size() - 1 - i] - q.params.far_value()));
  }
  m["residuals"] = {{"antisymmetry", anti}};
  return m;
}

inline void write_harmonic(const fs::path& dir, const HarmonicMap& q, const SolveOptions& opt,
                           const json& extra = json::object()) {
  json m = harmonic_manifest(q, opt);
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  m["samples"] = "harmonic.csv";
  write_json(dir / "manifest.json", m);
  write_csv(dir / "harmonic.csv", {"x", "r", "Q", "Qx"}, {&q.grid->x, &q.grid->r, &q.Q, &q.Qx});
}

inline void write_energy(const fs::path& p, const EvolutionLog& log) {
  std::vector<double> kin, grad, pot;
  for (const auto& e : log.parts) {
    kin.push_back(e.kinetic);
    grad.push_back(e.gradient);
    pot.push_back(e.potential_part);
  }
  write_csv(p, {"t", "E", "kinetic", "gradient", "potential", "boundary_flux"},
            {&log.times, &log.energy, &kin, &grad, &pot, &log.boundary_flux});
}

inline json projection_json(const ProjectionReport& r) {
  return json{{"R", r.R},
              {"d", r.d},
              {"lambda", r.lambda},
              {"mu", r.mu},
              {"lambda_gram", r.lambda_gram},
              {"mu_gram", r.mu_gram},
              {"max_coefficient_gap", r.max_coefficient_gap},
              {"norm_pi", r.norm_pi},
              {"norm_pi_perp", r.norm_pi_perp},
              {"norm_total", r.norm_total},
              {"gram_condition", r.gram_condition},
              {"conditioning_warning", r.conditioning_warning},
              {"tail_flag", r.tail_flag}};
}

inline json certification_json(const CertificationRecord& c) {
  return json{{"inputs", {{"d", c.d}, {"R", c.R}, {"T", c.T}, {"tol", c.tol}}},
              {"lhs", c.lhs},
              {"forward_inf", c.forward_inf},
              {"backward_inf", c.backward_inf},
              {"rhs", c.rhs},
              {"data_energy", c.data_energy},
              {"margin", c.margin},
              {"result", c.pass ? "PASS" : "FAIL"},
              {"grid", {{"r_max", c.r_max}, {"N", c.n_points}, {"dt", c.dt}}},
              {"projection", projection_json(c.projection)}};
}

inline void write_resolution(const fs::path& p, const ResolutionReport& rep) {
  auto os = open_out(p);
  os << "T_m,t,delta,local_energy\n";
  auto local_at = [&](double t) {
    for (std::size_t k = 0; k < rep.local_t.size(); ++k) {
      if (std::abs(rep.local_t[k] - t) < 1e-9) return rep.local_energy[k];
    }
    return std::nan("");
  };
  for (const auto& s : rep.delta_series) {
    for (std::size_t k = 0; k < s.t.size(); ++k) {
      os << fmt(s.T_m) << ',' << fmt(s.t[k]) << ',' << fmt(s.delta[k]) << ','
         << fmt(local_at(s.t[k])) << '\n';
    }
  }
  require(os.good(), ErrorCode::Io, "write failed for " + p.string());
}

}  // namespace wormhole::io
