#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <string>

#include "json.hpp"

#include "qbsde/bsde.hpp"
#include "qbsde/compare.hpp"
#include "qbsde/error.hpp"
#include "qbsde/lattice.hpp"

namespace qbsde {

/// Writes through `fill` into `path.tmp` and renames it over `path`, so the
/// target is either absent, the previous version, or complete.
inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& fill) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw Error("cli", ErrorCode::InvalidArgument, "cannot open " + tmp.string());
      fill(os);
      os.flush();
      if (!os) throw Error("cli", ErrorCode::InvalidArgument, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

/// CSV "level,index,t,B,Y,Z,dK"; Z and dK are empty on the terminal level.
inline void write_surface_csv(std::ostream& os, const BinomialTree& tree, const SolutionSurface& s) {
  os << "level,index,t,B,Y,Z,dK\n";
  char buf[256];
  const int n = s.steps();
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) {
      if (i < n) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, j, tree.t(i),
                      tree.brownian(i, j), s.Y(i, j), s.Z(i, j), s.dK(i, j));
      } else {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,,\n", i, j, tree.t(i),
                      tree.brownian(i, j), s.Y(i, j));
      }
      os << buf;
    }
  }
}

inline nlohmann::json surface_summary(const SolutionSurface& s) {
  const auto [down, up] = s.terminal_K_extremes();
  nlohmann::json j;
  j["steps"] = s.steps();
  j["reflected"] = s.reflected;
  j["Y0"] = s.y0();
  j["Z0"] = s.z0();
  j["K_T"] = {{"all_down", down}, {"all_up", up}};
  j["diagnostics"] = {
      {"skorokhod_sum", s.diagnostics.skorokhod_sum},
      {"domain_margin", std::isfinite(s.diagnostics.domain_margin)
                            ? nlohmann::json(s.diagnostics.domain_margin)
                            : nlohmann::json(nullptr)},
      {"fixed_point_iters", s.diagnostics.fixed_point_iters},
      {"quadratic_residual", s.diagnostics.quadratic_residual}};
  return j;
}

inline nlohmann::json verdict_json(const Verdict& v) {
  return {{"status", to_string(v.status)},
          {"reason", v.reason},
          {"tolerance", v.tolerance},
          {"worst_violation", v.worst_violation},
          {"dk_checked", v.dk_checked},
          {"worst_dk_violation", v.worst_dk_violation},
          {"strict_nodes", v.strict_nodes},
          {"strict_failures", v.strict_failures},
          {"min_strict_gap", v.min_strict_gap}};
}

/// Machine-readable sweep report: totals plus one entry per case.
inline nlohmann::json sweep_json(const SweepSummary& s) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : s.cases) {
    nlohmann::json e = verdict_json(c.verdict);
    e["name"] = c.label;
    cases.push_back(std::move(e));
  }
  return {{"family", s.family},
          {"steps", s.steps},
          {"tests", s.cases.size()},
          {"pass", s.pass},
          {"failures", s.fail},
          {"skipped", s.skip},
          {"skip_rate", s.skip_rate()},
          {"worst_violation", s.worst_violation},
          {"cases", std::move(cases)}};
}

}  // namespace qbsde
