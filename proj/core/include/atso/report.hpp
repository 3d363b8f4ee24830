#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atso/orchestrator.hpp"

namespace atso {

/// Mean, sample std and normal 95% half-width of one reported scalar across
/// seeds. `column` is a mode name or a reduced-protocol row tag.
struct Aggregate {
  std::string row;
  std::string column;
  std::string split;
  std::string metric;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;
  double ci95 = 0.0;
};

/// Mean/std/CI of values in input order.
Aggregate summarize(std::string row, std::string column, std::string split, std::string metric,
                    const std::vector<double>& values);

struct RunReportBundle {
  std::string experiment;  ///< standard | transfer | reduced
  int T = 0;
  std::uint32_t num_classes = 0;
  std::vector<Mode> modes;
  std::vector<std::uint64_t> seeds;
  std::vector<RunReport> runs;                  ///< seed-major, then modes
  std::vector<ReducedProtocolReport> reduced;   ///< one per seed
  std::vector<Aggregate> aggregates;
  std::string config_hash;
  std::string version;

  bool empty() const noexcept { return runs.empty() && reduced.empty(); }
  /// Recomputes `aggregates` from the per-run rows.
  void aggregate();
  const Aggregate* find(const std::string& row, const std::string& column,
                        const std::string& split, const std::string& metric) const;

  /// `seed,generation,mode,split,metric,value` over every run.
  std::string runs_csv() const;
  /// `row,column,split,metric,n,mean,std,ci95`.
  std::string aggregates_csv() const;
  std::string to_json() const;
};

/// Library version baked in at build time.
const char* version() noexcept;

/// Layouts: table1, appendixA, table3, csv, json. Returns the files written to
/// `dir`. Throws ValidationError listing what the bundle lacks for the layout;
/// nothing is written in that case.
std::vector<std::filesystem::path> render_report(const RunReportBundle& bundle,
                                                 const std::string& layout,
                                                 const std::filesystem::path& dir);

/// Table text for one layout without touching the filesystem.
std::string render_layout(const RunReportBundle& bundle, const std::string& layout);

/// Reads a bundle.json written by the json layout.
RunReportBundle load_bundle_json(const std::filesystem::path& path);

}  // namespace atso
