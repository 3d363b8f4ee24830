#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "atso/datasets.hpp"
#include "atso/noise_analysis.hpp"
#include "atso/orchestrator.hpp"
#include "atso/report.hpp"

namespace atso {

enum class ExperimentKind { standard, transfer, reduced };

const char* to_string(ExperimentKind k) noexcept;

struct SweepSpec {
  std::size_t num_seeds = 1;
  std::uint64_t base_seed = 0;  ///< seed i of a sweep is base_seed + i
};

/// A parsed run/sweep configuration. Relative paths are resolved against the
/// config file's directory.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::standard;
  std::vector<Mode> modes{Mode::self_learning, Mode::stso, Mode::atso};
  int T = 3;
  std::uint64_t seed = 0;

  /// Task of S, R and E (standard), or of the target domain (transfer,
  /// reduced).
  GeneratorSpec generator;
  /// Fully labeled source domain. Defaults to `generator` with every sample
  /// in S (labeled + reference + test of the target spec).
  std::optional<GeneratorSpec> source_generator;
  ShiftSpec shift;
  /// Load data instead of generating it. For transfer/reduced, `manifest` is
  /// the source and `target_manifest` the target.
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> target_manifest;

  RunHyper hyper;
  std::optional<std::filesystem::path> class_mapping_path;
  std::optional<ClassMapping> class_mapping;
  ReducedProtocolSpec reduced;

  std::filesystem::path output_dir = "atso-out";
  SweepSpec sweep;
  std::vector<std::string> layouts{"table1", "csv", "json"};
  PropagationSpec propagation;

  /// Canonical JSON of every setting that can change results (not
  /// output_dir or hyper.concurrent); its hash identifies the config.
  std::string canonical_json() const;
  std::string hash() const;
};

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::filesystem::path& base_dir = {});
/// Throws ValidationError naming the offending field.
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Data of one experiment instance. For the standard experiment `source` is
/// empty and S, R, E all live in `target`.
struct ExperimentData {
  std::optional<DatasetBundle> source;
  DatasetBundle target;
};

/// Generated or loaded data for `seed`.
ExperimentData build_data(const ExperimentConfig& config, std::uint64_t seed);

/// Every configured mode (or the reduced protocol) for one seed.
RunReportBundle run_experiment(const ExperimentConfig& config, std::uint64_t seed);

using SweepProgress = std::function<void(std::uint64_t seed, const RunReportBundle& partial)>;

/// Runs seeds base_seed .. base_seed + num_seeds - 1 and aggregates. With a
/// non-empty `persist_dir` each seed's runs are written under
/// `persist_dir/seed-<seed>/` as soon as they finish.
RunReportBundle sweep(const ExperimentConfig& config, const std::filesystem::path& persist_dir = {},
                      const SweepProgress& progress = {});

}  // namespace atso
