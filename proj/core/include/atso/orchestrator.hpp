#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atso/datasets.hpp"
#include "atso/learners.hpp"
#include "atso/metrics.hpp"

namespace atso {

enum class Mode { self_learning, stso, atso };

const char* to_string(Mode m) noexcept;
/// Accepts "self_learning", "stso", "atso".
Mode mode_from_string(const std::string& s);

struct RunHyper {
  /// input_channels and num_classes are taken from the task at run time.
  ArchSpec arch;
  TrainHyper initial{80, 0.2, 64, 1e-4, LrSchedule::linear};
  TrainHyper student{6, 0.2, 64, 1e-4, LrSchedule::linear};
  /// Top layers re-initialized by from-scratch students (STSO, ATSO and the
  /// final merge). 0 reuses the teacher's weights; >= 2 is a full restart.
  std::size_t scratch_depth = 2;
  /// Train the two ATSO subset students on separate threads.
  bool concurrent = true;
  AbsentClassPolicy absent_policy = AbsentClassPolicy::exclude;
  /// When set, pseudo labels live in the mapping's target space and their
  /// loss is computed on grouped class scores.
  std::optional<ClassMapping> loss_mapping;

  void validate() const;
};

/// Seeds for every stream of one run. Data, partition and M0 seeds do not
/// depend on the mode, so modes compared under one base seed share M0.
struct RunSeeds {
  std::uint64_t base = 0;

  std::uint64_t partition() const noexcept { return derive_seed(base, "partition"); }
  std::uint64_t initial() const noexcept { return derive_seed(base, "initial"); }
  std::uint64_t train(Mode m) const noexcept {
    return derive_seed(derive_seed(base, "train"), to_string(m));
  }
};

struct LedgerEntry {
  std::string sample_id;
  int generation = 0;
  std::string producer_id;
  std::uint64_t producer_fingerprint = 0;
  int subset = 0;  ///< 0 when R is not partitioned
  std::uint64_t label_hash = 0;
  std::shared_ptr<const LabelMap> label;
};

/// Current pseudo label per reference sample plus an append-only ledger.
class PseudoLabelStore {
 public:
  struct Entry {
    std::shared_ptr<const LabelMap> label;
    std::string producer_id;
    int generation = 0;
    int subset = 0;
  };

  void write(const std::string& sample_id, LabelMap label, const Model& producer, int generation,
             int subset);
  const Entry* find(std::string_view sample_id) const;
  const std::map<std::string, Entry, std::less<>>& entries() const noexcept { return entries_; }
  const std::vector<LedgerEntry>& history() const noexcept { return history_; }
  bool empty() const noexcept { return entries_.empty(); }

  /// Ledger as JSON (labels referenced by hash).
  std::string ledger_json() const;
  /// Current labels as mask files plus `ledger.json`.
  void save(const std::filesystem::path& dir) const;

 private:
  std::map<std::string, Entry, std::less<>> entries_;
  std::vector<LedgerEntry> history_;
};

/// One row of a run report. Scores are in [0, 1].
struct GenerationReport {
  int t = 0;
  std::string row;  ///< "G0".."GT", or "final" for the ATSO merge model
  Mode mode = Mode::atso;
  double reference = 0.0;
  std::optional<std::array<double, 2>> subsets;
  double test = 0.0;
  std::optional<double> test_global_dsc;  ///< binary tasks
  /// Dataset-level IoU per class on E (many-class tasks, single-model rows).
  std::vector<std::optional<double>> class_iou;
  std::optional<double> test_reduced_miou;  ///< when a loss mapping is active
  double wall_time = 0.0;                   ///< seconds; excluded from deterministic output
};

struct AuditResult {
  std::size_t ledger_entries = 0;
  std::size_t cross_subset_violations = 0;
  bool merge_fingerprint_ok = true;
  std::size_t self_learning_violations = 0;
  std::size_t stso_violations = 0;
  std::size_t training_truth_reads = 0;
  std::vector<std::string> messages;

  bool ok() const noexcept {
    return cross_subset_violations == 0 && merge_fingerprint_ok && self_learning_violations == 0 &&
           stso_violations == 0 && training_truth_reads == 0;
  }
};

/// Mutable driver state of one run. `labeled` and `pool` must outlive it.
struct RunState {
  Mode mode = Mode::atso;
  int t = 0;
  int T = 0;
  std::span<const Sample> labeled;     ///< S
  const DatasetBundle* pool = nullptr;  ///< R, E and evaluation-only truth
  RunHyper hyper;
  RunSeeds seeds;
  std::uint64_t train_seed = 0;
  std::string id_prefix;
  const Learner* learner = nullptr;
  ScoreMetric metric = ScoreMetric::dsc;

  std::optional<PartitionSpec> partition;
  ModelPtr m0;
  ModelPtr current;                   ///< M_t (self-learning, STSO)
  std::array<ModelPtr, 2> subset_models;  ///< M_t^(1), M_t^(2) (ATSO)
  ModelPtr final_model;
  std::vector<ModelPtr> chain;        ///< model of each generation, self-learning/STSO
  std::map<std::string, ModelPtr> registry;
  PseudoLabelStore store;
  std::vector<GenerationReport> reports;
  std::vector<CrossEvalMatrix> cross_eval;
  std::size_t truth_reads_at_start = 0;
};

struct RunOptions {
  /// Reuse an already trained M0 (must come from train_initial on the same S).
  ModelPtr m0;
  const Learner* learner = nullptr;
  std::string id_prefix;
};

/// M0 trained from scratch on S only.
ModelPtr train_initial(std::span<const Sample> labeled, const RunHyper& hyper, std::uint64_t seed,
                       const Learner& learner = default_learner(), const std::string& id = "M0");

/// Trains (or adopts) M0, fixes the ATSO partition and records the G0 row.
RunState init_run(Mode mode, std::span<const Sample> labeled, const DatasetBundle& pool, int T,
                  RunHyper hyper, std::uint64_t seed, const RunOptions& options = {});

/// Labels all of R with M_t; trains M_{t+1} continued from M_t.
void self_learning_round(RunState& state);
/// As self_learning_round, but the student restarts per scratch_depth.
void stso_round(RunState& state);
/// R^(1) labeled by M_t^(2), R^(2) by M_t^(1); both students restart on S
/// plus their own subset.
void atso_generation(RunState& state);
/// Refreshes both subsets from the final subset models under the cross-subset
/// rule and trains the merge model on S ∪ R^(1) ∪ R^(2). With T = 0 the store
/// stays empty and the merge model sees S only.
ModelPtr final_merge_train(RunState& state);

AuditResult audit_run(const RunState& state);

/// One scalar of a run report: `split` is reference, reference_1,
/// reference_2 or test; `metric` names the score.
struct ReportCell {
  std::string row;
  Mode mode = Mode::atso;
  std::string split;
  std::string metric;
  double value = 0.0;
};

struct RunReport {
  Mode mode = Mode::atso;
  std::string experiment = "standard";
  int T = 0;
  std::uint64_t seed = 0;
  ScoreMetric metric = ScoreMetric::dsc;
  std::uint32_t num_classes = 2;
  std::vector<GenerationReport> generations;
  std::vector<CrossEvalMatrix> cross_eval;
  std::optional<PartitionSpec> partition;
  std::string final_model_id;
  ModelPtr final_model;
  std::map<std::string, ModelPtr> models;
  PseudoLabelStore store;
  AuditResult audit;

  /// Every reported scalar, in generations_csv order.
  std::vector<ReportCell> cells() const;
  /// `generation,mode,split,metric,value`.
  std::string generations_csv() const;
  /// Cross-subset matrices, one row per generation (ATSO only).
  std::string cross_eval_csv() const;
  std::string timing_csv() const;
  std::string to_json() const;
  /// Writes the CSVs, report JSON, models and the pseudo-label store.
  void save(const std::filesystem::path& dir, bool include_models = true) const;

  const GenerationReport& last() const { return generations.back(); }
  const GenerationReport* row(const std::string& name) const;
};

RunReport finish_run(RunState&& state, std::string experiment);

RunReport run(Mode mode, const DatasetBundle& bundle, int T, const RunHyper& hyper,
              std::uint64_t seed, const RunOptions& options = {});

/// M0 trained on the fully labeled source S; R and E come from the target.
RunReport run_transfer(const DatasetBundle& source, const DatasetBundle& target, Mode mode, int T,
                       const RunHyper& hyper, std::uint64_t seed,
                       const RunOptions& options = {});

struct ReducedProtocolSpec {
  int T = 3;                    ///< generations of every stage-1 run
  std::size_t stage2_rounds = 1;
  bool include_fresh_stage2 = true;
};

/// One row of the class-wise IoU table.
struct ClassIouRow {
  std::string tag;  ///< STSO_K, ATSO_K, STSO_k, ATSO_k, ATSO_{k->K}, ATSO_{k->K}^fresh
  std::vector<std::optional<double>> class_iou;
  double miou = 0.0;
  double reduced_miou = 0.0;
};

struct ReducedProtocolReport {
  std::uint32_t num_classes = 0;
  std::uint32_t reduced_classes = 0;
  std::uint64_t seed = 0;
  std::vector<ClassIouRow> rows;
  std::vector<RunReport> runs;  ///< stage-1 runs in row order

  const ClassIouRow& row(const std::string& tag) const;
  std::string to_csv() const;
  std::string to_json() const;
};

ReducedProtocolReport run_reduced_class_protocol(const DatasetBundle& source,
                                                 const DatasetBundle& target,
                                                 const ClassMapping& mapping,
                                                 const ReducedProtocolSpec& stages,
                                                 const RunHyper& hyper, std::uint64_t seed);

}  // namespace atso
