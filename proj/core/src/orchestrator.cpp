#include "atso/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <future>
#include <set>

#include "atso/error.hpp"
#include "atso/mask_io.hpp"
#include "json_codec.hpp"

namespace atso {

using detail::Json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string short_name(Mode m) {
  switch (m) {
    case Mode::self_learning:
      return "sl";
    case Mode::stso:
      return "stso";
    case Mode::atso:
      return "atso";
  }
  return "?";
}

ArchSpec arch_for(const RunHyper& hyper, std::span<const Sample> labeled, std::uint32_t k) {
  ArchSpec arch = hyper.arch;
  arch.input_channels = labeled.front().image.channels;
  arch.num_classes = k;
  return arch;
}

const Learner& learner_of(const RunState& s) { return s.learner ? *s.learner : default_learner(); }

// Pseudo label for one image, in reduced space when a loss mapping is active.
LabelMap pseudo_label(const RunState& s, const Model& teacher, const Image& image) {
  Prediction p = learner_of(s).predict(teacher, image);
  if (!s.hyper.loss_mapping) return std::move(p.label);
  const auto& m = *s.hyper.loss_mapping;
  return argmax_labels(reduce_scores(p.scores, teacher.arch.num_classes, m), image.height,
                       image.width, m.target_classes);
}

// Students that restart per scratch_depth.
InitPolicy scratch_init(const RunState& s, const ModelPtr& teacher) {
  const std::size_t layers = s.hyper.arch.layer_count();
  if (s.hyper.scratch_depth >= layers) return InitPolicy::fresh();
  return InitPolicy::partial(teacher, s.hyper.scratch_depth);
}

TrainSet build_train_set(const RunState& s, const std::vector<std::string>* subset) {
  TrainSet ts;
  ts.loss_class_mapping = s.hyper.loss_mapping;
  for (const auto& sample : s.labeled) {
    ts.items.push_back({&sample, *sample.label, LabelSource::ground_truth});
  }
  auto add = [&](const std::string& id) {
    const auto* e = s.store.find(id);
    if (!e) return;
    const Sample* sample = s.pool->find(id);
    if (!sample) throw ValidationError("store", "unknown sample '" + id + "'");
    ts.items.push_back({sample, *e->label, LabelSource::pseudo});
  };
  if (subset) {
    for (const auto& id : *subset) add(id);
  } else {
    for (const auto& sample : s.pool->reference()) add(sample.id);
  }
  return ts;
}

ModelPtr fit(RunState& s, const TrainSet& ts, const InitPolicy& init, std::uint64_t seed,
             const std::string& id) {
  ScopedAccessPhase phase(AccessPhase::training);
  const ArchSpec arch = arch_for(s.hyper, s.labeled, s.pool->num_classes());
  auto m = std::make_shared<const Model>(
      learner_of(s).train(arch, ts, init, s.hyper.student, seed, id));
  return m;
}

void register_model(RunState& s, const ModelPtr& m) {
  if (!s.registry.emplace(m->model_id, m).second) {
    throw ValidationError("model_id", "duplicate model id '" + m->model_id + "'");
  }
}

std::uint64_t round_seed(const RunState& s, int generation, std::uint64_t slot) {
  return derive_seed(derive_seed(s.train_seed, static_cast<std::uint64_t>(generation)), slot);
}

// Scores of one model on R, its subsets and E.
GenerationReport evaluate_single(const RunState& s, const Model& m, int t, std::string row) {
  GenerationReport g;
  g.t = t;
  g.row = std::move(row);
  g.mode = s.mode;
  const Learner& learner = learner_of(s);
  const DatasetBundle& pool = *s.pool;
  ScopedAccessPhase phase(AccessPhase::evaluation);

  std::map<std::string, double, std::less<>> ref_scores;
  double ref_sum = 0.0;
  for (const auto& sample : pool.reference()) {
    const double v = score(learner.predict(m, sample.image).label, pool.reference_truth(sample.id),
                           s.metric, s.hyper.absent_policy);
    ref_scores.emplace(sample.id, v);
    ref_sum += v;
  }
  g.reference = ref_sum / static_cast<double>(pool.reference().size());
  if (s.partition) {
    std::array<double, 2> sub{};
    for (int i = 0; i < 2; ++i) {
      const auto& ids = s.partition->subset(i + 1);
      double sum = 0.0;
      for (const auto& id : ids) sum += ref_scores.at(id);
      sub[static_cast<std::size_t>(i)] = sum / static_cast<double>(ids.size());
    }
    g.subsets = sub;
  }

  const std::uint32_t K = pool.num_classes();
  ConfusionMatrix cm(K);
  std::optional<ConfusionMatrix> reduced_cm;
  if (s.hyper.loss_mapping) reduced_cm.emplace(s.hyper.loss_mapping->target_classes);
  DiceCounts pooled;
  double test_sum = 0.0;
  for (const auto& sample : pool.test()) {
    const LabelMap pred = learner.predict(m, sample.image).label;
    test_sum += score(pred, *sample.label, s.metric, s.hyper.absent_policy);
    if (K == 2) pooled += dice_counts(pred, *sample.label);
    cm.add(pred, *sample.label);
    if (reduced_cm) {
      reduced_cm->add(reduce_classes(pred, *s.hyper.loss_mapping),
                      reduce_classes(*sample.label, *s.hyper.loss_mapping));
    }
  }
  g.test = test_sum / static_cast<double>(pool.test().size());
  if (K == 2) {
    g.test_global_dsc = pooled.score();
  } else {
    for (std::uint32_t c = 0; c < K; ++c) g.class_iou.push_back(cm.class_iou(c));
  }
  if (reduced_cm) g.test_reduced_miou = reduced_cm->miou(s.hyper.absent_policy);
  return g;
}

Predictor predictor_for(const RunState& s, const ModelPtr& m) {
  if (!m) return {};
  const Learner* learner = &learner_of(s);
  return [learner, m](const Image& image) { return learner->predict(*m, image).label; };
}

GenerationReport evaluate_pair(RunState& s, int t) {
  const CrossEvalMatrix cm =
      cross_eval_matrix(predictor_for(s, s.subset_models[0]), predictor_for(s, s.subset_models[1]),
                        *s.partition, *s.pool, t, s.metric);
  s.cross_eval.push_back(cm);
  GenerationReport g;
  g.t = t;
  g.row = "G" + std::to_string(t);
  g.mode = s.mode;
  g.reference = cm.merged_reference_score;
  g.subsets = std::array<double, 2>{cm.cells[1][0], cm.cells[0][1]};
  g.test = cm.test_score;
  if (s.pool->num_classes() == 2) {
    ScopedAccessPhase phase(AccessPhase::evaluation);
    double sum = 0.0;
    for (const auto& m : s.subset_models) {
      DiceCounts pooled;
      for (const auto& sample : s.pool->test()) {
        pooled += dice_counts(learner_of(s).predict(*m, sample.image).label, *sample.label);
      }
      sum += pooled.score();
    }
    g.test_global_dsc = sum / 2.0;
  }
  return g;
}

template <typename F>
void with_generation_context(const RunState& s, F&& step) {
  const std::string ctx =
      std::string(to_string(s.mode)) + " generation " + std::to_string(s.t + 1) + ": ";
  try {
    step();
  } catch (const ValidationError& e) {
    throw ValidationError(e.field(), ctx + e.message());
  } catch (const TrainingError& e) {
    throw TrainingError(ctx + e.what());
  } catch (const IoError& e) {
    throw IoError(e.field(), ctx + e.message());
  }
}

void synchronous_round(RunState& s, bool continual) {
  if (s.t >= s.T) throw ValidationError("t", "all " + std::to_string(s.T) + " generations done");
  if (!s.current) throw ValidationError("models", "no current model");
  const auto start = Clock::now();
  const int gen = s.t + 1;
  const ModelPtr teacher = s.current;
  {
    ScopedAccessPhase phase(AccessPhase::training);
    for (const auto& sample : s.pool->reference()) {
      s.store.write(sample.id, pseudo_label(s, *teacher, sample.image), *teacher, gen, 0);
    }
  }
  const TrainSet ts = build_train_set(s, nullptr);
  const InitPolicy init = continual ? InitPolicy::continued(teacher) : scratch_init(s, teacher);
  const std::string id = s.id_prefix + short_name(s.mode) + "-G" + std::to_string(gen);
  ModelPtr student = fit(s, ts, init, round_seed(s, gen, 0), id);
  register_model(s, student);
  s.current = student;
  s.chain.push_back(student);
  s.t = gen;
  GenerationReport g = evaluate_single(s, *student, gen, "G" + std::to_string(gen));
  g.wall_time = seconds_since(start);
  s.reports.push_back(std::move(g));
}

void require_mode(const RunState& s, Mode m, const char* op) {
  if (s.mode != m) {
    throw ValidationError("mode", std::string(op) + " requires mode " + to_string(m) + ", state is " +
                                      to_string(s.mode));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

const char* to_string(Mode m) noexcept {
  switch (m) {
    case Mode::self_learning:
      return "self_learning";
    case Mode::stso:
      return "stso";
    case Mode::atso:
      return "atso";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "self_learning") return Mode::self_learning;
  if (s == "stso") return Mode::stso;
  if (s == "atso") return Mode::atso;
  throw ValidationError("mode", "expected self_learning|stso|atso, got '" + s + "'");
}

void RunHyper::validate() const {
  arch.features.validate();
  initial.validate();
  student.validate();
  if (scratch_depth > 2) throw ValidationError("scratch_depth", "must be 0, 1 or 2");
  if (loss_mapping) loss_mapping->validate();
}

// ---------------------------------------------------------------------------

void PseudoLabelStore::write(const std::string& sample_id, LabelMap label, const Model& producer,
                             int generation, int subset) {
  auto shared = std::make_shared<const LabelMap>(std::move(label));
  const auto bytes = encode_mask(*shared);
  LedgerEntry e;
  e.sample_id = sample_id;
  e.generation = generation;
  e.producer_id = producer.model_id;
  e.producer_fingerprint = producer.provenance.dataset_fingerprint;
  e.subset = subset;
  e.label_hash = fnv1a(std::span<const unsigned char>(bytes));
  e.label = shared;
  history_.push_back(std::move(e));
  entries_[sample_id] = Entry{std::move(shared), producer.model_id, generation, subset};
}

const PseudoLabelStore::Entry* PseudoLabelStore::find(std::string_view sample_id) const {
  auto it = entries_.find(sample_id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string PseudoLabelStore::ledger_json() const {
  Json arr = Json::array();
  for (const auto& e : history_) {
    arr.push_back({{"sample_id", e.sample_id},
                   {"generation", e.generation},
                   {"producer_id", e.producer_id},
                   {"producer_fingerprint", detail::seed_to_json(e.producer_fingerprint)},
                   {"subset", e.subset},
                   {"label_hash", detail::seed_to_json(e.label_hash)}});
  }
  return Json{{"entries", arr}}.dump(2) + "\n";
}

void PseudoLabelStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [id, e] : entries_) save_mask(*e.label, dir / (id + ".msk"));
  detail::write_file_atomic((dir / "ledger.json").string(), ledger_json());
}

// ---------------------------------------------------------------------------

ModelPtr train_initial(std::span<const Sample> labeled, const RunHyper& hyper, std::uint64_t seed,
                       const Learner& learner, const std::string& id) {
  if (labeled.empty()) throw ValidationError("labeled", "S is empty; M0 needs labeled data");
  TrainSet ts;
  for (const auto& s : labeled) {
    if (!s.label) throw ValidationError("labeled", "sample '" + s.id + "' has no label");
    ts.items.push_back({&s, *s.label, LabelSource::ground_truth});
  }
  const ArchSpec arch = arch_for(hyper, labeled, labeled.front().label->num_classes);
  ScopedAccessPhase phase(AccessPhase::training);
  return std::make_shared<const Model>(
      learner.train(arch, ts, InitPolicy::fresh(), hyper.initial, seed, id));
}

RunState init_run(Mode mode, std::span<const Sample> labeled, const DatasetBundle& pool, int T,
                  RunHyper hyper, std::uint64_t seed, const RunOptions& options) {
  hyper.validate();
  if (T < 0) throw ValidationError("T", "must be >= 0");
  if (labeled.empty()) throw ValidationError("labeled", "S is empty");
  if (pool.reference().empty()) throw ValidationError("reference", "R is empty");
  if (pool.test().empty()) throw ValidationError("test", "E is empty");
  if (labeled.front().image.channels != pool.reference().front().image.channels) {
    throw ValidationError("labeled", "S and R differ in channel count");
  }
  if (labeled.front().label && labeled.front().label->num_classes != pool.num_classes()) {
    throw ValidationError("labeled", "S and R differ in class count");
  }
  if (hyper.loss_mapping && hyper.loss_mapping->source_classes != pool.num_classes()) {
    throw ValidationError("class_mapping.source_classes",
                          "mapping expects " +
                              std::to_string(hyper.loss_mapping->source_classes) +
                              " classes, task has " + std::to_string(pool.num_classes()));
  }

  RunState s;
  s.mode = mode;
  s.T = T;
  s.labeled = labeled;
  s.pool = &pool;
  s.hyper = std::move(hyper);
  s.hyper.arch = arch_for(s.hyper, labeled, pool.num_classes());
  s.seeds = RunSeeds{seed};
  s.train_seed = s.seeds.train(mode);
  s.id_prefix = options.id_prefix;
  s.learner = options.learner ? options.learner : &default_learner();
  s.metric = default_metric(pool.num_classes());
  s.truth_reads_at_start = pool.audit().reads(AccessPhase::training);

  const auto start = Clock::now();
  s.m0 = options.m0 ? options.m0
                    : train_initial(labeled, s.hyper, s.seeds.initial(), *s.learner,
                                    s.id_prefix + "M0");
  register_model(s, s.m0);
  s.current = s.m0;
  s.chain.push_back(s.m0);
  if (mode == Mode::atso) {
    s.partition = partition_reference(pool, s.seeds.partition());
    s.subset_models = {s.m0, s.m0};
    s.cross_eval.push_back(cross_eval_matrix(predictor_for(s, s.m0), predictor_for(s, s.m0),
                                             *s.partition, pool, 0, s.metric));
  }
  GenerationReport g0 = evaluate_single(s, *s.m0, 0, "G0");
  g0.wall_time = seconds_since(start);
  s.reports.push_back(std::move(g0));
  return s;
}

void self_learning_round(RunState& state) {
  require_mode(state, Mode::self_learning, "self_learning_round");
  synchronous_round(state, true);
}

void stso_round(RunState& state) {
  require_mode(state, Mode::stso, "stso_round");
  synchronous_round(state, false);
}

void atso_generation(RunState& s) {
  require_mode(s, Mode::atso, "atso_generation");
  if (s.t >= s.T) throw ValidationError("t", "all " + std::to_string(s.T) + " generations done");
  for (int i = 0; i < 2; ++i) {
    if (!s.subset_models[static_cast<std::size_t>(i)]) {
      throw ValidationError("models", "missing subset-" + std::to_string(i + 1) +
                                          " model at generation " + std::to_string(s.t));
    }
  }
  const auto start = Clock::now();
  const int gen = s.t + 1;
  const auto& part = *s.partition;
  {
    ScopedAccessPhase phase(AccessPhase::training);
    for (int i = 1; i <= 2; ++i) {
      const Model& producer = *s.subset_models[static_cast<std::size_t>(2 - i)];
      for (const auto& id : part.subset(i)) {
        s.store.write(id, pseudo_label(s, producer, s.pool->find(id)->image), producer, gen, i);
      }
    }
  }
  const TrainSet ts1 = build_train_set(s, &part.subset1_ids);
  const TrainSet ts2 = build_train_set(s, &part.subset2_ids);
  const InitPolicy init1 = scratch_init(s, s.subset_models[0]);
  const InitPolicy init2 = scratch_init(s, s.subset_models[1]);
  const std::string base = s.id_prefix + "atso-G" + std::to_string(gen) + "-s";
  ModelPtr m1, m2;
  if (s.hyper.concurrent) {
    auto f1 = std::async(std::launch::async,
                         [&] { return fit(s, ts1, init1, round_seed(s, gen, 1), base + "1"); });
    auto f2 = std::async(std::launch::async,
                         [&] { return fit(s, ts2, init2, round_seed(s, gen, 2), base + "2"); });
    m1 = f1.get();
    m2 = f2.get();
  } else {
    m1 = fit(s, ts1, init1, round_seed(s, gen, 1), base + "1");
    m2 = fit(s, ts2, init2, round_seed(s, gen, 2), base + "2");
  }
  register_model(s, m1);
  register_model(s, m2);
  s.subset_models = {m1, m2};
  s.t = gen;
  GenerationReport g = evaluate_pair(s, gen);
  g.wall_time = seconds_since(start);
  s.reports.push_back(std::move(g));
}

ModelPtr final_merge_train(RunState& s) {
  require_mode(s, Mode::atso, "final_merge_train");
  if (s.t != s.T) {
    throw ValidationError("t", "final merge needs t = T = " + std::to_string(s.T) + ", got " +
                                   std::to_string(s.t));
  }
  if (s.final_model) throw ValidationError("final_model", "merge already trained");
  const auto start = Clock::now();
  const int gen = s.T + 1;
  if (s.T > 0) {
    ScopedAccessPhase phase(AccessPhase::training);
    for (int i = 1; i <= 2; ++i) {
      const Model& producer = *s.subset_models[static_cast<std::size_t>(2 - i)];
      for (const auto& id : s.partition->subset(i)) {
        s.store.write(id, pseudo_label(s, producer, s.pool->find(id)->image), producer, gen, i);
      }
    }
  }
  const TrainSet ts = build_train_set(s, nullptr);
  ModelPtr merged =
      fit(s, ts, scratch_init(s, s.m0), round_seed(s, gen, 3), s.id_prefix + "atso-final");
  register_model(s, merged);
  s.final_model = merged;
  GenerationReport g = evaluate_single(s, *merged, s.T, "final");
  g.wall_time = seconds_since(start);
  s.reports.push_back(std::move(g));
  return merged;
}

AuditResult audit_run(const RunState& s) {
  AuditResult a;
  a.ledger_entries = s.store.history().size();
  a.training_truth_reads = s.pool->audit().reads(AccessPhase::training) - s.truth_reads_at_start;
  if (a.training_truth_reads) {
    a.messages.push_back(std::to_string(a.training_truth_reads) +
                         " reference ground-truth reads during training");
  }
  auto producer = [&](const std::string& id) -> ModelPtr {
    auto it = s.registry.find(id);
    return it == s.registry.end() ? nullptr : it->second;
  };

  if (s.mode == Mode::atso && s.partition) {
    const std::set<std::string> sub[2] = {
        {s.partition->subset1_ids.begin(), s.partition->subset1_ids.end()},
        {s.partition->subset2_ids.begin(), s.partition->subset2_ids.end()}};
    for (const auto& e : s.store.history()) {
      const ModelPtr m = producer(e.producer_id);
      bool ok = m && (e.subset == 1 || e.subset == 2);
      if (ok) {
        for (const auto& id : m->provenance.train_ids) {
          if (sub[e.subset - 1].count(id)) {
            ok = false;
            break;
          }
        }
        ok = ok && sub[e.subset - 1].count(e.sample_id) == 1;
      }
      if (!ok) {
        ++a.cross_subset_violations;
        a.messages.push_back("cross-subset rule broken for '" + e.sample_id + "' at generation " +
                             std::to_string(e.generation));
      }
    }
    if (s.final_model) {
      std::vector<std::string> want;
      for (const auto& x : s.labeled) want.push_back(x.id);
      if (s.T > 0) {
        want.insert(want.end(), s.partition->subset1_ids.begin(), s.partition->subset1_ids.end());
        want.insert(want.end(), s.partition->subset2_ids.begin(), s.partition->subset2_ids.end());
      }
      std::sort(want.begin(), want.end());
      a.merge_fingerprint_ok = s.final_model->provenance.train_ids == want;
      if (!a.merge_fingerprint_ok) a.messages.push_back("merge model training set mismatch");
    }
  }

  if (s.mode == Mode::self_learning || s.mode == Mode::stso) {
    const bool full_restart = s.hyper.scratch_depth >= s.hyper.arch.layer_count();
    for (const auto& e : s.store.history()) {
      const auto g = static_cast<std::size_t>(e.generation);
      if (g < 1 || g > s.chain.size() || s.chain[g - 1]->model_id != e.producer_id) {
        ++(s.mode == Mode::self_learning ? a.self_learning_violations : a.stso_violations);
        a.messages.push_back("label for '" + e.sample_id + "' at generation " +
                             std::to_string(e.generation) + " not produced by M_" +
                             std::to_string(e.generation - 1));
      }
    }
    for (std::size_t g = 1; g < s.chain.size(); ++g) {
      const auto& pv = s.chain[g]->provenance;
      if (s.mode == Mode::self_learning) {
        if (pv.parent_id != s.chain[g - 1]->model_id ||
            pv.init_policy.rfind("continued_from:", 0) != 0) {
          ++a.self_learning_violations;
          a.messages.push_back("self-learning student " + s.chain[g]->model_id +
                               " not continued from its teacher");
        }
      } else if (full_restart && pv.init_policy != "fresh") {
        ++a.stso_violations;
        a.messages.push_back("STSO student " + s.chain[g]->model_id + " not fresh");
      }
    }
  }
  return a;
}

// ---------------------------------------------------------------------------

const GenerationReport* RunReport::row(const std::string& name) const {
  for (const auto& g : generations) {
    if (g.row == name) return &g;
  }
  return nullptr;
}

std::vector<ReportCell> RunReport::cells() const {
  std::vector<ReportCell> out;
  const std::string metric_name = to_string(metric);
  for (const auto& g : generations) {
    auto add = [&](const char* split, std::string name, double v) {
      out.push_back({g.row, g.mode, split, std::move(name), v});
    };
    add("reference", metric_name, g.reference);
    if (g.subsets) {
      add("reference_1", metric_name, (*g.subsets)[0]);
      add("reference_2", metric_name, (*g.subsets)[1]);
    }
    add("test", metric_name, g.test);
    if (g.test_global_dsc) add("test", "global_dsc", *g.test_global_dsc);
    for (std::size_t c = 0; c < g.class_iou.size(); ++c) {
      if (g.class_iou[c]) add("test", "iou_" + std::to_string(c), *g.class_iou[c]);
    }
    if (g.test_reduced_miou) add("test", "reduced_miou", *g.test_reduced_miou);
  }
  return out;
}

std::string RunReport::generations_csv() const {
  std::string out = "generation,mode,split,metric,value\n";
  for (const auto& c : cells()) {
    out += c.row + "," + to_string(c.mode) + "," + c.split + "," + c.metric + "," + fmt6(c.value) +
           "\n";
  }
  return out;
}

std::string RunReport::cross_eval_csv() const {
  std::string out = CrossEvalMatrix::csv_header() + "\n";
  for (const auto& m : cross_eval) out += m.csv_row() + "\n";
  return out;
}

std::string RunReport::timing_csv() const {
  std::string out = "generation,mode,wall_time_s\n";
  for (const auto& g : generations) {
    out += g.row + "," + to_string(g.mode) + "," + fmt6(g.wall_time) + "\n";
  }
  return out;
}

std::string RunReport::to_json() const {
  Json gens = Json::array();
  for (const auto& g : generations) {
    Json j{{"t", g.t}, {"row", g.row}, {"mode", to_string(g.mode)}, {"reference", g.reference},
           {"test", g.test}};
    if (g.subsets) j["subsets"] = {(*g.subsets)[0], (*g.subsets)[1]};
    if (g.test_global_dsc) j["test_global_dsc"] = *g.test_global_dsc;
    if (!g.class_iou.empty()) {
      Json c = Json::array();
      for (const auto& v : g.class_iou) c.push_back(v ? Json(*v) : Json(nullptr));
      j["class_iou"] = c;
    }
    if (g.test_reduced_miou) j["test_reduced_miou"] = *g.test_reduced_miou;
    gens.push_back(std::move(j));
  }
  Json cross = Json::array();
  for (const auto& m : cross_eval) {
    cross.push_back({{"generation", m.generation},
                     {"M1@R1", m.cells[0][0]},
                     {"M2@R1", m.cells[1][0]},
                     {"M1@R2", m.cells[0][1]},
                     {"M2@R2", m.cells[1][1]},
                     {"merged_R", m.merged_reference_score},
                     {"test", m.test_score}});
  }
  Json models_j = Json::object();
  for (const auto& [id, m] : models) {
    const auto& pv = m->provenance;
    models_j[id] = {{"init_policy", pv.init_policy},
                    {"parent_id", pv.parent_id},
                    {"seed", detail::seed_to_json(pv.seed)},
                    {"dataset_fingerprint", detail::seed_to_json(pv.dataset_fingerprint)},
                    {"train_items", pv.train_ids.size()},
                    {"ground_truth_items", pv.ground_truth_items},
                    {"pseudo_items", pv.pseudo_items},
                    {"epochs", pv.epochs},
                    {"final_loss", pv.loss_history.empty() ? 0.0 : pv.loss_history.back()}};
  }
  Json j{{"mode", to_string(mode)},
         {"experiment", experiment},
         {"T", T},
         {"seed", detail::seed_to_json(seed)},
         {"metric", to_string(metric)},
         {"num_classes", num_classes},
         {"generations", gens},
         {"cross_eval", cross},
         {"final_model_id", final_model_id},
         {"models", models_j},
         {"ledger_entries", store.history().size()},
         {"audit",
          {{"ok", audit.ok()},
           {"ledger_entries", audit.ledger_entries},
           {"cross_subset_violations", audit.cross_subset_violations},
           {"merge_fingerprint_ok", audit.merge_fingerprint_ok},
           {"self_learning_violations", audit.self_learning_violations},
           {"stso_violations", audit.stso_violations},
           {"training_truth_reads", audit.training_truth_reads}}}};
  if (partition) j["partition"] = {{"subset1", partition->subset1_ids}, {"subset2", partition->subset2_ids}};
  return j.dump(2) + "\n";
}

void RunReport::save(const std::filesystem::path& dir, bool include_models) const {
  std::filesystem::create_directories(dir);
  detail::write_file_atomic((dir / "generations.csv").string(), generations_csv());
  if (!cross_eval.empty()) {
    detail::write_file_atomic((dir / "cross_eval.csv").string(), cross_eval_csv());
  }
  detail::write_file_atomic((dir / "timing.csv").string(), timing_csv());
  detail::write_file_atomic((dir / "report.json").string(), to_json());
  if (include_models) {
    for (const auto& [id, m] : models) {
      std::string file = id;
      std::replace(file.begin(), file.end(), '/', '_');
      save_model(*m, dir / "models" / (file + ".model"));
    }
  }
  store.save(dir / "store");
}

RunReport finish_run(RunState&& s, std::string experiment) {
  RunReport r;
  r.audit = audit_run(s);
  r.mode = s.mode;
  r.experiment = std::move(experiment);
  r.T = s.T;
  r.seed = s.seeds.base;
  r.metric = s.metric;
  r.num_classes = s.pool->num_classes();
  r.generations = std::move(s.reports);
  r.cross_eval = std::move(s.cross_eval);
  r.partition = s.partition;
  r.final_model = s.mode == Mode::atso && s.final_model ? s.final_model : s.current;
  r.final_model_id = r.final_model ? r.final_model->model_id : std::string();
  r.models = std::move(s.registry);
  r.store = std::move(s.store);
  return r;
}

namespace {

RunReport drive(Mode mode, std::span<const Sample> labeled, const DatasetBundle& pool, int T,
                const RunHyper& hyper, std::uint64_t seed, const RunOptions& options,
                std::string experiment) {
  RunState s = init_run(mode, labeled, pool, T, hyper, seed, options);
  while (s.t < s.T) {
    with_generation_context(s, [&] {
      switch (mode) {
        case Mode::self_learning:
          self_learning_round(s);
          break;
        case Mode::stso:
          stso_round(s);
          break;
        case Mode::atso:
          atso_generation(s);
          break;
      }
    });
  }
  if (mode == Mode::atso) with_generation_context(s, [&] { final_merge_train(s); });
  return finish_run(std::move(s), std::move(experiment));
}

}  // namespace

RunReport run(Mode mode, const DatasetBundle& bundle, int T, const RunHyper& hyper,
              std::uint64_t seed, const RunOptions& options) {
  return drive(mode, bundle.labeled(), bundle, T, hyper, seed, options, "standard");
}

RunReport run_transfer(const DatasetBundle& source, const DatasetBundle& target, Mode mode, int T,
                       const RunHyper& hyper, std::uint64_t seed, const RunOptions& options) {
  if (source.num_classes() != target.num_classes()) {
    throw ValidationError("target", "source has " + std::to_string(source.num_classes()) +
                                        " classes, target has " +
                                        std::to_string(target.num_classes()));
  }
  return drive(mode, source.labeled(), target, T, hyper, seed, options, "transfer");
}

// ---------------------------------------------------------------------------

const ClassIouRow& ReducedProtocolReport::row(const std::string& tag) const {
  for (const auto& r : rows) {
    if (r.tag == tag) return r;
  }
  throw ValidationError("tag", "no row '" + tag + "'");
}

std::string ReducedProtocolReport::to_csv() const {
  std::string out = "row";
  for (std::uint32_t c = 0; c < num_classes; ++c) out += ",iou_" + std::to_string(c);
  out += ",miou,reduced_miou\n";
  for (const auto& r : rows) {
    out += r.tag;
    for (const auto& v : r.class_iou) out += "," + (v ? fmt6(*v) : std::string());
    out += "," + fmt6(r.miou) + "," + fmt6(r.reduced_miou) + "\n";
  }
  return out;
}

std::string ReducedProtocolReport::to_json() const {
  Json arr = Json::array();
  for (const auto& r : rows) {
    Json c = Json::array();
    for (const auto& v : r.class_iou) c.push_back(v ? Json(*v) : Json(nullptr));
    arr.push_back({{"tag", r.tag}, {"class_iou", c}, {"miou", r.miou}, {"reduced_miou", r.reduced_miou}});
  }
  return Json{{"num_classes", num_classes},
              {"reduced_classes", reduced_classes},
              {"seed", detail::seed_to_json(seed)},
              {"rows", arr}}
             .dump(2) +
         "\n";
}

ReducedProtocolReport run_reduced_class_protocol(const DatasetBundle& source,
                                                 const DatasetBundle& target,
                                                 const ClassMapping& mapping,
                                                 const ReducedProtocolSpec& stages,
                                                 const RunHyper& hyper, std::uint64_t seed) {
  mapping.validate();
  if (mapping.source_classes != target.num_classes()) {
    throw ValidationError("class_mapping.source_classes",
                          "mapping expects " + std::to_string(mapping.source_classes) +
                              " classes, task has " + std::to_string(target.num_classes()));
  }
  if (stages.T < 0) throw ValidationError("stages.T", "must be >= 0");

  ReducedProtocolReport out;
  out.num_classes = target.num_classes();
  out.reduced_classes = mapping.target_classes;
  out.seed = seed;

  RunHyper base = hyper;
  base.loss_mapping.reset();
  base.validate();
  const ModelPtr m0 = train_initial(source.labeled(), base, RunSeeds{seed}.initial(),
                                    default_learner(), "M0");

  // Evaluates a model on the target test set in full and reduced space.
  auto evaluate = [&](const std::string& tag, const Model& m) {
    ScopedAccessPhase phase(AccessPhase::evaluation);
    ConfusionMatrix full(out.num_classes);
    ConfusionMatrix reduced(out.reduced_classes);
    for (const auto& s : target.test()) {
      const LabelMap pred = predict(m, s.image).label;
      full.add(pred, *s.label);
      reduced.add(reduce_classes(pred, mapping), reduce_classes(*s.label, mapping));
    }
    ClassIouRow r;
    r.tag = tag;
    for (std::uint32_t c = 0; c < out.num_classes; ++c) r.class_iou.push_back(full.class_iou(c));
    r.miou = full.miou(hyper.absent_policy);
    r.reduced_miou = reduced.miou(hyper.absent_policy);
    return r;
  };

  struct Stage1 {
    const char* tag;
    Mode mode;
    bool reduced;
  };
  const Stage1 plan[] = {{"STSO_K", Mode::stso, false},
                         {"ATSO_K", Mode::atso, false},
                         {"STSO_k", Mode::stso, true},
                         {"ATSO_k", Mode::atso, true}};
  ModelPtr atso_k_final;
  for (const auto& p : plan) {
    RunHyper h = base;
    if (p.reduced) h.loss_mapping = mapping;
    RunOptions opts;
    opts.m0 = m0;
    opts.id_prefix = std::string(p.tag) + "/";
    RunReport rep = run_transfer(source, target, p.mode, stages.T, h, seed, opts);
    rep.experiment = std::string("reduced:") + p.tag;
    out.rows.push_back(evaluate(p.tag, *rep.final_model));
    if (std::string(p.tag) == "ATSO_k") atso_k_final = rep.final_model;
    out.runs.push_back(std::move(rep));
  }

  // Stage 2: full-class pseudo labels from the reduced-space ATSO model.
  auto stage2 = [&](bool continued, const std::string& tag) {
    ModelPtr teacher = atso_k_final;
    const ArchSpec arch = arch_for(base, source.labeled(), out.num_classes);
    for (std::size_t round = 0; round < stages.stage2_rounds; ++round) {
      std::vector<LabelMap> labels;
      {
        ScopedAccessPhase phase(AccessPhase::training);
        for (const auto& s : target.reference()) labels.push_back(predict(*teacher, s.image).label);
      }
      TrainSet ts;
      for (const auto& s : source.labeled()) {
        ts.items.push_back({&s, *s.label, LabelSource::ground_truth});
      }
      for (std::size_t i = 0; i < labels.size(); ++i) {
        ts.items.push_back({&target.reference()[i], std::move(labels[i]), LabelSource::pseudo});
      }
      const InitPolicy init = continued ? InitPolicy::continued(teacher) : InitPolicy::fresh();
      ScopedAccessPhase phase(AccessPhase::training);
      teacher = std::make_shared<const Model>(
          train(arch, ts, init, base.student, derive_seed(derive_seed(seed, "stage2"), round),
                tag + "/round-" + std::to_string(round + 1)));
    }
    out.rows.push_back(evaluate(tag, *teacher));
  };
  stage2(true, "ATSO_{k->K}");
  if (stages.include_fresh_stage2) stage2(false, "ATSO_{k->K}^fresh");
  return out;
}

}  // namespace atso
