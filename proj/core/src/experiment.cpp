#include "atso/experiment.hpp"

#include <algorithm>
#include <set>

#include "atso/error.hpp"
#include "atso/mask_io.hpp"
#include "json_codec.hpp"

namespace atso {

using detail::Json;
using detail::StrictObject;

namespace {

// Re-roots a validator's field name ("hyper.epochs") under `path`.
template <typename F>
void validate_as(const std::string& path, const std::string& own_prefix, F&& validate) {
  try {
    validate();
  } catch (const ValidationError& e) {
    std::string f = e.field();
    if (f.rfind(own_prefix, 0) == 0) f = f.substr(own_prefix.size());
    throw ValidationError(f.empty() ? path : path + "." + f, e.message());
  }
}

const char* schedule_name(LrSchedule s) { return s == LrSchedule::linear ? "linear" : "constant"; }

TrainHyper train_hyper_from_json(StrictObject o, const std::string& path, TrainHyper h) {
  o.get("epochs", h.epochs);
  o.get("learning_rate", h.learning_rate);
  o.get("batch_size", h.batch_size);
  o.get("weight_decay", h.weight_decay);
  if (o.has("schedule")) {
    const auto s = o.require<std::string>("schedule");
    if (s == "linear") {
      h.schedule = LrSchedule::linear;
    } else if (s == "constant") {
      h.schedule = LrSchedule::constant;
    } else {
      throw ValidationError(o.field("schedule"), "expected linear|constant, got '" + s + "'");
    }
  }
  o.finish();
  validate_as(path, "hyper.", [&] { h.validate(); });
  return h;
}

Json train_hyper_to_json(const TrainHyper& h) {
  return {{"epochs", h.epochs},
          {"learning_rate", h.learning_rate},
          {"batch_size", h.batch_size},
          {"weight_decay", h.weight_decay},
          {"schedule", schedule_name(h.schedule)}};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

const std::set<std::string>& known_layouts() {
  static const std::set<std::string> s{"table1", "appendixA", "table3", "csv", "json"};
  return s;
}

GeneratorSpec default_source_spec(const GeneratorSpec& target) {
  GeneratorSpec s = target;
  s.labeled = target.labeled + target.reference;
  s.reference = 1;
  s.test = 1;
  return s;
}

}  // namespace

const char* to_string(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::standard:
      return "standard";
    case ExperimentKind::transfer:
      return "transfer";
    case ExperimentKind::reduced:
      return "reduced";
  }
  return "?";
}

ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  const Json j = detail::parse_json_text(text, "config");
  StrictObject o(j, "");
  ExperimentConfig c;

  if (o.has("experiment")) {
    const auto e = o.require<std::string>("experiment");
    if (e == "standard") {
      c.experiment = ExperimentKind::standard;
    } else if (e == "transfer") {
      c.experiment = ExperimentKind::transfer;
    } else if (e == "reduced") {
      c.experiment = ExperimentKind::reduced;
    } else {
      throw ValidationError("experiment", "expected standard|transfer|reduced, got '" + e + "'");
    }
  }
  if (o.has("mode") && o.has("modes")) {
    throw ValidationError("modes", "give either mode or modes, not both");
  }
  if (o.has("mode")) {
    const auto m = o.require<std::string>("mode");
    validate_as("mode", "mode", [&] { c.modes = {mode_from_string(m)}; });
  }
  if (o.has("modes")) {
    const auto list = o.require<std::vector<std::string>>("modes");
    if (list.empty()) throw ValidationError("modes", "must name at least one mode");
    c.modes.clear();
    for (const auto& m : list) {
      validate_as("modes", "mode", [&] { c.modes.push_back(mode_from_string(m)); });
      if (std::count(c.modes.begin(), c.modes.end(), c.modes.back()) > 1) {
        throw ValidationError("modes", "duplicate mode '" + m + "'");
      }
    }
  }
  std::int64_t T = c.T;
  o.get("T", T);
  if (T < 0 || T > 1000) throw ValidationError("T", "must be in [0, 1000]");
  c.T = static_cast<int>(T);
  if (o.has("seed")) c.seed = detail::seed_from_json(o.raw("seed"), "seed");

  if (o.has("generator")) c.generator = detail::generator_from_json(o.raw("generator"), "generator");
  if (o.has("source_generator")) {
    c.source_generator = detail::generator_from_json(o.raw("source_generator"), "source_generator");
  }
  if (o.has("shift")) c.shift = detail::shift_from_json(o.raw("shift"), "shift");
  if (o.has("manifest")) c.manifest = resolve(base_dir, o.require<std::string>("manifest"));
  if (o.has("target_manifest")) {
    c.target_manifest = resolve(base_dir, o.require<std::string>("target_manifest"));
  }

  if (o.has("hyper")) {
    auto h = o.child("hyper");
    h.get("hidden", c.hyper.arch.hidden);
    if (h.has("features")) {
      auto f = h.child("features");
      f.get("radii", c.hyper.arch.features.radii);
      f.get("global_mean", c.hyper.arch.features.global_mean);
      f.get("global_std", c.hyper.arch.features.global_std);
      f.get("position", c.hyper.arch.features.position);
      f.finish();
      validate_as("hyper.features", "features", [&] { c.hyper.arch.features.validate(); });
    }
    if (h.has("initial")) c.hyper.initial = train_hyper_from_json(h.child("initial"), "hyper.initial", c.hyper.initial);
    if (h.has("student")) c.hyper.student = train_hyper_from_json(h.child("student"), "hyper.student", c.hyper.student);
    h.get("concurrent", c.hyper.concurrent);
    if (h.has("absent_policy")) {
      const auto p = h.require<std::string>("absent_policy");
      if (p == "exclude") {
        c.hyper.absent_policy = AbsentClassPolicy::exclude;
      } else if (p == "count_as_zero") {
        c.hyper.absent_policy = AbsentClassPolicy::count_as_zero;
      } else {
        throw ValidationError("hyper.absent_policy",
                              "expected exclude|count_as_zero, got '" + p + "'");
      }
    }
    h.finish();
    if (c.hyper.arch.hidden < 1 || c.hyper.arch.hidden > 4096) {
      throw ValidationError("hyper.hidden", "must be in [1, 4096]");
    }
  }
  o.get("scratch_depth", c.hyper.scratch_depth);
  if (c.hyper.scratch_depth > 2) throw ValidationError("scratch_depth", "must be 0, 1 or 2");

  if (o.has("class_mapping")) {
    c.class_mapping_path = resolve(base_dir, o.require<std::string>("class_mapping"));
    c.class_mapping = load_class_mapping(*c.class_mapping_path);
  }
  if (o.has("reduced")) {
    auto r = o.child("reduced");
    r.get("stage2_rounds", c.reduced.stage2_rounds);
    r.get("include_fresh_stage2", c.reduced.include_fresh_stage2);
    r.finish();
    if (c.reduced.stage2_rounds < 1) throw ValidationError("reduced.stage2_rounds", "must be >= 1");
  }
  c.reduced.T = c.T;
  if (o.has("output_dir")) c.output_dir = resolve(base_dir, o.require<std::string>("output_dir"));

  if (o.has("sweep")) {
    auto s = o.child("sweep");
    s.get("num_seeds", c.sweep.num_seeds);
    c.sweep.base_seed = s.has("base_seed")
                            ? detail::seed_from_json(s.raw("base_seed"), "sweep.base_seed")
                            : c.seed;
    s.finish();
    if (c.sweep.num_seeds < 1 || c.sweep.num_seeds > 100000) {
      throw ValidationError("sweep.num_seeds", "must be in [1, 100000]");
    }
  } else {
    c.sweep.base_seed = c.seed;
  }
  if (o.has("report")) {
    auto r = o.child("report");
    if (r.has("layouts")) {
      c.layouts = r.require<std::vector<std::string>>("layouts");
      for (const auto& l : c.layouts) {
        if (!known_layouts().count(l)) {
          throw ValidationError("report.layouts",
                                "unknown layout '" + l + "' (table1|appendixA|table3|csv|json)");
        }
      }
    }
    r.finish();
  }
  if (o.has("propagation")) {
    auto p = o.child("propagation");
    if (p.has("regime")) c.propagation.regime = regime_from_string(p.require<std::string>("regime"));
    std::int64_t gens = c.propagation.generations;
    p.get("generations", gens);
    if (gens < 0 || gens > 100000) throw ValidationError("propagation.generations", "must be in [0, 100000]");
    c.propagation.generations = static_cast<int>(gens);
    p.get("initial_bias", c.propagation.initial_bias);
    p.get("injection_mean", c.propagation.injection_mean);
    p.get("injection_std", c.propagation.injection_std);
    p.get("persistence", c.propagation.persistence);
    p.get("attenuation", c.propagation.attenuation);
    p.get("cross_transfer", c.propagation.cross_transfer);
    p.get("trials", c.propagation.trials);
    p.finish();
    c.propagation.validate();
  }
  o.finish();

  if (c.experiment == ExperimentKind::reduced) {
    if (!c.class_mapping) {
      throw ValidationError("class_mapping", "the reduced experiment needs a class mapping");
    }
    if (!c.target_manifest && c.class_mapping->source_classes != c.generator.num_classes) {
      throw ValidationError("class_mapping.source_classes",
                            "mapping expects " + std::to_string(c.class_mapping->source_classes) +
                                " classes, generator has " +
                                std::to_string(c.generator.num_classes));
    }
  }
  if (c.experiment == ExperimentKind::standard && c.target_manifest) {
    throw ValidationError("target_manifest", "only used by transfer and reduced experiments");
  }
  if (c.experiment != ExperimentKind::standard && c.manifest.has_value() != c.target_manifest.has_value()) {
    throw ValidationError(c.manifest ? "target_manifest" : "manifest",
                          "transfer data from manifests needs both manifest and target_manifest");
  }
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  const std::string text = detail::read_text_file(path.string(), "config");
  return parse_config_text(text, path.parent_path());
}

std::string ExperimentConfig::canonical_json() const {
  Json modes_j = Json::array();
  for (Mode m : modes) modes_j.push_back(to_string(m));
  Json j{{"experiment", to_string(experiment)},
         {"modes", modes_j},
         {"T", T},
         {"seed", detail::seed_to_json(seed)},
         {"generator", detail::to_json(generator)},
         {"shift", detail::to_json(shift)},
         {"hyper",
          {{"hidden", hyper.arch.hidden},
           {"features",
            {{"radii", hyper.arch.features.radii},
             {"global_mean", hyper.arch.features.global_mean},
             {"global_std", hyper.arch.features.global_std},
             {"position", hyper.arch.features.position}}},
           {"initial", train_hyper_to_json(hyper.initial)},
           {"student", train_hyper_to_json(hyper.student)},
           {"absent_policy",
            hyper.absent_policy == AbsentClassPolicy::exclude ? "exclude" : "count_as_zero"}}},
         {"scratch_depth", hyper.scratch_depth},
         {"reduced",
          {{"stage2_rounds", reduced.stage2_rounds},
           {"include_fresh_stage2", reduced.include_fresh_stage2}}},
         {"sweep", {{"num_seeds", sweep.num_seeds}, {"base_seed", detail::seed_to_json(sweep.base_seed)}}},
         {"report", {{"layouts", layouts}}},
         {"propagation",
          {{"regime", to_string(propagation.regime)},
           {"generations", propagation.generations},
           {"initial_bias", propagation.initial_bias},
           {"injection_mean", propagation.injection_mean},
           {"injection_std", propagation.injection_std},
           {"persistence", propagation.persistence},
           {"attenuation", propagation.attenuation},
           {"cross_transfer", propagation.cross_transfer},
           {"trials", propagation.trials}}}};
  if (source_generator) j["source_generator"] = detail::to_json(*source_generator);
  if (manifest) j["manifest"] = manifest->generic_string();
  if (target_manifest) j["target_manifest"] = target_manifest->generic_string();
  if (class_mapping) {
    j["class_mapping"] = {{"source_classes", class_mapping->source_classes},
                          {"target_classes", class_mapping->target_classes},
                          {"table", class_mapping->table}};
  }
  return j.dump(2) + "\n";
}

std::string ExperimentConfig::hash() const {
  return hex64(fnv1a(std::string_view(canonical_json())));
}

// ---------------------------------------------------------------------------

ExperimentData build_data(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.experiment == ExperimentKind::standard) {
    if (c.manifest) return {std::nullopt, load_bundle(*c.manifest)};
    return {std::nullopt, gen_synthetic_task(c.generator, derive_seed(seed, "data"))};
  }
  if (c.manifest) return {load_bundle(*c.manifest), load_bundle(*c.target_manifest)};
  const GeneratorSpec src = c.source_generator.value_or(default_source_spec(c.generator));
  DatasetBundle source = gen_synthetic_task(src, derive_seed(seed, "source"));
  DatasetBundle target = apply_domain_shift(
      gen_synthetic_task(c.generator, derive_seed(seed, "target")), c.shift,
      derive_seed(seed, "shift"));
  return {std::move(source), std::move(target)};
}

RunReportBundle run_experiment(const ExperimentConfig& c, std::uint64_t seed) {
  RunReportBundle b;
  b.experiment = to_string(c.experiment);
  b.T = c.T;
  b.modes = c.modes;
  b.seeds = {seed};
  b.config_hash = c.hash();
  b.version = version();

  ExperimentData data = build_data(c, seed);
  b.num_classes = data.target.num_classes();
  if (c.experiment == ExperimentKind::reduced) {
    b.modes.clear();
    b.reduced.push_back(run_reduced_class_protocol(*data.source, data.target, *c.class_mapping,
                                                   c.reduced, c.hyper, seed));
    b.aggregate();
    return b;
  }
  const DatasetBundle& s_bundle = data.source ? *data.source : data.target;
  RunOptions opts;
  opts.m0 = train_initial(s_bundle.labeled(), c.hyper, RunSeeds{seed}.initial());
  for (Mode m : c.modes) {
    if (data.source) {
      b.runs.push_back(run_transfer(*data.source, data.target, m, c.T, c.hyper, seed, opts));
    } else {
      b.runs.push_back(run(m, data.target, c.T, c.hyper, seed, opts));
    }
  }
  b.aggregate();
  return b;
}

RunReportBundle sweep(const ExperimentConfig& c, const std::filesystem::path& persist_dir,
                      const SweepProgress& progress) {
  RunReportBundle out;
  out.experiment = to_string(c.experiment);
  out.T = c.T;
  out.modes = c.experiment == ExperimentKind::reduced ? std::vector<Mode>{} : c.modes;
  out.config_hash = c.hash();
  out.version = version();
  for (std::size_t i = 0; i < c.sweep.num_seeds; ++i) {
    const std::uint64_t seed = c.sweep.base_seed + i;
    RunReportBundle one;
    try {
      one = run_experiment(c, seed);
    } catch (const ValidationError& e) {
      throw ValidationError(e.field(), "seed " + std::to_string(seed) + ": " + e.message());
    } catch (const IoError& e) {
      throw IoError(e.field(), "seed " + std::to_string(seed) + ": " + e.message());
    } catch (const TrainingError& e) {
      throw TrainingError("seed " + std::to_string(seed) + ": " + e.what());
    }
    out.num_classes = one.num_classes;
    out.seeds.push_back(seed);
    if (!persist_dir.empty()) {
      const auto dir = persist_dir / ("seed-" + std::to_string(seed));
      for (const auto& r : one.runs) r.save(dir / to_string(r.mode));
      for (const auto& r : one.reduced) {
        std::filesystem::create_directories(dir / "reduced");
        detail::write_file_atomic((dir / "reduced" / "table3.csv").string(), r.to_csv());
        detail::write_file_atomic((dir / "reduced" / "report.json").string(), r.to_json());
      }
    }
    for (auto& r : one.runs) out.runs.push_back(std::move(r));
    for (auto& r : one.reduced) out.reduced.push_back(std::move(r));
    out.aggregate();
    if (progress) progress(seed, out);
  }
  return out;
}

}  // namespace atso
