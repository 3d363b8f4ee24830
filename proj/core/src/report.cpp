#include "atso/report.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

#include "atso/error.hpp"
#include "json_codec.hpp"

#ifndef ATSO_VERSION
#define ATSO_VERSION "0.0.0"
#endif

namespace atso {

using detail::Json;

namespace {

constexpr const char* kBundleFormat = "atso-report-bundle-1";

std::string pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

const char* cross_names[6] = {"M1@R1", "M2@R1", "M1@R2", "M2@R2", "merged_R", "test"};

std::array<double, 6> cross_values(const CrossEvalMatrix& m) {
  return {m.cells[0][0], m.cells[1][0], m.cells[0][1], m.cells[1][1], m.merged_reference_score,
          m.test_score};
}

Json optional_list(const std::vector<std::optional<double>>& v) {
  Json a = Json::array();
  for (const auto& x : v) a.push_back(x ? Json(*x) : Json(nullptr));
  return a;
}

std::vector<std::optional<double>> optional_list_from(const Json& a) {
  std::vector<std::optional<double>> out;
  for (const auto& x : a) {
    if (x.is_null()) {
      out.emplace_back();
    } else {
      out.emplace_back(x.get<double>());
    }
  }
  return out;
}

Json run_to_json(const RunReport& r) {
  Json gens = Json::array();
  for (const auto& g : r.generations) {
    Json j{{"t", g.t}, {"row", g.row}, {"reference", g.reference}, {"test", g.test}};
    if (g.subsets) j["subsets"] = {(*g.subsets)[0], (*g.subsets)[1]};
    if (g.test_global_dsc) j["test_global_dsc"] = *g.test_global_dsc;
    if (!g.class_iou.empty()) j["class_iou"] = optional_list(g.class_iou);
    if (g.test_reduced_miou) j["test_reduced_miou"] = *g.test_reduced_miou;
    gens.push_back(std::move(j));
  }
  Json cross = Json::array();
  for (const auto& m : r.cross_eval) {
    Json j{{"generation", m.generation}};
    const auto v = cross_values(m);
    for (int i = 0; i < 6; ++i) j[cross_names[i]] = v[static_cast<std::size_t>(i)];
    cross.push_back(std::move(j));
  }
  return {{"seed", detail::seed_to_json(r.seed)},
          {"mode", to_string(r.mode)},
          {"experiment", r.experiment},
          {"T", r.T},
          {"metric", to_string(r.metric)},
          {"num_classes", r.num_classes},
          {"final_model_id", r.final_model_id},
          {"audit_ok", r.audit.ok()},
          {"generations", gens},
          {"cross_eval", cross}};
}

RunReport run_from_json(const Json& j) {
  RunReport r;
  r.seed = detail::seed_from_json(j.at("seed"), "runs.seed");
  r.mode = mode_from_string(j.at("mode").get<std::string>());
  r.experiment = j.at("experiment").get<std::string>();
  r.T = j.at("T").get<int>();
  r.metric = j.at("metric").get<std::string>() == "dsc" ? ScoreMetric::dsc : ScoreMetric::miou;
  r.num_classes = j.at("num_classes").get<std::uint32_t>();
  r.final_model_id = j.at("final_model_id").get<std::string>();
  r.audit.merge_fingerprint_ok = j.at("audit_ok").get<bool>();
  for (const auto& g : j.at("generations")) {
    GenerationReport x;
    x.t = g.at("t").get<int>();
    x.row = g.at("row").get<std::string>();
    x.mode = r.mode;
    x.reference = g.at("reference").get<double>();
    x.test = g.at("test").get<double>();
    if (g.contains("subsets")) {
      x.subsets = std::array<double, 2>{g["subsets"].at(0).get<double>(),
                                        g["subsets"].at(1).get<double>()};
    }
    if (g.contains("test_global_dsc")) x.test_global_dsc = g["test_global_dsc"].get<double>();
    if (g.contains("class_iou")) x.class_iou = optional_list_from(g["class_iou"]);
    if (g.contains("test_reduced_miou")) x.test_reduced_miou = g["test_reduced_miou"].get<double>();
    r.generations.push_back(std::move(x));
  }
  for (const auto& c : j.at("cross_eval")) {
    CrossEvalMatrix m;
    m.generation = c.at("generation").get<int>();
    m.cells[0][0] = c.at("M1@R1").get<double>();
    m.cells[1][0] = c.at("M2@R1").get<double>();
    m.cells[0][1] = c.at("M1@R2").get<double>();
    m.cells[1][1] = c.at("M2@R2").get<double>();
    m.merged_reference_score = c.at("merged_R").get<double>();
    m.test_score = c.at("test").get<double>();
    r.cross_eval.push_back(m);
  }
  return r;
}

Json reduced_to_json(const ReducedProtocolReport& r) {
  Json rows = Json::array();
  for (const auto& x : r.rows) {
    rows.push_back({{"tag", x.tag},
                    {"class_iou", optional_list(x.class_iou)},
                    {"miou", x.miou},
                    {"reduced_miou", x.reduced_miou}});
  }
  return {{"seed", detail::seed_to_json(r.seed)},
          {"num_classes", r.num_classes},
          {"reduced_classes", r.reduced_classes},
          {"rows", rows}};
}

ReducedProtocolReport reduced_from_json(const Json& j) {
  ReducedProtocolReport r;
  r.seed = detail::seed_from_json(j.at("seed"), "reduced.seed");
  r.num_classes = j.at("num_classes").get<std::uint32_t>();
  r.reduced_classes = j.at("reduced_classes").get<std::uint32_t>();
  for (const auto& x : j.at("rows")) {
    ClassIouRow row;
    row.tag = x.at("tag").get<std::string>();
    row.class_iou = optional_list_from(x.at("class_iou"));
    row.miou = x.at("miou").get<double>();
    row.reduced_miou = x.at("reduced_miou").get<double>();
    r.rows.push_back(std::move(row));
  }
  return r;
}

std::string metric_name(const RunReportBundle& b) {
  return to_string(default_metric(b.num_classes));
}

void require_nonempty(const RunReportBundle& b) {
  if (b.empty()) throw ValidationError("bundle", "empty bundle: no runs to report");
}

[[noreturn]] void missing(const std::string& layout, const std::vector<std::string>& what) {
  std::string list;
  for (const auto& w : what) list += (list.empty() ? "" : ", ") + w;
  throw ValidationError("bundle", layout + " layout is missing: " + list);
}

std::string table1(const RunReportBundle& b) {
  require_nonempty(b);
  if (b.modes.empty() || b.runs.empty()) missing("table1", {"mode runs"});
  const std::string metric = metric_name(b);
  std::vector<std::string> lacking;
  std::string out = "generation";
  for (Mode m : b.modes) out += std::string(",") + to_string(m) + "@R," + to_string(m) + "@E";
  out += "\n";
  for (int t = 0; t <= b.T; ++t) {
    const std::string row = "G" + std::to_string(t);
    out += row;
    for (Mode m : b.modes) {
      const bool final_row = m == Mode::atso && t == b.T;
      const Aggregate* r = b.find(row, to_string(m), "reference", metric);
      const Aggregate* e = b.find(final_row ? "final" : row, to_string(m), "test", metric);
      if (!r) lacking.push_back(std::string(to_string(m)) + " " + row + " reference");
      if (!e) lacking.push_back(std::string(to_string(m)) + " " + (final_row ? "final" : row) + " test");
      out += "," + (r ? pct(r->mean) : std::string()) + "," + (e ? pct(e->mean) : std::string());
    }
    out += "\n";
  }
  if (!lacking.empty()) missing("table1", lacking);
  return out;
}

std::string appendix_a(const RunReportBundle& b) {
  require_nonempty(b);
  std::vector<std::string> lacking;
  std::string out = CrossEvalMatrix::csv_header() + "\n";
  for (int t = 0; t <= b.T; ++t) {
    const std::string row = "G" + std::to_string(t);
    out += row;
    for (const char* name : cross_names) {
      const Aggregate* a = b.find(row, "atso", "cross_eval", name);
      if (!a) lacking.push_back("atso " + row + " " + name);
      out += "," + (a ? pct(a->mean) : std::string());
    }
    out += "\n";
  }
  if (!lacking.empty()) missing("appendixA", lacking);
  return out;
}

std::string table3(const RunReportBundle& b) {
  require_nonempty(b);
  if (b.reduced.empty()) missing("table3", {"reduced-class protocol rows"});
  const ReducedProtocolReport& first = b.reduced.front();
  std::string out = "row";
  for (std::uint32_t c = 0; c < first.num_classes; ++c) out += ",iou_" + std::to_string(c);
  out += ",miou,reduced_miou\n";
  for (const auto& r : first.rows) {
    out += r.tag;
    for (std::uint32_t c = 0; c < first.num_classes; ++c) {
      const Aggregate* a = b.find(r.tag, "reduced", "test", "iou_" + std::to_string(c));
      out += "," + (a ? pct(a->mean) : std::string());
    }
    const Aggregate* m = b.find(r.tag, "reduced", "test", "miou");
    const Aggregate* rm = b.find(r.tag, "reduced", "test", "reduced_miou");
    if (!m || !rm) missing("table3", {r.tag + " miou"});
    out += "," + pct(m->mean) + "," + pct(rm->mean) + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> layout_files(const RunReportBundle& b,
                                                              const std::string& layout) {
  if (layout == "table1") return {{"table1.csv", table1(b)}};
  if (layout == "appendixA") return {{"appendixA.csv", appendix_a(b)}};
  if (layout == "table3") return {{"table3.csv", table3(b)}};
  if (layout == "csv") {
    require_nonempty(b);
    return {{"runs.csv", b.runs_csv()}, {"aggregates.csv", b.aggregates_csv()}};
  }
  if (layout == "json") {
    require_nonempty(b);
    return {{"bundle.json", b.to_json()}};
  }
  throw ValidationError("layout", "unknown layout '" + layout + "' (table1|appendixA|table3|csv|json)");
}

}  // namespace

const char* version() noexcept { return ATSO_VERSION; }

Aggregate summarize(std::string row, std::string column, std::string split, std::string metric,
                    const std::vector<double>& values) {
  Aggregate a{std::move(row), std::move(column), std::move(split), std::move(metric),
              values.size(), 0.0, 0.0, 0.0};
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double s = 0.0;
    for (double v : values) s += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(s / static_cast<double>(values.size() - 1));
    a.ci95 = 1.959963984540054 * a.std / std::sqrt(static_cast<double>(values.size()));
  }
  return a;
}

void RunReportBundle::aggregate() {
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> values;
  auto add = [&](Key k, double v) {
    auto [it, fresh] = values.try_emplace(k);
    if (fresh) order.push_back(k);
    it->second.push_back(v);
  };
  for (const auto& r : runs) {
    for (const auto& c : r.cells()) add({c.row, to_string(c.mode), c.split, c.metric}, c.value);
    for (const auto& m : r.cross_eval) {
      const auto v = cross_values(m);
      for (int i = 0; i < 6; ++i) {
        add({"G" + std::to_string(m.generation), to_string(r.mode), "cross_eval", cross_names[i]},
            v[static_cast<std::size_t>(i)]);
      }
    }
  }
  for (const auto& r : reduced) {
    for (const auto& row : r.rows) {
      for (std::size_t c = 0; c < row.class_iou.size(); ++c) {
        if (row.class_iou[c]) add({row.tag, "reduced", "test", "iou_" + std::to_string(c)}, *row.class_iou[c]);
      }
      add({row.tag, "reduced", "test", "miou"}, row.miou);
      add({row.tag, "reduced", "test", "reduced_miou"}, row.reduced_miou);
    }
  }
  aggregates.clear();
  for (const auto& k : order) {
    aggregates.push_back(
        summarize(std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), values.at(k)));
  }
}

const Aggregate* RunReportBundle::find(const std::string& row, const std::string& column,
                                       const std::string& split, const std::string& metric) const {
  for (const auto& a : aggregates) {
    if (a.row == row && a.column == column && a.split == split && a.metric == metric) return &a;
  }
  return nullptr;
}

std::string RunReportBundle::runs_csv() const {
  std::string out = "seed,generation,mode,split,metric,value\n";
  for (const auto& r : runs) {
    const std::string seed = std::to_string(r.seed);
    for (const auto& c : r.cells()) {
      out += seed + "," + c.row + "," + to_string(c.mode) + "," + c.split + "," + c.metric + "," +
             fmt6(c.value) + "\n";
    }
  }
  for (const auto& r : reduced) {
    const std::string seed = std::to_string(r.seed);
    for (const auto& row : r.rows) {
      const std::string prefix = seed + "," + row.tag + ",reduced,test,";
      for (std::size_t c = 0; c < row.class_iou.size(); ++c) {
        if (row.class_iou[c]) out += prefix + "iou_" + std::to_string(c) + "," + fmt6(*row.class_iou[c]) + "\n";
      }
      out += prefix + "miou," + fmt6(row.miou) + "\n";
      out += prefix + "reduced_miou," + fmt6(row.reduced_miou) + "\n";
    }
  }
  return out;
}

std::string RunReportBundle::aggregates_csv() const {
  std::string out = "row,column,split,metric,n,mean,std,ci95\n";
  for (const auto& a : aggregates) {
    out += a.row + "," + a.column + "," + a.split + "," + a.metric + "," + std::to_string(a.n) +
           "," + fmt6(a.mean) + "," + fmt6(a.std) + "," + fmt6(a.ci95) + "\n";
  }
  return out;
}

std::string RunReportBundle::to_json() const {
  Json modes_j = Json::array();
  for (Mode m : modes) modes_j.push_back(to_string(m));
  Json seeds_j = Json::array();
  for (auto s : seeds) seeds_j.push_back(detail::seed_to_json(s));
  Json runs_j = Json::array();
  for (const auto& r : runs) runs_j.push_back(run_to_json(r));
  Json reduced_j = Json::array();
  for (const auto& r : reduced) reduced_j.push_back(reduced_to_json(r));
  Json agg = Json::array();
  for (const auto& a : aggregates) {
    agg.push_back({{"row", a.row},
                   {"column", a.column},
                   {"split", a.split},
                   {"metric", a.metric},
                   {"n", a.n},
                   {"mean", a.mean},
                   {"std", a.std},
                   {"ci95", a.ci95}});
  }
  return Json{{"format", kBundleFormat},
              {"experiment", experiment},
              {"T", T},
              {"num_classes", num_classes},
              {"modes", modes_j},
              {"seeds", seeds_j},
              {"config_hash", config_hash},
              {"version", version},
              {"runs", runs_j},
              {"reduced", reduced_j},
              {"aggregates", agg}}
             .dump(2) +
         "\n";
}

RunReportBundle load_bundle_json(const std::filesystem::path& path) {
  const Json j = detail::read_json_file(path.string(), "bundle");
  RunReportBundle b;
  try {
    if (j.at("format").get<std::string>() != kBundleFormat) {
      throw IoError("format", "not an " + std::string(kBundleFormat) + " file");
    }
    b.experiment = j.at("experiment").get<std::string>();
    b.T = j.at("T").get<int>();
    b.num_classes = j.at("num_classes").get<std::uint32_t>();
    for (const auto& m : j.at("modes")) b.modes.push_back(mode_from_string(m.get<std::string>()));
    for (const auto& s : j.at("seeds")) b.seeds.push_back(detail::seed_from_json(s, "seeds"));
    b.config_hash = j.at("config_hash").get<std::string>();
    b.version = j.at("version").get<std::string>();
    for (const auto& r : j.at("runs")) b.runs.push_back(run_from_json(r));
    for (const auto& r : j.at("reduced")) b.reduced.push_back(reduced_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bundle", path.string() + ": " + e.what());
  }
  b.aggregate();
  return b;
}

std::string render_layout(const RunReportBundle& bundle, const std::string& layout) {
  return layout_files(bundle, layout).back().second;
}

std::vector<std::filesystem::path> render_report(const RunReportBundle& bundle,
                                                 const std::string& layout,
                                                 const std::filesystem::path& dir) {
  const auto files = layout_files(bundle, layout);
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [name, content] : files) {
    detail::write_file_atomic((dir / name).string(), content);
    written.push_back(dir / name);
  }
  return written;
}

}  // namespace atso
