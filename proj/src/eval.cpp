#include "veritas/eval.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json_util.hpp"

namespace veritas {

using detail::json;

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kAccuracy: return "accuracy";
    case Metric::kRecall: return "recall";
    case Metric::kF1: return "f1";
  }
  return "?";
}

double metric_value(const MetricRow& row, Metric m) {
  switch (m) {
    case Metric::kAccuracy: return row.accuracy;
    case Metric::kRecall: return row.recall;
    case Metric::kF1: return row.f1;
  }
  return 0.0;
}

std::vector<Prediction> parse_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("not a JSON object", line);
    if (!j.contains("id") || !j["id"].is_string()) throw ParseError("missing string 'id'", line);
    Prediction p{j["id"].get<std::string>(), std::nullopt};
    if (j.contains("verdict")) {
      if (!j["verdict"].is_string()) throw ParseError("verdict must be a string", line);
      p.verdict = label_from_string(j["verdict"].get<std::string>());
      if (!p.verdict) throw ParseError("verdict must be 'real' or 'fake'", line);
    } else if (j.contains("raw_text") && j["raw_text"].is_string()) {
      auto parsed = parse_detection(j["raw_text"].get<std::string>());
      if (const auto* d = std::get_if<DetectionVerdict>(&parsed)) p.verdict = d->verdict;
    } else {
      throw ParseError("record needs 'verdict' or 'raw_text'", line);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open predictions " + path.string());
  return parse_predictions(in);
}

std::vector<MetricRow> binary_metrics(const std::vector<Prediction>& preds,
                                      const DatasetManifest& manifest) {
  std::map<std::string, std::optional<Label>> by_id;
  for (const auto& p : preds) {
    const ManifestEntry* e = manifest.find(p.id);
    if (!e) throw ConfigError("unknown id '" + p.id + "'");
    if (e->task != Task::kDetection) throw ConfigError("id '" + p.id + "' is not a detection entry");
    by_id[p.id] = p.verdict;
  }

  std::vector<MetricRow> rows;
  std::map<std::string, std::size_t> row_of;
  for (const auto& e : manifest.entries) {
    if (e.task != Task::kDetection) continue;
    auto [it, inserted] = row_of.emplace(e.subset_name, rows.size());
    if (inserted) rows.push_back(MetricRow{e.subset_name, e.group});
    MetricRow& row = rows[it->second];
    if (row.group != e.group)
      throw ConfigError("subset '" + e.subset_name + "' appears in more than one group");

    const bool fake = *e.label == Label::kFake;
    auto p = by_id.find(e.id);
    bool predicted_fake;
    if (p == by_id.end() || !p->second) {
      ++row.missing;
      predicted_fake = !fake;  // a missing prediction is always wrong
    } else {
      predicted_fake = *p->second == Label::kFake;
    }
    ++row.total;
    if (fake && predicted_fake) ++row.tp;
    if (fake && !predicted_fake) ++row.fn;
    if (!fake && predicted_fake) ++row.fp;
    if (!fake && !predicted_fake) ++row.tn;
  }

  for (auto& row : rows) {
    row.accuracy = static_cast<double>(row.tp + row.tn) / static_cast<double>(row.total);
    row.recall_undefined = row.tp + row.fn == 0;
    row.precision_undefined = row.tp + row.fp == 0;
    row.recall = row.recall_undefined ? 0.0
                                      : static_cast<double>(row.tp) / static_cast<double>(row.tp + row.fn);
    row.precision = row.precision_undefined
                        ? 0.0
                        : static_cast<double>(row.tp) / static_cast<double>(row.tp + row.fp);
    const double pr = row.precision + row.recall;
    row.f1 = pr > 0.0 ? 2.0 * row.precision * row.recall / pr : 0.0;
  }
  return rows;
}

double hierarchical_average(const std::vector<MetricRow>& rows, Metric metric) {
  double total = 0.0;
  for (auto group : kAllEvalGroups) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.group != group) continue;
      sum += metric_value(r, metric);
      ++n;
    }
    if (n == 0) throw ConfigError("no rows for group " + std::string(to_string(group)));
    total += sum / static_cast<double>(n);
  }
  return total / static_cast<double>(kAllEvalGroups.size());
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The small nudge absorbs representation error such as 88.75 -> 88.749999...
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

namespace {

std::vector<const MetricRow*> ordered_rows(const std::vector<MetricRow>& rows) {
  std::vector<const MetricRow*> out;
  for (auto group : kAllEvalGroups) {
    for (const auto& r : rows) {
      if (r.group == group) out.push_back(&r);
    }
  }
  return out;
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", round_half_up(v, 1));
  return buf;
}

}  // namespace

void write_metric_table(const std::vector<MetricRow>& rows, std::ostream& out) {
  const auto ordered = ordered_rows(rows);
  out << "group";
  for (const auto* r : ordered) out << '\t' << to_string(r->group);
  out << "\t\n" << "subset";
  for (const auto* r : ordered) out << '\t' << r->subset_name;
  out << "\tAvg.\n";
  for (auto m : {Metric::kAccuracy, Metric::kRecall, Metric::kF1}) {
    out << to_string(m);
    for (const auto* r : ordered) out << '\t' << fixed1(100.0 * metric_value(*r, m));
    out << '\t' << fixed1(100.0 * hierarchical_average(rows, m)) << '\n';
  }
}

std::string metric_report_json(const std::vector<MetricRow>& rows) {
  json groups = json::object();
  for (auto group : kAllEvalGroups) groups[std::string(to_string(group))] = json::array();
  for (const auto& r : rows) {
    groups[std::string(to_string(r.group))].push_back(
        {{"subset", r.subset_name},
         {"total", r.total},
         {"tp", r.tp},
         {"fp", r.fp},
         {"tn", r.tn},
         {"fn", r.fn},
         {"accuracy", r.accuracy},
         {"precision", r.precision},
         {"recall", r.recall},
         {"f1", r.f1},
         {"missing", r.missing},
         {"recall_undefined", r.recall_undefined}});
  }
  json avg = json::object();
  for (auto m : {Metric::kAccuracy, Metric::kRecall, Metric::kF1}) {
    const double v = hierarchical_average(rows, m);
    avg[std::string(to_string(m))] = {{"value", v}, {"display", round_half_up(100.0 * v, 1)}};
  }
  return json{{"groups", groups}, {"average", avg}}.dump();
}

// ---------------------------------------------------------------------------

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::kComponentGranularity: return "Component Granularity";
    case Dimension::kSpatiotemporalContinuity: return "Spatiotemporal Continuity";
    case Dimension::kPhysicsDepth: return "Physics Depth";
    case Dimension::kForensicObjectivity: return "Forensic Objectivity";
    case Dimension::kRelationalLogic: return "Relational Logic";
  }
  return "?";
}

std::optional<Dimension> dimension_from_string(std::string_view s) {
  for (auto d : kAllDimensions) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

std::string_view dimension_description(Dimension d) {
  switch (d) {
    case Dimension::kComponentGranularity:
      return "This dimension evaluates whether the assistant describes the scene as a whole or "
             "deconstructs it into specific objects and their fine-grained components (e.g., "
             "specific limbs, lens edges, or individual textures).";
    case Dimension::kSpatiotemporalContinuity:
      return "This dimension evaluates the assistant's ability to anchor its observations to "
             "precise temporal markers (timestamps) and spatial locations. It looks for how well "
             "the analysis \"tracks\" changes over a specific timeline.";
    case Dimension::kPhysicsDepth:
      return "This dimension evaluates the extent to which the assistant uses principles of "
             "physics (optics, mechanics, biology) to explain anomalies, rather than simply "
             "stating that something \"looks wrong\".";
    case Dimension::kForensicObjectivity:
      return "This dimension evaluates the shift from subjective, impression-based language "
             "(e.g., \"uncanny\", \"beautiful\") to objective, evidence-based descriptions (e.g., "
             "\"static texture overlay\", \"non-uniform deformation\").";
    case Dimension::kRelationalLogic:
      return "This dimension assesses the analysis of how different elements in the report "
             "interact with one another (e.g., the relationship between a moving object and its "
             "shadow, or the reaction of a surface to a force).";
  }
  return "";
}

std::string build_judge_prompt(Dimension dimension, std::string_view output_a,
                               std::string_view output_b) {
  std::string p;
  p += "You are a helpful assistant proficient in analyzing vision reasoning problems.\n";
  p += "## Instruction:\n";
  p += "You will be presented with two analytical reports (Assistant A and Assistant B) that "
       "describe observations from a video. Your task is to perform a side-by-side comparison "
       "and determine which assistant provides higher-quality reasoning based **ONLY** on the "
       "specific dimension provided below.\n";
  p += "The evaluation must be conducted strictly based on the textual evidence provided. Do not "
       "assume any external video information. Your goal is to identify which assistant "
       "demonstrates more professional, precise, and logically structured analysis within the "
       "specified scope.\n\n";
  p += "## Evaluation Dimension: ";
  p += to_string(dimension);
  p += "\n**Description**: ";
  p += dimension_description(dimension);
  p += "\n\n";
  p += "## Rules for Evaluation:\n";
  p += "- **Strictly Dimension-Focused**: Ignore other aspects of the reports. Only judge based "
       "on the provided dimension.\n";
  p += "- **Content over Conclusion**: Do not favor an assistant based on its final verdict. "
       "Focus on the depth and quality of the reasoning path.\n";
  p += "- **Neutrality**: Be unbiased toward length or tone. Prioritize the density of "
       "meaningful, analytical information.\n\n";
  p += "## Desired Output Format:\n";
  p += "Present your verdict in a JSON format, with key \"analysis\" for a short reason of your "
       "judgment and key \"judgment\" to indicate your decision: use \"[[A]]\" if assistant A "
       "prevails, \"[[B]]\" if assistant B does, and \"[[C]]\" for a tie. \n\n";
  p += "## Input Data:\n";
  p += "[The Start of Assistant A’s Analysis]\n";
  p += output_a;
  p += "\n[The End of Assistant A’s Analysis]\n";
  p += "[The Start of Assistant B’s Analysis]\n";
  p += output_b;
  p += "\n[The End of Assistant B’s Analysis]\n";
  return p;
}

double WinRate::rate_a() const { return total ? static_cast<double>(wins_a) / total : 0.0; }
double WinRate::rate_b() const { return total ? static_cast<double>(wins_b) / total : 0.0; }
double WinRate::tie_rate() const { return total ? static_cast<double>(ties) / total : 0.0; }
double WinRate::decisive_rate_a() const {
  const auto d = wins_a + wins_b;
  return d ? static_cast<double>(wins_a) / d : 0.0;
}
double WinRate::decisive_rate_b() const {
  const auto d = wins_a + wins_b;
  return d ? static_cast<double>(wins_b) / d : 0.0;
}

namespace {

void add(WinRate& w, JudgeDecision d) {
  ++w.total;
  switch (d) {
    case JudgeDecision::kA: ++w.wins_a; break;
    case JudgeDecision::kB: ++w.wins_b; break;
    case JudgeDecision::kC: ++w.ties; break;
  }
}

}  // namespace

WinRateReport win_rates(const std::vector<PairwiseJudgment>& judgments) {
  if (judgments.empty()) throw ConfigError("no judgments");
  WinRateReport report;
  for (const auto& j : judgments) {
    add(report.overall[j.dimension], j.decision);
    add(report.per_judge[j.judge_id][j.dimension], j.decision);
  }
  return report;
}

double win_rate(const std::vector<PairwiseJudgment>& judgments, JudgeDecision subject,
                Dimension dimension) {
  if (subject == JudgeDecision::kC) throw ConfigError("win-rate subject must be A or B");
  WinRate w;
  for (const auto& j : judgments) {
    if (j.dimension == dimension) add(w, j.decision);
  }
  if (w.total == 0)
    throw ConfigError("no judgments for dimension " + std::string(to_string(dimension)));
  return subject == JudgeDecision::kA ? w.rate_a() : w.rate_b();
}

}  // namespace veritas

namespace veritas {

namespace {

json win_rate_json(const std::map<Dimension, WinRate>& by_dim) {
  json out = json::object();
  for (const auto& [d, w] : by_dim) {
    out[std::string(to_string(d))] = {{"total", w.total},
                                      {"wins_a", w.wins_a},
                                      {"wins_b", w.wins_b},
                                      {"ties", w.ties},
                                      {"rate_a", w.rate_a()},
                                      {"rate_b", w.rate_b()},
                                      {"tie_rate", w.tie_rate()},
                                      {"decisive_rate_a", w.decisive_rate_a()},
                                      {"decisive_rate_b", w.decisive_rate_b()}};
  }
  return out;
}

}  // namespace

std::string win_rate_report_json(const WinRateReport& report) {
  json judges = json::object();
  for (const auto& [id, by_dim] : report.per_judge) judges[id] = win_rate_json(by_dim);
  return json{{"overall", win_rate_json(report.overall)}, {"per_judge", judges}}.dump();
}

}  // namespace veritas
