#include "veritas/parsers.hpp"

#include <cctype>
#include <charconv>
#include <optional>

#include "json_util.hpp"

namespace veritas {

using detail::json;

std::string_view to_string(JudgeDecision decision) {
  switch (decision) {
    case JudgeDecision::kA: return "A";
    case JudgeDecision::kB: return "B";
    case JudgeDecision::kC: return "C";
  }
  return "?";
}

namespace {

constexpr std::string_view kOpenTag = "<answer>";
constexpr std::string_view kCloseTag = "</answer>";

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool iequals_at(std::string_view text, std::size_t pos, std::string_view word) {
  if (pos + word.size() > text.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) != word[i]) return false;
  }
  return true;
}

// Case-insensitive whole-word search ("unreal" does not contain "real").
bool contains_word(std::string_view text, std::string_view word) {
  for (std::size_t i = 0; i + word.size() <= text.size(); ++i) {
    if (!iequals_at(text, i, word)) continue;
    const bool left_ok = i == 0 || !is_alpha(text[i - 1]);
    const bool right_ok = i + word.size() == text.size() || !is_alpha(text[i + word.size()]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

// End index (exclusive) of the balanced {...} literal starting at `open`,
// honouring string literals and escapes; nullopt if it never closes.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

// First object literal in `text` that parses as JSON and holds every key in `keys`.
std::optional<json> find_object(std::string_view text, std::initializer_list<const char*> keys) {
  for (std::size_t pos = text.find('{'); pos != std::string_view::npos;
       pos = text.find('{', pos + 1)) {
    auto end = balanced_end(text, pos);
    if (!end) continue;
    json j = json::parse(text.substr(pos, *end - pos), nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    bool ok = true;
    for (const char* k : keys) ok = ok && j.contains(k);
    if (ok) return j;
  }
  return std::nullopt;
}

ParsedResponse fail(std::string_view task, std::string reason) {
  return ParseFailure{std::string(task), std::move(reason)};
}

struct IntToken {
  std::size_t begin;
  std::size_t end;
  std::optional<std::int64_t> value;  // nullopt: not a usable integer
};

}  // namespace

AnswerTag extract_answer_tag(std::string_view text) {
  const auto open = text.find(kOpenTag);
  if (open == std::string_view::npos) return {};
  const auto body = open + kOpenTag.size();
  const auto close = text.find(kCloseTag, body);
  if (close == std::string_view::npos) return {};
  return {std::string(text.substr(body, close - body)), true};
}

ParsedResponse parse_detection(std::string_view text) {
  const AnswerTag tag = extract_answer_tag(text);
  const std::string_view scope = tag.had_tags ? std::string_view(tag.content) : text;
  const bool real = contains_word(scope, "real");
  const bool fake = contains_word(scope, "fake");
  if (real == fake) return fail("detection", "ambiguous/absent verdict");
  return DetectionVerdict{fake ? Label::kFake : Label::kReal, tag.had_tags};
}

ParsedResponse parse_grounding(std::string_view text) {
  auto obj = find_object(text, {"time", "boxes"});
  if (!obj) return fail("grounding", "no object with 'time' and 'boxes'");
  std::string reason;
  auto span = detail::span_from_json((*obj)["time"], reason);
  if (!span) return fail("grounding", reason);
  auto boxes = detail::second_boxes_from_json((*obj)["boxes"], reason);
  if (!boxes) return fail("grounding", reason);
  return GroundingResult{*span, std::move(*boxes)};
}

ParsedResponse parse_tracking(std::string_view text) {
  auto obj = find_object(text, {"boxes"});
  if (!obj) return fail("tracking", "no object with 'boxes'");
  std::string reason;
  auto boxes = detail::second_boxes_from_json((*obj)["boxes"], reason);
  if (!boxes) return fail("tracking", reason);
  return TrackingResult{std::move(*boxes)};
}

ParsedResponse parse_artifact_grounding(std::string_view text) {
  auto obj = find_object(text, {"boxes"});
  if (!obj) return fail("artifact_grounding", "no object with 'boxes'");
  const json& list = (*obj)["boxes"];
  if (!list.is_array()) return fail("artifact_grounding", "boxes must be a list");
  ArtifactGroundingResult out;
  std::string reason;
  for (const auto& b : list) {
    auto box = detail::box_from_json(b, reason);
    if (!box) return fail("artifact_grounding", reason);
    out.boxes.push_back(*box);
  }
  return out;
}

// Takes the last run of exactly three comma-separated non-negative integers.
// Runs of four or more ("1,2,3,4") and decimals ("1.5") do not qualify.
ParsedResponse parse_counting(std::string_view text) {
  std::vector<IntToken> tokens;
  for (std::size_t i = 0; i < text.size();) {
    if (!is_digit(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_digit(text[j])) ++j;
    IntToken tok{i, j, std::nullopt};
    const bool decimal_left = i > 0 && text[i - 1] == '.' && i > 1 && is_digit(text[i - 2]);
    const bool decimal_right = j + 1 < text.size() && text[j] == '.' && is_digit(text[j + 1]);
    const bool signed_left = i > 0 && text[i - 1] == '-';
    if (!decimal_left && !decimal_right && !signed_left) {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + j, v);
      if (ec == std::errc{} && ptr == text.data() + j) tok.value = v;
    }
    tokens.push_back(tok);
    i = j;
  }

  auto comma_gap = [&](const IntToken& a, const IntToken& b) {
    bool comma = false;
    for (std::size_t k = a.end; k < b.begin; ++k) {
      if (text[k] == ',') {
        if (comma) return false;
        comma = true;
      } else if (!is_space(text[k])) {
        return false;
      }
    }
    return comma;
  };

  std::optional<ShapeCounts> last;
  std::size_t i = 0;
  while (i < tokens.size()) {
    // Maximal chain of integers joined by single commas.
    std::size_t j = i;
    while (j + 1 < tokens.size() && comma_gap(tokens[j], tokens[j + 1])) ++j;
    const std::size_t len = j - i + 1;
    if (len == 3 && tokens[i].value && tokens[i + 1].value && tokens[i + 2].value) {
      last = ShapeCounts{*tokens[i].value, *tokens[i + 1].value, *tokens[i + 2].value};
    }
    i = j + 1;
  }
  if (!last) return fail("counting", "no circles,squares,triangles triple");
  return CountingResult{*last};
}

ParsedResponse parse_judgment(std::string_view text) {
  auto obj = find_object(text, {"analysis", "judgment"});
  if (!obj) return fail("judgment", "no object with 'analysis' and 'judgment'");
  const json& a = (*obj)["analysis"];
  const json& v = (*obj)["judgment"];
  if (!a.is_string() || !v.is_string()) return fail("judgment", "fields must be strings");
  const auto token = v.get<std::string>();
  std::optional<JudgeDecision> decision;
  for (auto d : {JudgeDecision::kA, JudgeDecision::kB, JudgeDecision::kC}) {
    if (token.find("[[" + std::string(to_string(d)) + "]]") == std::string::npos) continue;
    if (decision) return fail("judgment", "conflicting decision tokens");
    decision = d;
  }
  if (!decision) return fail("judgment", "judgment lacks [[A]]/[[B]]/[[C]] token");
  return JudgeVerdict{a.get<std::string>(), *decision};
}

ParsedResponse parse_response(Task task, std::string_view text) {
  switch (task) {
    case Task::kDetection: return parse_detection(text);
    case Task::kGrounding: return parse_grounding(text);
    case Task::kTracking: return parse_tracking(text);
    case Task::kCounting: return parse_counting(text);
    case Task::kArtifactGrounding: return parse_artifact_grounding(text);
  }
  return fail("unknown", "unsupported task");
}

std::string format_response(const ParsedResponse& response) {
  constexpr auto dump = [](const json& j) {
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
  };
  return std::visit(
      [&](const auto& r) -> std::string {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, DetectionVerdict>) {
          const std::string word(to_string(r.verdict));
          return r.had_answer_tags ? std::string(kOpenTag) + word + std::string(kCloseTag) : word;
        } else if constexpr (std::is_same_v<T, GroundingResult>) {
          return dump({{"time", detail::to_json(r.time)}, {"boxes", detail::to_json(r.boxes)}});
        } else if constexpr (std::is_same_v<T, TrackingResult>) {
          return dump({{"boxes", detail::to_json(r.boxes)}});
        } else if constexpr (std::is_same_v<T, CountingResult>) {
          return std::to_string(r.counts.circles) + "," + std::to_string(r.counts.squares) + "," +
                 std::to_string(r.counts.triangles);
        } else if constexpr (std::is_same_v<T, ArtifactGroundingResult>) {
          json boxes = json::array();
          for (const auto& b : r.boxes) boxes.push_back(detail::to_json(b));
          return dump({{"boxes", boxes}});
        } else if constexpr (std::is_same_v<T, JudgeVerdict>) {
          return dump({{"analysis", r.analysis},
                       {"judgment", "[[" + std::string(to_string(r.decision)) + "]]"}});
        } else {
          return std::string();
        }
      },
      response);
}

}  // namespace veritas
