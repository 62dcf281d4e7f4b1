#include "toolforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "toolforge/util.hpp"

namespace toolforge {

namespace {

// Planned learned-tool names. Suffixed variants ("_2", ...) still match by
// prefix, which is how the engine recognizes its own creations in prompts.
constexpr const char* kRatioTool = "compute_3d_ratio";
constexpr const char* kGroupTool = "compute_3d_group_size_ratio";
constexpr const char* kMergedTool = "compute_objects_size_ratio";
constexpr const char* kClosestTool = "find_closest_obj";
constexpr const char* kCompareTool = "compare_3d_distances";

bool name_matches(const std::string& name, const std::string& planned) {
  if (name == planned) return true;
  // planned + "_<n>" suffix form
  if (name.size() > planned.size() + 1 && name.compare(0, planned.size(), planned) == 0 &&
      name[planned.size()] == '_') {
    return std::all_of(name.begin() + static_cast<std::ptrdiff_t>(planned.size()) + 1,
                       name.end(), [](unsigned char c) { return std::isdigit(c); });
  }
  return false;
}

bool any_planned_tool_in(const std::string& text) {
  for (const char* planned :
       {kMergedTool, kGroupTool, kRatioTool, kClosestTool, kCompareTool}) {
    if (text.find(planned) != std::string::npos) return true;
  }
  return false;
}

std::string user_text(const ChatRequest& req) {
  std::string all;
  for (const auto& m : req.messages) {
    if (m.speaker == "user") {
      all += m.text;
      all += "\n";
    }
  }
  return all;
}

// First non-empty line following a marker line such as "## Question".
std::string section_line(const std::string& text, const std::string& marker) {
  std::size_t pos = text.find(marker);
  if (pos == std::string::npos) throw Error("synthetic: marker '" + marker + "' not found");
  pos = text.find('\n', pos);
  if (pos == std::string::npos) throw Error("synthetic: nothing after marker '" + marker + "'");
  ++pos;
  while (pos < text.size() && text[pos] == '\n') ++pos;
  std::size_t end = text.find('\n', pos);
  if (end == std::string::npos) end = text.size();
  return trim(text.substr(pos, end - pos));
}

std::string line_value(const std::string& text, const std::string& prefix) {
  std::size_t pos = text.find(prefix);
  if (pos == std::string::npos) throw Error("synthetic: line '" + prefix + "' not found");
  pos += prefix.size();
  std::size_t end = text.find('\n', pos);
  if (end == std::string::npos) end = text.size();
  return trim(text.substr(pos, end - pos));
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::string label_list_literal(const std::vector<std::string>& labels, std::size_t from,
                               std::size_t count) {
  std::string out = "[";
  for (std::size_t i = 0; i < count; ++i) {
    if (i) out += ", ";
    out += quote(labels[from + i]);
  }
  return out + "]";
}

int dim_index(const std::string& dimension) { return dimension == "width" ? 0 : 1; }

std::string fenced(const std::string& body) { return "```\n" + body + "\n```"; }

// ----- Basic (level-0-only) reference programs per template -----------------

std::string basic_ratio(const QuestionSpec& q, bool alt_names) {
  const std::string a = alt_names ? "first_box" : "box_a";
  const std::string b = alt_names ? "second_box" : "box_b";
  const int di = dim_index(q.oracle.dimension);
  std::ostringstream out;
  out << "let " << a << " = loc(" << quote(q.oracle.labels[0]) << ")[0]\n";
  out << "let " << b << " = loc(" << quote(q.oracle.labels[1]) << ")[0]\n";
  out << "let size_a = get_2d_object_size(" << a << ")\n";
  out << "let size_b = get_2d_object_size(" << b << ")\n";
  out << "return (size_a[" << di << "] * depth(" << a << ")) / (size_b[" << di << "] * depth("
      << b << "))";
  return out.str();
}

std::string basic_group(const QuestionSpec& q, bool alt_names) {
  const std::string acc = alt_names ? "combined" : "total";
  const int di = dim_index(q.oracle.dimension);
  std::ostringstream out;
  out << "let " << acc << " = 0\n";
  out << "for label in " << label_list_literal(q.oracle.labels, 0, q.oracle.labels.size() - 1)
      << " {\n";
  out << "  let b = loc(label)[0]\n";
  out << "  let " << acc << " = " << acc << " + get_2d_object_size(b)[" << di
      << "] * depth(b)\n";
  out << "}\n";
  out << "let unit = loc(" << quote(q.oracle.labels.back()) << ")[0]\n";
  out << "return " << acc << " / (get_2d_object_size(unit)[" << di << "] * depth(unit))";
  return out.str();
}

std::string basic_closest(const QuestionSpec& q, bool alt_names) {
  const std::string best = alt_names ? "winner" : "best";
  std::ostringstream out;
  out << "let " << best << " = null\n";
  out << "let best_depth = 0\n";
  out << "for label in " << label_list_literal(q.oracle.labels, 0, q.oracle.labels.size())
      << " {\n";
  out << "  let d = depth(loc(label)[0])\n";
  out << "  if " << best << " == null or d < best_depth {\n";
  out << "    let " << best << " = label\n";
  out << "    let best_depth = d\n";
  out << "  }\n";
  out << "}\n";
  out << "return " << best;
  return out.str();
}

// Mirrors the oracle arithmetic exactly: 2D center distance first, then the
// depth gap folded in.
std::string basic_compare(const QuestionSpec& q, bool alt_names) {
  const std::string d1 = alt_names ? "dist_to_b" : "dist_ab";
  const std::string d2 = alt_names ? "dist_to_c" : "dist_ac";
  std::ostringstream out;
  out << "let a = loc(" << quote(q.oracle.labels[0]) << ")[0]\n";
  out << "let b = loc(" << quote(q.oracle.labels[1]) << ")[0]\n";
  out << "let c = loc(" << quote(q.oracle.labels[2]) << ")[0]\n";
  out << "let ax = (a[0] + a[2]) / 2\n";
  out << "let ay = (a[1] + a[3]) / 2\n";
  out << "let bx = (b[0] + b[2]) / 2\n";
  out << "let by = (b[1] + b[3]) / 2\n";
  out << "let cx = (c[0] + c[2]) / 2\n";
  out << "let cy = (c[1] + c[3]) / 2\n";
  out << "let flat_ab = sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by))\n";
  out << "let flat_ac = sqrt((ax - cx) * (ax - cx) + (ay - cy) * (ay - cy))\n";
  out << "let gap_ab = depth(a) - depth(b)\n";
  out << "let gap_ac = depth(a) - depth(c)\n";
  out << "let " << d1 << " = sqrt(flat_ab * flat_ab + gap_ab * gap_ab)\n";
  out << "let " << d2 << " = sqrt(flat_ac * flat_ac + gap_ac * gap_ac)\n";
  out << "if " << d1 << " < " << d2 << " {\n  return \"yes\"\n}\nreturn \"no\"";
  return out.str();
}

std::string basic_count(const QuestionSpec& q, bool alt_names) {
  const std::string n = alt_names ? "seen" : "n";
  std::ostringstream out;
  out << "let " << n << " = 0\n";
  out << "for b in loc(" << quote(q.oracle.labels[0]) << ") {\n";
  out << "  let " << n << " = " << n << " + 1\n";
  out << "}\n";
  out << "return " << n;
  return out.str();
}

std::string basic_largest(const QuestionSpec& q, bool alt_names) {
  const std::string best = alt_names ? "winner" : "best";
  const int di = dim_index(q.oracle.dimension);
  std::ostringstream out;
  out << "let " << best << " = null\n";
  out << "let best_size = 0\n";
  out << "for label in " << label_list_literal(q.oracle.labels, 0, q.oracle.labels.size())
      << " {\n";
  out << "  let b = loc(label)[0]\n";
  out << "  let size_3d = get_2d_object_size(b)[" << di << "] * depth(b)\n";
  out << "  if " << best << " == null or size_3d > best_size {\n";
  out << "    let " << best << " = label\n";
  out << "    let best_size = size_3d\n";
  out << "  }\n";
  out << "}\n";
  out << "return " << best;
  return out.str();
}

std::string basic_program(const QuestionSpec& q, bool alt_names) {
  switch (q.oracle.tmpl) {
    case scene::Template::Ratio3d: return basic_ratio(q, alt_names);
    case scene::Template::GroupStackCount: return basic_group(q, alt_names);
    case scene::Template::ClosestToCamera: return basic_closest(q, alt_names);
    case scene::Template::DistanceCompare: return basic_compare(q, alt_names);
    case scene::Template::CountLabel: return basic_count(q, alt_names);
    case scene::Template::LargestBy3d: return basic_largest(q, alt_names);
  }
  throw Error("synthetic: unknown template");
}

// Plausibly wrong: forgets the depth term, inverts a comparison, or
// miscounts. Executes fine, answers wrong.
std::string wrong_program(const QuestionSpec& q) {
  const int di = dim_index(q.oracle.dimension);
  std::ostringstream out;
  switch (q.oracle.tmpl) {
    case scene::Template::Ratio3d:
      out << "let box_a = loc(" << quote(q.oracle.labels[0]) << ")[0]\n";
      out << "let box_b = loc(" << quote(q.oracle.labels[1]) << ")[0]\n";
      out << "return get_2d_object_size(box_a)[" << di << "] / get_2d_object_size(box_b)[" << di
          << "]";
      return out.str();
    case scene::Template::GroupStackCount:
      out << "let total = 0\n";
      out << "for label in " << label_list_literal(q.oracle.labels, 0, q.oracle.labels.size() - 1)
          << " {\n";
      out << "  let total = total + get_2d_object_size(loc(label)[0])[" << di << "]\n";
      out << "}\n";
      out << "return total / get_2d_object_size(loc(" << quote(q.oracle.labels.back())
          << ")[0])[" << di << "]";
      return out.str();
    case scene::Template::ClosestToCamera:
      out << "let best = null\n";
      out << "let best_depth = 0\n";
      out << "for label in " << label_list_literal(q.oracle.labels, 0, q.oracle.labels.size())
          << " {\n";
      out << "  let d = depth(loc(label)[0])\n";
      out << "  if best == null or d > best_depth {\n";  // farthest, not closest
      out << "    let best = label\n";
      out << "    let best_depth = d\n";
      out << "  }\n";
      out << "}\n";
      out << "return best";
      return out.str();
    case scene::Template::DistanceCompare: {
      std::string body = basic_compare(q, false);
      auto pos = body.find("if dist_ab < dist_ac");
      body.replace(pos, std::string("if dist_ab < dist_ac").size(), "if dist_ab > dist_ac");
      return body;
    }
    case scene::Template::CountLabel:
      out << "return len(loc(" << quote(q.oracle.labels[0]) << ")) + 1";
      return out.str();
    case scene::Template::LargestBy3d:
      out << "let best = null\n";
      out << "let best_size = 0\n";
      out << "for label in " << label_list_literal(q.oracle.labels, 0, q.oracle.labels.size())
          << " {\n";
      out << "  let s = get_2d_object_size(loc(label)[0])[" << di << "]\n";  // 2D only
      out << "  if best == null or s > best_size {\n";
      out << "    let best = label\n";
      out << "    let best_size = s\n";
      out << "  }\n";
      out << "}\n";
      out << "return best";
      return out.str();
  }
  throw Error("synthetic: unknown template");
}

std::string broken_program(const QuestionSpec& q) {
  // Alternates between a parse failure and an execution failure.
  if (fnv1a64(q.id) % 2 == 0) return "let x =";
  return "return mystery_measure(" + quote(q.oracle.labels[0]) + ")";
}

// ----- Planned tool definitions ---------------------------------------------

struct ToolPlanEntry {
  std::string name;
  std::string params;
  std::string docstring;
  std::string code;
};

ToolPlanEntry plan_ratio_tool() {
  ToolPlanEntry t;
  t.name = kRatioTool;
  t.params = "label_a: label; label_b: label; dimension: text";
  t.docstring =
      "Ratio of two objects' 3D sizes along a dimension ('height' or 'width'); 3D size is 2D "
      "pixel size times depth.";
  t.code =
      "def compute_3d_ratio(label_a, label_b, dimension) {\n"
      "  let box_a = loc(label_a)[0]\n"
      "  let box_b = loc(label_b)[0]\n"
      "  let size_a = get_2d_object_size(box_a)\n"
      "  let size_b = get_2d_object_size(box_b)\n"
      "  if dimension == \"width\" {\n"
      "    return (size_a[0] * depth(box_a)) / (size_b[0] * depth(box_b))\n"
      "  }\n"
      "  return (size_a[1] * depth(box_a)) / (size_b[1] * depth(box_b))\n"
      "}";
  return t;
}

ToolPlanEntry plan_group_tool() {
  ToolPlanEntry t;
  t.name = kGroupTool;
  t.params = "group_labels: list; unit_label: label; dimension: text";
  t.docstring =
      "How many unit objects stack to match the combined 3D size of a group of objects along a "
      "dimension; sums group 3D sizes and divides by the unit's 3D size.";
  t.code =
      "def compute_3d_group_size_ratio(group_labels, unit_label, dimension) {\n"
      "  let total = 0\n"
      "  for label in group_labels {\n"
      "    let b = loc(label)[0]\n"
      "    if dimension == \"width\" {\n"
      "      let total = total + get_2d_object_size(b)[0] * depth(b)\n"
      "    } else {\n"
      "      let total = total + get_2d_object_size(b)[1] * depth(b)\n"
      "    }\n"
      "  }\n"
      "  let unit = loc(unit_label)[0]\n"
      "  if dimension == \"width\" {\n"
      "    return total / (get_2d_object_size(unit)[0] * depth(unit))\n"
      "  }\n"
      "  return total / (get_2d_object_size(unit)[1] * depth(unit))\n"
      "}";
  return t;
}

ToolPlanEntry plan_merged_tool() {
  ToolPlanEntry t;
  t.name = kMergedTool;
  t.params = "numerator_labels: list; denominator_labels: list; dimension: text";
  t.docstring =
      "General 3D size ratio: sums the 3D sizes of the numerator objects and divides by the "
      "summed 3D sizes of the denominator objects, along 'height' or 'width'. Covers pairwise "
      "ratios and group-vs-unit stacking counts.";
  t.code =
      "def compute_objects_size_ratio(numerator_labels, denominator_labels, dimension) {\n"
      "  let num = 0\n"
      "  for label in numerator_labels {\n"
      "    let b = loc(label)[0]\n"
      "    if dimension == \"width\" {\n"
      "      let num = num + get_2d_object_size(b)[0] * depth(b)\n"
      "    } else {\n"
      "      let num = num + get_2d_object_size(b)[1] * depth(b)\n"
      "    }\n"
      "  }\n"
      "  let den = 0\n"
      "  for label in denominator_labels {\n"
      "    let b = loc(label)[0]\n"
      "    if dimension == \"width\" {\n"
      "      let den = den + get_2d_object_size(b)[0] * depth(b)\n"
      "    } else {\n"
      "      let den = den + get_2d_object_size(b)[1] * depth(b)\n"
      "    }\n"
      "  }\n"
      "  return num / den\n"
      "}";
  return t;
}

ToolPlanEntry plan_closest_tool() {
  ToolPlanEntry t;
  t.name = kClosestTool;
  t.params = "labels: list";
  t.docstring =
      "Among the given object labels, returns the label whose object is closest to the camera "
      "(minimal depth).";
  t.code =
      "def find_closest_obj(labels) {\n"
      "  let best = null\n"
      "  let best_depth = 0\n"
      "  for label in labels {\n"
      "    let d = depth(loc(label)[0])\n"
      "    if best == null or d < best_depth {\n"
      "      let best = label\n"
      "      let best_depth = d\n"
      "    }\n"
      "  }\n"
      "  return best\n"
      "}";
  return t;
}

ToolPlanEntry plan_compare_tool() {
  ToolPlanEntry t;
  t.name = kCompareTool;
  t.params = "anchor: label; label_b: label; label_c: label";
  t.docstring =
      "Returns 'yes' when the anchor object is closer in 3D to the first object than to the "
      "second, else 'no'; 3D distance combines center distance with the depth gap.";
  t.code =
      "def compare_3d_distances(anchor, label_b, label_c) {\n"
      "  let a = loc(anchor)[0]\n"
      "  let b = loc(label_b)[0]\n"
      "  let c = loc(label_c)[0]\n"
      "  let ax = (a[0] + a[2]) / 2\n"
      "  let ay = (a[1] + a[3]) / 2\n"
      "  let bx = (b[0] + b[2]) / 2\n"
      "  let by = (b[1] + b[3]) / 2\n"
      "  let cx = (c[0] + c[2]) / 2\n"
      "  let cy = (c[1] + c[3]) / 2\n"
      "  let flat_ab = sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by))\n"
      "  let flat_ac = sqrt((ax - cx) * (ax - cx) + (ay - cy) * (ay - cy))\n"
      "  let gap_ab = depth(a) - depth(b)\n"
      "  let gap_ac = depth(a) - depth(c)\n"
      "  let dist_ab = sqrt(flat_ab * flat_ab + gap_ab * gap_ab)\n"
      "  let dist_ac = sqrt(flat_ac * flat_ac + gap_ac * gap_ac)\n"
      "  if dist_ab < dist_ac {\n"
      "    return \"yes\"\n"
      "  }\n"
      "  return \"no\"\n"
      "}";
  return t;
}

std::string tool_reply_text(const ToolPlanEntry& t) {
  std::ostringstream out;
  out << "<tool>\n<name>" << t.name << "</name>\n<params>" << t.params << "</params>\n"
      << "<docstring>" << t.docstring << "</docstring>\n<code>\n"
      << t.code << "\n</code>\n</tool>";
  return out.str();
}

// Learned tool names offered in a generation prompt's catalog section.
std::vector<std::string> learned_names_in_prompt(const std::string& text) {
  std::vector<std::string> names;
  std::size_t pos = text.find("### Learned tools");
  if (pos == std::string::npos) return names;
  std::size_t end = text.find("## ", pos + 3);  // next section header
  const std::string section = text.substr(pos, end == std::string::npos ? end : end - pos);
  std::istringstream lines(section);
  std::string line;
  while (std::getline(lines, line)) {
    const std::string t = trim(line);
    if (t.size() > 2 && t[0] == '-' && t[1] == ' ') {
      auto paren = t.find('(');
      if (paren != std::string::npos && paren > 2) names.push_back(t.substr(2, paren - 2));
    }
  }
  return names;
}

std::optional<std::string> find_planned(const std::vector<std::string>& names,
                                        const std::string& planned) {
  for (const auto& n : names) {
    if (name_matches(n, planned)) return n;
  }
  return std::nullopt;
}

int sample_index_of(const ChatRequest& req) {
  auto pos = req.context_key.rfind(";s=");
  if (pos == std::string::npos) return 0;
  return std::atoi(req.context_key.c_str() + pos + 3);
}

}  // namespace

SyntheticChatProvider::SyntheticChatProvider(const Dataset& dataset) {
  for (const auto& q : dataset.questions) {
    by_norm_question_.emplace(normalize_question(q.question), q);
    by_id_.emplace(q.id, q);
  }
  fixtures_ = dataset.fixtures;
}

const QuestionSpec& SyntheticChatProvider::by_question(const std::string& question_text) const {
  auto it = by_norm_question_.find(normalize_question(question_text));
  if (it == by_norm_question_.end()) {
    throw Error("synthetic: unknown question '" + question_text + "'");
  }
  return it->second;
}

const QuestionSpec& SyntheticChatProvider::by_id(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error("synthetic: unknown example id '" + id + "'");
  return it->second;
}

const scene::SceneFixture& SyntheticChatProvider::fixture(const std::string& scene_id) const {
  auto it = fixtures_.find(scene_id);
  if (it == fixtures_.end()) throw Error("synthetic: unknown scene '" + scene_id + "'");
  return it->second;
}

std::string SyntheticChatProvider::chat_raw(const ChatRequest& req) {
  switch (req.role) {
    case Role::ProgGen: return handle_generation(req);
    case Role::QualityJudge: return handle_quality_judge(req);
    case Role::CorrectnessJudge: return handle_correctness(req);
    case Role::ClusterAnalyst: return handle_cluster(req);
    case Role::Abstractor: return handle_abstraction(req);
    case Role::Rewriter: return handle_rewrite(req);
    case Role::DedupAnalyst: return handle_dedup(req);
    case Role::Merger: return handle_merge(req);
    case Role::ComplexityRater: return handle_rating(req);
  }
  throw Error("synthetic: unhandled role");
}

bool SyntheticChatProvider::answer_matches_oracle(const QuestionSpec& spec,
                                                  const std::string& answer_text) const {
  scene::GroundTruth gt = scene::oracle_answer(fixture(spec.scene_id), spec.id, spec.oracle);
  switch (gt.answer_type) {
    case scene::AnswerType::Float: {
      char* end = nullptr;
      double got = std::strtod(answer_text.c_str(), &end);
      if (end == answer_text.c_str()) return false;
      double want = gt.answer.number();
      return std::fabs(got - want) <= 1e-6 * std::max(1.0, std::fabs(want));
    }
    case scene::AnswerType::Counting: {
      char* end = nullptr;
      double got = std::strtod(answer_text.c_str(), &end);
      if (end == answer_text.c_str()) return false;
      return got == static_cast<double>(gt.answer.as_int());
    }
    default:
      return trim(answer_text) == gt.answer.as_text();
  }
}

std::string SyntheticChatProvider::handle_generation(const ChatRequest& req) const {
  const std::string text = user_text(req);
  const QuestionSpec& spec = by_question(section_line(text, "## Question"));
  const int sample = sample_index_of(req);
  if (sample == 1) return fenced(basic_program(spec, /*alt_names=*/true));
  if (sample == 2) return fenced(wrong_program(spec));
  if (sample >= 3) return fenced(broken_program(spec));

  // Sample 0: prefer the most general learned tool that covers the template.
  const auto learned = learned_names_in_prompt(text);
  const auto& labels = spec.oracle.labels;
  switch (spec.oracle.tmpl) {
    case scene::Template::Ratio3d: {
      if (auto merged = find_planned(learned, kMergedTool)) {
        return fenced("return " + *merged + "([" + quote(labels[0]) + "], [" + quote(labels[1]) +
                      "], " + quote(spec.oracle.dimension) + ")");
      }
      if (auto tool = find_planned(learned, kRatioTool)) {
        return fenced("return " + *tool + "(" + quote(labels[0]) + ", " + quote(labels[1]) +
                      ", " + quote(spec.oracle.dimension) + ")");
      }
      break;
    }
    case scene::Template::GroupStackCount: {
      if (auto merged = find_planned(learned, kMergedTool)) {
        return fenced("return " + *merged + "(" +
                      label_list_literal(labels, 0, labels.size() - 1) + ", [" +
                      quote(labels.back()) + "], " + quote(spec.oracle.dimension) + ")");
      }
      if (auto tool = find_planned(learned, kGroupTool)) {
        return fenced("return " + *tool + "(" + label_list_literal(labels, 0, labels.size() - 1) +
                      ", " + quote(labels.back()) + ", " + quote(spec.oracle.dimension) + ")");
      }
      break;
    }
    case scene::Template::ClosestToCamera: {
      if (auto tool = find_planned(learned, kClosestTool)) {
        return fenced("return " + *tool + "(" + label_list_literal(labels, 0, labels.size()) +
                      ")");
      }
      break;
    }
    case scene::Template::DistanceCompare: {
      if (auto tool = find_planned(learned, kCompareTool)) {
        return fenced("return " + *tool + "(" + quote(labels[0]) + ", " + quote(labels[1]) +
                      ", " + quote(labels[2]) + ")");
      }
      break;
    }
    default: break;
  }
  return fenced(basic_program(spec, /*alt_names=*/false));
}

std::string SyntheticChatProvider::handle_quality_judge(const ChatRequest& req) const {
  const std::string text = user_text(req);
  const QuestionSpec& spec = by_question(section_line(text, "### Question"));
  const std::string answer = line_value(text, "- **Final Answer:** ");
  const bool correct = answer_matches_oracle(spec, answer);
  std::ostringstream out;
  out << "<rating>" << (correct ? "9.0" : "4.0") << "</rating>\n<reasoning>\n";
  if (correct) {
    out << "The final answer agrees with the scene geometry; 2D measurements are converted "
           "through depth where required and the selected objects match the question.\n";
  } else {
    out << "The final answer disagrees with the scene geometry; the program mishandles the "
           "depth conversion or selects the wrong object.\n";
  }
  out << "</reasoning>";
  return out.str();
}

std::string SyntheticChatProvider::handle_correctness(const ChatRequest& req) const {
  const std::string text = user_text(req);
  const QuestionSpec& spec = by_question(section_line(text, "## Question"));
  const std::string answer = line_value(text, "**Rewritten result:** ");
  const bool correct = answer_matches_oracle(spec, answer);
  std::ostringstream out;
  out << "<verdict>" << (correct ? "CORRECT" : "INCORRECT") << "</verdict>\n<reasoning>\n"
      << (correct ? "The rewritten result matches the scene geometry."
                  : "The rewritten result contradicts the scene geometry.")
      << "\n</reasoning>";
  return out.str();
}

std::string SyntheticChatProvider::handle_cluster(const ChatRequest& req) const {
  const std::string text = user_text(req);
  // Collect (id, program) pairs in prompt order.
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t pos = 0;
  while ((pos = text.find("### Example ", pos)) != std::string::npos) {
    pos += std::string("### Example ").size();
    std::size_t eol = text.find('\n', pos);
    const std::string id = trim(text.substr(pos, eol - pos));
    std::size_t code_start = text.find("```", eol);
    std::size_t body_start = text.find('\n', code_start) + 1;
    std::size_t code_end = text.find("```", body_start);
    entries.emplace_back(id, text.substr(body_start, code_end - body_start));
    pos = code_end;
  }
  // Group by template, preserving encounter order.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;  // template -> indices
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const QuestionSpec& spec = by_id(entries[i].first);
    const std::string key = scene::template_name(spec.oracle.tmpl);
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) {
      groups.push_back({key, {i}});
    } else {
      it->second.push_back(i);
    }
  }

  std::ostringstream out;
  for (const auto& [tmpl_name, indices] : groups) {
    scene::Template tmpl = scene::template_from_name(tmpl_name);
    bool uses_learned = false;
    for (std::size_t i : indices) {
      if (any_planned_tool_in(entries[i].second)) uses_learned = true;
    }
    std::string pattern, parameters, reasoning, potential;
    if (uses_learned) {
      potential = "8.0";
      pattern = "Single call to an existing learned tool";
      parameters = "object labels";
      reasoning =
          "These programs already delegate to one learned tool call; there is no multi-step "
          "logic left to abstract.";
    } else {
      switch (tmpl) {
        case scene::Template::Ratio3d:
          pattern =
              "Locate two objects, convert each 2D size to 3D via depth, return the size ratio "
              "along a dimension";
          parameters = "two object labels; dimension (height or width)";
          break;
        case scene::Template::GroupStackCount:
          pattern =
              "Sum the 3D sizes of a group of objects and divide by a unit object's 3D size to "
              "count stacked units";
          parameters = "group labels; unit label; dimension";
          break;
        case scene::Template::ClosestToCamera:
          pattern = "Scan candidate objects and return the label with minimal depth";
          parameters = "candidate labels";
          break;
        case scene::Template::DistanceCompare:
          pattern =
              "Compute 3D distances from an anchor to two objects by combining center distance "
              "with depth gap, and compare them";
          parameters = "anchor label; two comparison labels";
          break;
        case scene::Template::CountLabel:
          pattern = "Count located boxes for one label";
          parameters = "object label";
          break;
        case scene::Template::LargestBy3d:
          pattern = "Scan candidate objects and return the label with the largest 3D dimension";
          parameters = "candidate labels; dimension";
          break;
      }
      const bool abstractable =
          tmpl == scene::Template::Ratio3d || tmpl == scene::Template::GroupStackCount ||
          tmpl == scene::Template::ClosestToCamera || tmpl == scene::Template::DistanceCompare;
      if (!abstractable) {
        potential = "7.0";
        reasoning =
            "The shared logic is a thin wrapper over one basic tool; parameterizing it would "
            "not simplify future programs.";
      } else if (indices.size() >= 6) {
        potential = "9.5";
        reasoning =
            "A recurring multi-step geometric computation with clean parameters and broad "
            "reuse; an abstracted function would collapse each program to one call.";
      } else {
        potential = "8.5";
        reasoning =
            "The pattern repeats but the sample is still small; more instances would confirm "
            "the parameterization.";
      }
    }
    out << "<cluster>\n<example_ids>";
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (k) out << ", ";
      out << entries[indices[k]].first;
    }
    out << "</example_ids>\n<pattern>" << pattern << "</pattern>\n<parameters>" << parameters
        << "</parameters>\n<abstraction_potential>" << potential
        << "</abstraction_potential>\n<reasoning>" << reasoning << "</reasoning>\n</cluster>\n\n";
  }
  return trim(out.str());
}

std::string SyntheticChatProvider::handle_abstraction(const ChatRequest& req) const {
  const std::string text = user_text(req);
  std::size_t pos = text.find("### Example ");
  if (pos == std::string::npos) throw Error("synthetic: abstraction prompt has no examples");
  pos += std::string("### Example ").size();
  const std::string first_id = trim(text.substr(pos, text.find('\n', pos) - pos));
  const QuestionSpec& spec = by_id(first_id);
  switch (spec.oracle.tmpl) {
    case scene::Template::Ratio3d: return tool_reply_text(plan_ratio_tool());
    case scene::Template::GroupStackCount: return tool_reply_text(plan_group_tool());
    case scene::Template::ClosestToCamera: return tool_reply_text(plan_closest_tool());
    case scene::Template::DistanceCompare: return tool_reply_text(plan_compare_tool());
    default:
      throw Error("synthetic: no tool plan for template " +
                  scene::template_name(spec.oracle.tmpl));
  }
}

std::string SyntheticChatProvider::handle_rewrite(const ChatRequest& req) const {
  const std::string text = user_text(req);
  const QuestionSpec& spec = by_question(section_line(text, "## Question"));
  const std::string tool_name = line_value(text, "Name: ");
  const auto& labels = spec.oracle.labels;
  std::string call;
  if (name_matches(tool_name, kMergedTool)) {
    if (spec.oracle.tmpl == scene::Template::Ratio3d) {
      call = tool_name + "([" + quote(labels[0]) + "], [" + quote(labels[1]) + "], " +
             quote(spec.oracle.dimension) + ")";
    } else {
      call = tool_name + "(" + label_list_literal(labels, 0, labels.size() - 1) + ", [" +
             quote(labels.back()) + "], " + quote(spec.oracle.dimension) + ")";
    }
  } else if (name_matches(tool_name, kRatioTool)) {
    call = tool_name + "(" + quote(labels[0]) + ", " + quote(labels[1]) + ", " +
           quote(spec.oracle.dimension) + ")";
  } else if (name_matches(tool_name, kGroupTool)) {
    call = tool_name + "(" + label_list_literal(labels, 0, labels.size() - 1) + ", " +
           quote(labels.back()) + ", " + quote(spec.oracle.dimension) + ")";
  } else if (name_matches(tool_name, kClosestTool)) {
    call = tool_name + "(" + label_list_literal(labels, 0, labels.size()) + ")";
  } else if (name_matches(tool_name, kCompareTool)) {
    call = tool_name + "(" + quote(labels[0]) + ", " + quote(labels[1]) + ", " +
           quote(labels[2]) + ")";
  } else {
    throw Error("synthetic: no rewrite plan for tool '" + tool_name + "'");
  }
  return fenced("return " + call);
}

std::string SyntheticChatProvider::handle_dedup(const ChatRequest& req) const {
  const std::string text = user_text(req);
  std::vector<std::string> names;
  std::size_t pos = 0;
  while ((pos = text.find("### ", pos)) != std::string::npos) {
    pos += 4;
    std::size_t eol = text.find('\n', pos);
    names.push_back(trim(text.substr(pos, eol - pos)));
    pos = eol;
  }
  std::optional<std::string> ratio, group;
  for (const auto& n : names) {
    if (name_matches(n, kRatioTool)) ratio = n;
    if (name_matches(n, kGroupTool)) group = n;
  }
  if (ratio && group) {
    std::ostringstream out;
    out << "<merge_group>\n<tools>" << *ratio << ", " << *group << "</tools>\n"
        << "<similarity>0.97</similarity>\n<rationale>Both compute ratios of depth-scaled 3D "
           "sizes; one takes a pair of labels, the other a group and a unit. A merged tool "
           "taking numerator and denominator label lists covers both.</rationale>\n"
        << "</merge_group>";
    return out.str();
  }
  return "<no_duplicates/>";
}

std::string SyntheticChatProvider::handle_merge(const ChatRequest&) const {
  return tool_reply_text(plan_merged_tool());
}

std::string SyntheticChatProvider::handle_rating(const ChatRequest& req) const {
  const std::string text = user_text(req);
  const QuestionSpec& spec = by_question(line_value(text, "**Question:** "));
  double score = 5.0;
  switch (spec.oracle.tmpl) {
    case scene::Template::CountLabel: score = 2.0; break;
    case scene::Template::ClosestToCamera: score = 4.0; break;
    case scene::Template::LargestBy3d: score = 4.5; break;
    case scene::Template::Ratio3d: score = 5.5; break;
    case scene::Template::DistanceCompare: score = 6.0; break;
    case scene::Template::GroupStackCount: score = 7.0; break;
  }
  std::ostringstream out;
  out << "<score>" << format_real(score) << "</score>\n<reasoning>\nScored by the depth of "
         "3D conversion, the number of objects involved, and the arithmetic the answer "
         "requires.\n</reasoning>";
  return out.str();
}

}  // namespace toolforge
