#include "toolforge/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "toolforge/util.hpp"

namespace toolforge::scene {

namespace {

nlohmann::json box_to_json(const BoxVal& b) {
  return nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

BoxVal box_from_json(const nlohmann::json& j, const std::string& key_path) {
  if (!j.is_array() || j.size() != 4) {
    throw CorruptionError("box must be an array of 4 numbers", key_path);
  }
  try {
    return BoxVal{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                  j[3].get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), key_path);
  }
}

const SceneObject& find_unique(const SceneFixture& s, const std::string& label) {
  const SceneObject* found = nullptr;
  for (const auto& obj : s.objects) {
    if (obj.label == label) {
      if (found) throw UnanswerableError("label '" + label + "' is ambiguous in " + s.id);
      found = &obj;
    }
  }
  if (!found) throw UnanswerableError("label '" + label + "' absent from " + s.id);
  return *found;
}

}  // namespace

nlohmann::json SceneFixture::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["width"] = width;
  j["height"] = height;
  auto objs = nlohmann::json::array();
  for (const auto& o : objects) {
    nlohmann::json oj;
    oj["label"] = o.label;
    oj["box"] = box_to_json(o.box);
    oj["depth"] = o.depth;
    oj["attributes"] = o.attributes;
    objs.push_back(std::move(oj));
  }
  j["objects"] = std::move(objs);
  j["vqa_script"] = vqa_script;
  return j;
}

SceneFixture SceneFixture::from_json(const nlohmann::json& j, const std::string& key_path) {
  SceneFixture s;
  try {
    s.id = j.at("id").get<std::string>();
    s.width = j.at("width").get<double>();
    s.height = j.at("height").get<double>();
    for (std::size_t i = 0; i < j.at("objects").size(); ++i) {
      const auto& oj = j["objects"][i];
      const std::string path = key_path + ".objects[" + std::to_string(i) + "]";
      SceneObject o;
      o.label = oj.at("label").get<std::string>();
      o.box = box_from_json(oj.at("box"), path + ".box");
      o.depth = oj.at("depth").get<double>();
      if (oj.contains("attributes")) {
        o.attributes = oj["attributes"].get<std::map<std::string, std::string>>();
      }
      s.objects.push_back(std::move(o));
    }
    if (j.contains("vqa_script")) {
      s.vqa_script = j["vqa_script"].get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), key_path);
  }
  s.validate();
  return s;
}

void SceneFixture::validate() const {
  if (width <= 0 || height <= 0) {
    throw IntegrityError("scene-bounds", "fixture '" + id + "' has non-positive size");
  }
  for (const auto& o : objects) {
    if (o.label.empty()) {
      throw IntegrityError("label-non-empty", "fixture '" + id + "' has an unlabeled object");
    }
    if (o.depth <= 0) {
      throw IntegrityError("depth-positive",
                           "object '" + o.label + "' in '" + id + "' has depth <= 0");
    }
    if (o.box.x_min > o.box.x_max || o.box.y_min > o.box.y_max) {
      throw IntegrityError("box-ordered", "object '" + o.label + "' in '" + id + "'");
    }
    if (o.box.x_min < 0 || o.box.y_min < 0 || o.box.x_max > width || o.box.y_max > height) {
      throw IntegrityError("box-in-bounds", "object '" + o.label + "' in '" + id + "'");
    }
  }
}

SceneFixture load_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fixture", path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), path);
  }
  return SceneFixture::from_json(j, path);
}

void save_fixture(const SceneFixture& fixture, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write fixture", path);
  out << fixture.to_json().dump(2) << "\n";
}

double iou(const BoxVal& a, const BoxVal& b) {
  double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  double inter = ix * iy;
  double area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  double area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  double uni = area_a + area_b - inter;
  if (uni <= 0) return 0;
  return inter / uni;
}

std::vector<BoxVal> tool_loc(const SceneFixture& s, const std::string& label) {
  std::vector<BoxVal> out;
  const std::string wanted = lowercase(trim(label));
  for (const auto& obj : s.objects) {
    if (lowercase(obj.label) == wanted) out.push_back(obj.box);
  }
  return out;
}

double tool_depth(const SceneFixture& s, const BoxVal& box) {
  double best = 0;
  const SceneObject* match = nullptr;
  for (const auto& obj : s.objects) {
    double v = iou(box, obj.box);
    if (v > best) {
      best = v;
      match = &obj;
    }
  }
  if (!match || best < 0.5) throw ToolFailure("no object under box");
  return match->depth;
}

std::pair<double, double> tool_get_2d_object_size(const SceneFixture&, const BoxVal& box) {
  return {box.x_max - box.x_min, box.y_max - box.y_min};
}

bool tool_same_object(const SceneFixture&, const BoxVal& a, const BoxVal& b) {
  return iou(a, b) > 0.5;
}

std::string tool_vqa(const SceneFixture& s, const std::string& question) {
  auto it = s.vqa_script.find(normalize_question(question));
  if (it == s.vqa_script.end()) {
    // A missing entry is a fixture gap and must fail loudly.
    throw ToolFailure("unscripted VQA query: " + question);
  }
  return it->second;
}

std::string answer_type_name(AnswerType t) {
  switch (t) {
    case AnswerType::YesNo: return "yes_no";
    case AnswerType::MultipleChoice: return "multiple_choice";
    case AnswerType::Counting: return "counting";
    case AnswerType::Float: return "float";
  }
  return "?";
}

AnswerType answer_type_from_name(const std::string& name) {
  if (name == "yes_no") return AnswerType::YesNo;
  if (name == "multiple_choice") return AnswerType::MultipleChoice;
  if (name == "counting") return AnswerType::Counting;
  if (name == "float") return AnswerType::Float;
  throw CorruptionError("unknown answer type '" + name + "'", "answer_type");
}

std::string template_name(Template t) {
  switch (t) {
    case Template::Ratio3d: return "ratio_3d";
    case Template::GroupStackCount: return "group_stack_count";
    case Template::ClosestToCamera: return "closest_to_camera";
    case Template::DistanceCompare: return "distance_compare";
    case Template::CountLabel: return "count_label";
    case Template::LargestBy3d: return "largest_by_3d";
  }
  return "?";
}

Template template_from_name(const std::string& name) {
  if (name == "ratio_3d") return Template::Ratio3d;
  if (name == "group_stack_count") return Template::GroupStackCount;
  if (name == "closest_to_camera") return Template::ClosestToCamera;
  if (name == "distance_compare") return Template::DistanceCompare;
  if (name == "count_label") return Template::CountLabel;
  if (name == "largest_by_3d") return Template::LargestBy3d;
  throw CorruptionError("unknown template '" + name + "'", "template");
}

nlohmann::json TemplateInstance::to_json() const {
  nlohmann::json j;
  j["template"] = template_name(tmpl);
  j["labels"] = labels;
  j["dimension"] = dimension;
  return j;
}

TemplateInstance TemplateInstance::from_json(const nlohmann::json& j,
                                             const std::string& key_path) {
  TemplateInstance t;
  try {
    t.tmpl = template_from_name(j.at("template").get<std::string>());
    t.labels = j.at("labels").get<std::vector<std::string>>();
    if (j.contains("dimension")) t.dimension = j["dimension"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), key_path);
  }
  return t;
}

double object_dim_3d(const SceneObject& obj, const std::string& dimension) {
  double size_2d = dimension == "width" ? (obj.box.x_max - obj.box.x_min)
                                        : (obj.box.y_max - obj.box.y_min);
  return size_2d * obj.depth;
}

double distance_3d(const SceneObject& a, const SceneObject& b) {
  double acx = (a.box.x_min + a.box.x_max) / 2.0;
  double acy = (a.box.y_min + a.box.y_max) / 2.0;
  double bcx = (b.box.x_min + b.box.x_max) / 2.0;
  double bcy = (b.box.y_min + b.box.y_max) / 2.0;
  double d2d = std::sqrt((acx - bcx) * (acx - bcx) + (acy - bcy) * (acy - bcy));
  double dz = a.depth - b.depth;
  return std::sqrt(d2d * d2d + dz * dz);
}

GroundTruth oracle_answer(const SceneFixture& s, const std::string& question_id,
                          const TemplateInstance& inst) {
  GroundTruth gt;
  gt.question_id = question_id;
  switch (inst.tmpl) {
    case Template::Ratio3d: {
      if (inst.labels.size() != 2) throw UnanswerableError("ratio_3d needs 2 labels");
      const SceneObject& a = find_unique(s, inst.labels[0]);
      const SceneObject& b = find_unique(s, inst.labels[1]);
      double denom = object_dim_3d(b, inst.dimension);
      if (denom == 0) throw UnanswerableError("zero-size denominator object");
      gt.answer = Value::real(object_dim_3d(a, inst.dimension) / denom);
      gt.answer_type = AnswerType::Float;
      return gt;
    }
    case Template::GroupStackCount: {
      if (inst.labels.size() < 2) throw UnanswerableError("group_stack_count needs 2+ labels");
      // Last label is the unit; the rest form the measured group.
      double total = 0;
      for (std::size_t i = 0; i + 1 < inst.labels.size(); ++i) {
        total += object_dim_3d(find_unique(s, inst.labels[i]), inst.dimension);
      }
      double unit = object_dim_3d(find_unique(s, inst.labels.back()), inst.dimension);
      if (unit == 0) throw UnanswerableError("zero-size unit object");
      gt.answer = Value::real(total / unit);
      gt.answer_type = AnswerType::Float;
      return gt;
    }
    case Template::ClosestToCamera: {
      if (inst.labels.size() < 2) throw UnanswerableError("closest_to_camera needs 2+ labels");
      std::string best;
      double best_depth = 0;
      for (const auto& label : inst.labels) {
        const SceneObject& obj = find_unique(s, label);
        if (best.empty() || obj.depth < best_depth) {
          best = label;
          best_depth = obj.depth;
        }
      }
      gt.answer = Value::text(best);
      gt.answer_type = AnswerType::MultipleChoice;
      return gt;
    }
    case Template::DistanceCompare: {
      if (inst.labels.size() != 3) throw UnanswerableError("distance_compare needs 3 labels");
      const SceneObject& a = find_unique(s, inst.labels[0]);
      const SceneObject& b = find_unique(s, inst.labels[1]);
      const SceneObject& c = find_unique(s, inst.labels[2]);
      gt.answer = Value::text(distance_3d(a, b) < distance_3d(a, c) ? "yes" : "no");
      gt.answer_type = AnswerType::YesNo;
      return gt;
    }
    case Template::CountLabel: {
      if (inst.labels.size() != 1) throw UnanswerableError("count_label needs 1 label");
      std::int64_t n = 0;
      for (const auto& obj : s.objects) {
        if (obj.label == inst.labels[0]) ++n;
      }
      if (n == 0) throw UnanswerableError("label '" + inst.labels[0] + "' absent from " + s.id);
      gt.answer = Value::integer(n);
      gt.answer_type = AnswerType::Counting;
      return gt;
    }
    case Template::LargestBy3d: {
      if (inst.labels.size() < 2) throw UnanswerableError("largest_by_3d needs 2+ labels");
      std::string best;
      double best_dim = 0;
      for (const auto& label : inst.labels) {
        const SceneObject& obj = find_unique(s, label);
        double d = object_dim_3d(obj, inst.dimension);
        if (best.empty() || d > best_dim) {
          best = label;
          best_dim = d;
        }
      }
      gt.answer = Value::text(best);
      gt.answer_type = AnswerType::MultipleChoice;
      return gt;
    }
  }
  throw UnanswerableError("unknown template");
}

std::string render_scene_text(const SceneFixture& s) {
  std::ostringstream out;
  out << "Scene " << s.id << " (" << format_real(s.width) << " x " << format_real(s.height)
      << " px). Objects:\n";
  out << "| label | box (x_min, y_min, x_max, y_max) | depth (m) | attributes |\n";
  for (const auto& o : s.objects) {
    out << "| " << o.label << " | (" << format_real(o.box.x_min) << ", "
        << format_real(o.box.y_min) << ", " << format_real(o.box.x_max) << ", "
        << format_real(o.box.y_max) << ") | " << format_real(o.depth) << " | ";
    bool first = true;
    for (const auto& [k, v] : o.attributes) {
      if (!first) out << ", ";
      out << k << "=" << v;
      first = false;
    }
    if (o.attributes.empty()) out << "-";
    out << " |\n";
  }
  return out.str();
}

}  // namespace toolforge::scene
