#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolforge/errors.hpp"
#include "toolforge/value.hpp"

namespace toolforge::scene {

struct SceneObject {
  std::string label;
  BoxVal box;        // pixels, within image bounds
  double depth = 1;  // meters from camera, > 0
  std::map<std::string, std::string> attributes;
};

// Declarative ground-truth scene standing in for an image. Immutable after
// load; every tool below is a pure function of it.
struct SceneFixture {
  std::string id;
  double width = 0, height = 0;  // pixels
  std::vector<SceneObject> objects;
  std::map<std::string, std::string> vqa_script;  // normalized question -> answer

  nlohmann::json to_json() const;
  static SceneFixture from_json(const nlohmann::json& j, const std::string& key_path);
  void validate() const;
};

SceneFixture load_fixture(const std::string& path);
void save_fixture(const SceneFixture& fixture, const std::string& path);

// Raised by a level-0 tool; the interpreter surfaces it as a tool error
// carrying the tool name.
class ToolFailure : public Error {
 public:
  explicit ToolFailure(const std::string& what) : Error(what) {}
};

double iou(const BoxVal& a, const BoxVal& b);

// The five level-0 primitives. Boxes are matched to fixture objects by
// intersection-over-union; 0.5 is both the match floor for depth and the
// overlap convention of same_object.
std::vector<BoxVal> tool_loc(const SceneFixture& s, const std::string& label);
double tool_depth(const SceneFixture& s, const BoxVal& box);          // throws ToolFailure
std::pair<double, double> tool_get_2d_object_size(const SceneFixture& s, const BoxVal& box);
bool tool_same_object(const SceneFixture& s, const BoxVal& a, const BoxVal& b);
std::string tool_vqa(const SceneFixture& s, const std::string& question);  // throws ToolFailure

// ----- Ground truth ---------------------------------------------------------

enum class AnswerType { YesNo, MultipleChoice, Counting, Float };

std::string answer_type_name(AnswerType t);
AnswerType answer_type_from_name(const std::string& name);

struct GroundTruth {
  std::string question_id;
  Value answer;
  AnswerType answer_type = AnswerType::Float;
};

// The six question templates of the synthetic domain.
enum class Template {
  Ratio3d,            // 3D size ratio between two objects along a dimension
  GroupStackCount,    // combined 3D height of a group divided by a unit height
  ClosestToCamera,    // which candidate label has minimal depth
  DistanceCompare,    // is A closer (3D) to B than to C
  CountLabel,         // how many objects carry a label
  LargestBy3d,        // which candidate label has the largest 3D dimension
};

std::string template_name(Template t);
Template template_from_name(const std::string& name);

// Oracle parameters for one instantiated question.
struct TemplateInstance {
  Template tmpl = Template::Ratio3d;
  std::vector<std::string> labels;  // role depends on template, see oracle_answer
  std::string dimension = "height";  // "height" or "width" where applicable

  nlohmann::json to_json() const;
  static TemplateInstance from_json(const nlohmann::json& j, const std::string& key_path);
};

class UnanswerableError : public Error {
 public:
  explicit UnanswerableError(const std::string& what)
      : Error("unanswerable instance: " + what) {}
};

// Geometry helpers shared by the oracle and tests. 3D size is 2D pixel size
// times depth; 3D distance combines 2D center distance with the depth gap.
double object_dim_3d(const SceneObject& obj, const std::string& dimension);
double distance_3d(const SceneObject& a, const SceneObject& b);

// Brute-force ground truth by exhaustive enumeration over fixture objects.
// Throws UnanswerableError when a referenced label is absent.
GroundTruth oracle_answer(const SceneFixture& s, const std::string& question_id,
                          const TemplateInstance& instance);

// Scene rendered as a structured text table for judge-facing prompts.
std::string render_scene_text(const SceneFixture& s);

}  // namespace toolforge::scene
