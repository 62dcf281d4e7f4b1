#include "toolforge/prompts.hpp"

#include <algorithm>
#include <sstream>

#include "toolforge/util.hpp"

namespace toolforge::prompts {

const char* kVplReference = R"(VPL quick reference
- One statement per line: `let x = expr`, `return expr`, `if cond { ... } else { ... }`,
  `for x in list { ... }`, `def helper(a, b) { ... }`.
- A program answers by executing `return`; a program that never returns produces no result.
- Expressions: numbers, strings ("..."), true/false/null, lists [a, b], arithmetic + - * /,
  comparisons == != < <= > >=, boolean and/or/not, indexing xs[i].
- Builtins: len(xs), sum(xs), min(xs)/min(a, b), max(xs)/max(a, b), abs(x), sqrt(x), append(xs, v).
- A box indexes as b[0]=x_min, b[1]=y_min, b[2]=x_max, b[3]=y_max. get_2d_object_size returns
  [width, height] in pixels.
- No recursion, no while loops, no I/O. Keep programs short and deterministic.

Geometry conventions
- Depth is the distance from the camera in meters; smaller depth means closer.
- 3D size = 2D size * depth.
- 2D distance = distance between box centers: sqrt((cx1-cx2)*(cx1-cx2) + (cy1-cy2)*(cy1-cy2)).
- 3D distance = sqrt(2D_distance^2 + (depth1 - depth2)^2).
- Distance to camera is simply the object's depth.
- Box centers decide leftmost/rightmost.
- loc() takes a base category only; filter located objects for conditions instead of
  passing compound descriptions.)";

namespace {

const char* kQualityJudgeSystem = R"(You are an expert judge evaluating the quality of a VPL program that solves a 3D spatial reasoning problem with tools (functions). Assess the program against the criteria below and assign a quality rating from 1.0 to 10.0.

## EVALUATION FRAMEWORK
### Scene Evidence Verification
You are given a structured description of the scene. Use it to:
- Verify the program's approach matches the objects actually present
- Validate the answer's reasonableness from the listed boxes and depths
- Check that 3D spatial relationships are interpreted correctly
- Confirm intermediate results in the namespace match the scene

### Namespace Analysis Considerations
When reviewing the execution namespace, check for:
- Correct object identification among multiple candidates
- Proper bounding box matching
- Expected intermediate calculations
- Appropriate object filtering and correct depth-based 3D conversions

### 3D Spatial Concepts & Definitions
- Depth: distance from camera (smaller depth = closer)
- 2D measurements are in pixel space; 3D measurements are real-world
- 3D size = 2D size * depth
- 2D distance: Euclidean distance between object center coordinates
- 3D distance = sqrt(2D_distance^2 + (depth1 - depth2)^2)
- Distance to camera is the object's depth value
- Center coordinates decide "leftmost"/"rightmost"
- loc() must locate base objects; filter afterwards for conditions
- All objects satisfying a condition must be checked, not just the first

## RATING CRITERIA (1.0 - 10.0 Scale)
1. 3D spatial understanding: correct 2D-to-3D conversions and distance handling
2. Correctness: the answer and intermediates agree with the scene evidence
3. Tool usage efficiency: leverages higher-level learned tools when suitable; avoids
   reimplementing existing functionality (basic tools are fine when nothing fits)
4. Code quality: clear structure, no unnecessary operations
5. Robustness: sensible filtering, tie-breaking, and empty-result handling

## REQUIRED OUTPUT FORMAT
Respond in exactly this format:

<rating>NUMBER</rating>
<reasoning>
[How the scene evidence supports or contradicts the program, strengths and weaknesses,
and missed opportunities to use available tools]
</reasoning>

Where NUMBER is a decimal between 1.0 and 10.0.)";

const char* kClusterAnalystSystem = R"(You are an expert at analyzing visual reasoning programs to identify common patterns that could be abstracted into reusable functions.

## Your Task
Analyze the given examples to:
1. Identify common computational patterns across examples
2. Group them into clusters based on shared functionality
3. Rate each cluster's abstraction potential (0-10 scale)

## Clustering Criteria
1. Common computational patterns - e.g., finding largest/smallest, counting with conditions
2. Similar operation sequences - e.g., locate -> filter -> compute -> compare
3. Shared logic structure - e.g., iteration patterns, comparison logic
4. Abstractable functionality - can be parameterized into a reusable function

## Evaluation Requirements
For each cluster provide: the example IDs that belong to it, the common pattern, the
parameters that vary between examples, an abstraction potential rating (0-10) based on how
well the pattern generalizes, parameter coverage, clarity, and reusability, and your
reasoning.

### Critical Constraints
- Each example ID must appear in exactly ONE cluster or in the unclustered group
- Focus on computational patterns, not surface similarities
- Only create clusters with strong shared patterns

## Response Format
Use exactly this format; include as many cluster blocks as needed, then an optional
unclustered block:

<cluster>
<example_ids>[comma-separated example IDs]</example_ids>
<pattern>[Description of the common computational pattern]</pattern>
<parameters>[Parameters that vary between examples]</parameters>
<abstraction_potential>[Rating from 0-10]</abstraction_potential>
<reasoning>[Why this rating; how the pattern could be abstracted]</reasoning>
</cluster>

<unclustered>
<example_ids>[comma-separated example IDs]</example_ids>
<reasoning>[Why these examples do not cluster]</reasoning>
</unclustered>)";

const char* kComplexityRaterSystem = R"(You are an expert in evaluating the complexity of 3D spatial reasoning questions. Assign a complexity score (1.0 - 10.0) to a single question based on its inherent spatial reasoning difficulty.

## EVALUATION FRAMEWORK
1. 3D spatial reasoning requirements: 2D vs 3D measurements, depth and distance-from-camera
   concepts, 3D size or distance calculations, conversions between measurement spaces
2. Spatial relationship complexity: number of objects involved, relationship types,
   multi-step reasoning with intermediate conclusions
3. Cognitive load: simultaneous constraints, candidate disambiguation, hypothetical or
   conditional reasoning, container relationships
4. Calculation complexity: counting vs ratios, proportions, multi-measurement comparisons,
   formula-based computations
5. Answer type: binary verification, bounded-choice discrimination, or precise numeric output

## SCORING GUIDELINES
Lower end: single-object property identification, basic counting, simple verification.
Middle: pairwise size/distance comparisons, simple ratios, basic 2D-to-3D conversions.
Higher end: multi-object multi-step reasoning, combined or derived quantities, hypothetical
conditions, ratios of aggregated measurements.

## REQUIRED OUTPUT FORMAT
Respond in EXACTLY this format:

<score>X.X</score>
<reasoning>
[Which dimensions drive the score and why]
</reasoning>

The score must be a decimal between 1.0 and 10.0.)";

const char* kCorrectnessJudgeSystem = R"(You are validating a rewritten VPL program. The rewrite replaced multi-step logic with a call to a newly abstracted tool, and its result differs from the original program's result. Decide whether the new result is equally valid or superior given the scene evidence; small floating-point differences on geometric quantities are common and acceptable.

Respond in exactly this format:

<verdict>CORRECT</verdict>
or
<verdict>INCORRECT</verdict>
followed by
<reasoning>[Why the new result is or is not acceptable]</reasoning>)";

const char* kAbstractorSystem = R"(You abstract recurring VPL program patterns into one reusable, parameterized tool. You receive a cluster of solved examples (questions, programs, results), the shared pattern, and the current tool catalog. Write a single VPL function that captures the shared logic with parameters for what varies. The function must be self-contained, call only listed tools and builtins, and contain no recursion.

Respond in exactly this format:

<tool>
<name>[snake_case function name]</name>
<params>[name: semantic-type; name: semantic-type; ... or "none"]</params>
<docstring>[One or two sentences: what it computes, parameter meaning, return value]</docstring>
<code>
def [name]([params]) {
  ...
  return ...
}
</code>
</tool>)";

const char* kRewriterSystem = R"(You rewrite a VPL program to use a newly abstracted tool while preserving the program's semantics. The rewrite must call the given tool, keep the same answer for the same scene, and be as simple as possible (ideally a single call). Use only the given tool, the basic tools, and builtins.

Reply with only the rewritten VPL program inside a fenced code block.)";

const char* kDedupAnalystSystem = R"(You maintain a library of learned VPL tools. Given the active learned tools (signatures, docstrings, bodies), identify groups of functionally duplicate tools - tools whose computations overlap so much that one generalized tool should replace them. Rate each group's functional similarity in [0, 1]; only strongly overlapping tools (similarity near 1) belong in a group. Groups must be disjoint.

Respond with one block per group:

<merge_group>
<tools>[comma-separated tool names]</tools>
<similarity>[0.0 - 1.0]</similarity>
<rationale>[What overlaps and how a merged tool would cover both]</rationale>
</merge_group>

If no tools should merge, respond with exactly:

<no_duplicates/>)";

const char* kMergerSystem = R"(You merge functionally duplicate VPL tools into one more general tool that covers every use case of the originals. You receive the tools to merge and the merge strategy. The merged tool must be callable wherever any original was used, possibly with richer parameters (for example, accepting lists where an original took a single value).

Respond in exactly this format:

<tool>
<name>[snake_case function name]</name>
<params>[name: semantic-type; ... or "none"]</params>
<docstring>[What it computes, parameter meaning, return value]</docstring>
<code>
def [name]([params]) {
  ...
  return ...
}
</code>
</tool>)";

const char* kGeneratorSystem = R"(You write VPL programs that answer questions about a scene using the available tools. Think step by step about the geometry, then reply with only the final VPL program inside a fenced code block. Prefer a learned tool over reimplementing its logic with basic tools; use basic tools when nothing fits.)";

std::string fenced(const std::string& code) { return "```\n" + code + "\n```"; }

ChatRequest make_request(const Config& config, Role role, std::string context_key,
                         std::string system_text, std::string user_text,
                         std::optional<std::string> scene_id = std::nullopt) {
  ChatRequest req;
  req.role = role;
  req.temperature = config.temperature_for(role);
  req.seed = config.seed;
  req.context_key = std::move(context_key);
  req.scene_id = std::move(scene_id);
  req.messages.push_back({"system", std::move(system_text)});
  req.messages.push_back({"user", std::move(user_text)});
  return req;
}

std::string examples_block(const std::vector<const Example*>& members) {
  std::ostringstream out;
  for (const Example* e : members) {
    out << "### Example " << e->id << "\n";
    out << "Question: " << e->question << "\n";
    out << "Result: " << e->result.render() << "\n";
    out << "Program:\n" << fenced(e->program) << "\n\n";
  }
  return out.str();
}

}  // namespace

std::string tool_key(const Tool& tool) {
  return tool.name + "#" + to_hex(fnv1a64(tool.body)).substr(0, 8);
}

std::string tool_catalog_text(const std::vector<const Tool*>& tools) {
  std::ostringstream out;
  std::ostringstream learned;
  int n_learned = 0;
  out << "### Basic tools (level 0)\n";
  for (const Tool* t : tools) {
    if (t->level == 0) {
      out << "- " << t->signature() << "\n    " << t->docstring << "\n";
    } else {
      learned << "- " << t->signature() << "\n    " << t->docstring << "\n";
      ++n_learned;
    }
  }
  out << "### Learned tools (level 1+)\n";
  if (n_learned == 0) {
    out << "(none yet)\n";
  } else {
    out << learned.str();
  }
  return out.str();
}

std::string namespace_text(const std::vector<std::pair<std::string, Value>>& bindings) {
  if (bindings.empty()) return "(empty)\n";
  std::ostringstream out;
  for (const auto& [name, value] : bindings) {
    out << name << " = " << value.render() << "\n";
  }
  return out.str();
}

ChatRequest build_generation_request(const Config& config, const std::string& question_key,
                                     const std::string& mode, int sample_index,
                                     const std::string& question,
                                     const std::vector<const Example*>& demos,
                                     const std::vector<const Tool*>& active_tools,
                                     const scene::SceneFixture& fixture) {
  std::ostringstream user;
  user << kVplReference << "\n\n## Tools\n" << tool_catalog_text(active_tools) << "\n";
  if (!demos.empty()) {
    user << "## Solved examples (most similar first)\n";
    for (const Example* demo : demos) {
      user << "### Demonstration\nQuestion: " << demo->question << "\nProgram:\n"
           << fenced(demo->program) << "\n\n";
    }
  }
  user << "## Scene\n" << scene::render_scene_text(fixture) << "\n";
  user << "## Question\n" << question << "\n";
  return make_request(
      config, Role::ProgGen,
      "q=" + question_key + ";it=" + mode + ";s=" + std::to_string(sample_index),
      kGeneratorSystem, user.str(), fixture.id);
}

ChatRequest build_quality_judge_request(const Config& config, const std::string& question_key,
                                        const std::string& question, const std::string& program,
                                        const vpl::ExecutionTrace& trace,
                                        const std::set<std::string>& tools_used,
                                        const std::vector<const Tool*>& active_tools,
                                        const scene::SceneFixture& fixture) {
  std::ostringstream user;
  user << "## TASK OVERVIEW\n### Question\n" << question << "\n\n";
  user << "### Program to Evaluate\n" << fenced(program) << "\n\n";
  user << "### Execution Results\n";
  user << "- **Status:** " << (trace.ok() ? "success" : "failure") << "\n";
  user << "- **Final Answer:** " << (trace.result ? trace.result->render() : "(none)") << "\n";
  std::vector<std::string> used(tools_used.begin(), tools_used.end());
  user << "- **Tools Used:** " << (used.empty() ? "(none)" : join(used, ", ")) << "\n";
  if (trace.error) {
    user << "- **Execution Error:** " << trace.error->kind << ": " << trace.error->message
         << "\n";
  }
  user << "\n### Execution Namespace (All Variables)\n" << namespace_text(trace.bindings);
  user << "\n## Scene\n" << scene::render_scene_text(fixture);
  int n_basic = 0, n_learned = 0;
  for (const Tool* t : active_tools) (t->level == 0 ? n_basic : n_learned) += 1;
  user << "\n## APPENDIX: Available Tools Reference\n";
  user << "The program had access to " << (n_basic + n_learned) << " tools total: " << n_basic
       << " basic tools and " << n_learned << " learned tools.\n\n";
  user << tool_catalog_text(active_tools);
  return make_request(config, Role::QualityJudge,
                      "q=" + question_key + ";prog=" + to_hex(fnv1a64(program)).substr(0, 12),
                      kQualityJudgeSystem, user.str(), fixture.id);
}

ChatRequest build_correctness_request(const Config& config, const std::string& example_id,
                                      const std::string& question,
                                      const std::string& original_program,
                                      const Value& original_result,
                                      const std::string& rewritten_program,
                                      const Value& new_result,
                                      const scene::SceneFixture& fixture) {
  std::ostringstream user;
  user << "## Question\n" << question << "\n\n";
  user << "## Original program\n" << fenced(original_program) << "\n";
  user << "**Original result:** " << original_result.render() << "\n\n";
  user << "## Rewritten program\n" << fenced(rewritten_program) << "\n";
  user << "**Rewritten result:** " << new_result.render() << "\n\n";
  user << "## Scene\n" << scene::render_scene_text(fixture);
  const std::string cmp =
      to_hex(fnv1a64(original_result.render() + "|" + new_result.render())).substr(0, 12);
  return make_request(config, Role::CorrectnessJudge, "ex=" + example_id + ";cmp=" + cmp,
                      kCorrectnessJudgeSystem, user.str(), fixture.id);
}

ChatRequest build_cluster_request(const Config& config,
                                  const std::vector<const Example*>& members) {
  std::ostringstream user;
  user << "## Examples to Analyze (" << members.size() << ")\n\n" << examples_block(members);
  std::vector<std::string> ids;
  for (const Example* e : members) ids.push_back(e->id);
  std::sort(ids.begin(), ids.end());
  return make_request(config, Role::ClusterAnalyst, "ids=" + join(ids, ","),
                      kClusterAnalystSystem, user.str());
}

ChatRequest build_abstraction_request(const Config& config,
                                      const std::vector<const Example*>& members,
                                      const std::string& pattern, const std::string& parameters,
                                      const std::vector<const Tool*>& active_tools, int attempt) {
  std::ostringstream user;
  user << kVplReference << "\n\n## Cluster pattern\n" << pattern << "\n";
  if (!parameters.empty()) user << "\n## Varying parameters\n" << parameters << "\n";
  user << "\n## Cluster examples\n" << examples_block(members);
  user << "## Existing tools\n" << tool_catalog_text(active_tools);
  std::vector<std::string> ids;
  for (const Example* e : members) ids.push_back(e->id);
  std::sort(ids.begin(), ids.end());
  return make_request(config, Role::Abstractor,
                      "ids=" + join(ids, ",") + ";try=" + std::to_string(attempt),
                      kAbstractorSystem, user.str());
}

ChatRequest build_rewrite_request(const Config& config, const Example& example, const Tool& tool,
                                  int attempt) {
  std::ostringstream user;
  user << kVplReference << "\n\n## Question\n" << example.question << "\n";
  user << "\n## Original program\n" << fenced(example.program) << "\n";
  user << "\n## Tool to use\nName: " << tool.name << "\nSignature: " << tool.signature()
       << "\nDocstring: " << tool.docstring << "\n";
  return make_request(config, Role::Rewriter,
                      "ex=" + example.id + ";tool=" + tool_key(tool) +
                          ";try=" + std::to_string(attempt),
                      kRewriterSystem, user.str(), example.scene_id);
}

ChatRequest build_dedup_request(const Config& config, const std::vector<const Tool*>& eligible) {
  std::ostringstream user;
  user << "## Active learned tools\n\n";
  for (const Tool* t : eligible) {
    user << "### " << t->name << "\nSignature: " << t->signature() << "\nDocstring: "
         << t->docstring << "\nBody:\n" << fenced(t->body) << "\n\n";
  }
  std::vector<std::string> keys;
  for (const Tool* t : eligible) keys.push_back(tool_key(*t));
  std::sort(keys.begin(), keys.end());
  return make_request(config, Role::DedupAnalyst, "tools=" + join(keys, ","),
                      kDedupAnalystSystem, user.str());
}

ChatRequest build_merge_request(const Config& config, const std::vector<const Tool*>& group,
                                const std::string& strategy, int attempt) {
  std::ostringstream user;
  user << kVplReference << "\n\n## Tools to merge\n\n";
  for (const Tool* t : group) {
    user << "### " << t->name << "\nSignature: " << t->signature() << "\nDocstring: "
         << t->docstring << "\nBody:\n" << fenced(t->body) << "\n\n";
  }
  user << "## Merge strategy\n" << (strategy.empty() ? "(none given)" : strategy) << "\n";
  std::vector<std::string> keys;
  for (const Tool* t : group) keys.push_back(tool_key(*t));
  std::sort(keys.begin(), keys.end());
  return make_request(config, Role::Merger,
                      "group=" + join(keys, ",") + ";try=" + std::to_string(attempt),
                      kMergerSystem, user.str());
}

ChatRequest build_rating_request(const Config& config, const std::string& question_id,
                                 const std::string& question, const std::string& answer_type) {
  std::ostringstream user;
  user << "## QUESTION TO EVALUATE\n\n**Question:** " << question << "\n\n**Answer Type:** "
       << answer_type << "\n";
  return make_request(config, Role::ComplexityRater, "q=" + question_id, kComplexityRaterSystem,
                      user.str());
}

}  // namespace toolforge::prompts
