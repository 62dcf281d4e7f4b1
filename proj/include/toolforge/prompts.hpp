#pragma once

#include <set>
#include <string>
#include <vector>

#include "toolforge/model.hpp"
#include "toolforge/providers.hpp"
#include "toolforge/scene.hpp"
#include "toolforge/vpl.hpp"

namespace toolforge::prompts {

// Bumped whenever a template's wording or tag grammar changes.
inline constexpr const char* kPromptVersion = "1";

extern const char* kVplReference;  // grammar + builtin + geometry reminder

// Short stable digest for a tool identity: "name#<8 hex of body hash>".
std::string tool_key(const Tool& tool);

// Signature + docstring catalog (never bodies) as offered to the generator.
std::string tool_catalog_text(const std::vector<const Tool*>& tools);

std::string namespace_text(const std::vector<std::pair<std::string, Value>>& bindings);

// mode is the iteration number ("1", "2", ...) or "solve" for transfer use.
ChatRequest build_generation_request(const Config& config, const std::string& question_key,
                                     const std::string& mode, int sample_index,
                                     const std::string& question,
                                     const std::vector<const Example*>& demos,
                                     const std::vector<const Tool*>& active_tools,
                                     const scene::SceneFixture& fixture);

ChatRequest build_quality_judge_request(const Config& config, const std::string& question_key,
                                        const std::string& question, const std::string& program,
                                        const vpl::ExecutionTrace& trace,
                                        const std::set<std::string>& tools_used,
                                        const std::vector<const Tool*>& active_tools,
                                        const scene::SceneFixture& fixture);

ChatRequest build_correctness_request(const Config& config, const std::string& example_id,
                                      const std::string& question,
                                      const std::string& original_program,
                                      const Value& original_result,
                                      const std::string& rewritten_program,
                                      const Value& new_result,
                                      const scene::SceneFixture& fixture);

ChatRequest build_cluster_request(const Config& config,
                                  const std::vector<const Example*>& members);

ChatRequest build_abstraction_request(const Config& config,
                                      const std::vector<const Example*>& members,
                                      const std::string& pattern, const std::string& parameters,
                                      const std::vector<const Tool*>& active_tools, int attempt);

ChatRequest build_rewrite_request(const Config& config, const Example& example, const Tool& tool,
                                  int attempt);

ChatRequest build_dedup_request(const Config& config, const std::vector<const Tool*>& eligible);

ChatRequest build_merge_request(const Config& config, const std::vector<const Tool*>& group,
                                const std::string& strategy, int attempt);

ChatRequest build_rating_request(const Config& config, const std::string& question_id,
                                 const std::string& question, const std::string& answer_type);

}  // namespace toolforge::prompts
