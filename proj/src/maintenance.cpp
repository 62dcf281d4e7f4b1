#include "toolforge/maintenance.hpp"

#include <algorithm>

#include "toolforge/prompts.hpp"

namespace toolforge {

std::vector<MergeGroup> find_duplicates(const Libraries& libs, ChatProvider& chat,
                                        const Config& config) {
  std::vector<const Tool*> eligible = libs.active_learned_tools();
  std::sort(eligible.begin(), eligible.end(),
            [](const Tool* a, const Tool* b) { return a->name < b->name; });
  if (eligible.size() < 2) return {};

  std::set<std::string> eligible_names;
  for (const Tool* t : eligible) eligible_names.insert(t->name);

  ChatRequest req = prompts::build_dedup_request(config, eligible);
  auto validate = [&](const ReplyPayload& payload) -> std::optional<std::string> {
    const auto& reply = std::get<DedupReply>(payload);
    std::set<std::string> seen;
    for (const auto& group : reply.groups) {
      for (const auto& name : group.tools) {
        if (!eligible_names.count(name)) {
          return "tool '" + name + "' is not an eligible merge candidate";
        }
        if (!seen.insert(name).second) return "tool '" + name + "' appears in two groups";
      }
    }
    return std::nullopt;
  };
  StructuredReply reply = chat_parsed(chat, req, validate);

  std::vector<MergeGroup> out;
  for (const auto& block : std::get<DedupReply>(reply.parsed).groups) {
    if (block.similarity < config.dedup_sim_threshold) continue;
    MergeGroup group;
    group.tool_names = block.tools;
    std::sort(group.tool_names.begin(), group.tool_names.end());
    group.similarity = block.similarity;
    group.strategy = block.rationale;
    out.push_back(std::move(group));
  }
  std::sort(out.begin(), out.end(), [](const MergeGroup& a, const MergeGroup& b) {
    return a.tool_names.front() < b.tool_names.front();
  });
  return out;
}

MergeOutcome merge_group(const MergeGroup& group, Libraries& libs, ChatProvider& chat,
                         const Config& config, const FixtureStore& fixtures, JsonlWriter& audit) {
  MergeOutcome outcome;
  std::vector<const Tool*> tools;
  for (const auto& name : group.tool_names) {
    auto it = libs.tools.find(name);
    if (it == libs.tools.end() || it->second.deprecated || it->second.level < 1) {
      throw Error("merge group references ineligible tool '" + name + "'");
    }
    tools.push_back(&it->second);
  }

  // Validating a merge against zero examples would pass vacuously, so an
  // unused group is simply skipped.
  std::vector<const Example*> affected;
  for (const auto& [_, e] : libs.examples) {
    for (const auto& name : group.tool_names) {
      if (e.tools_used.count(name)) {
        affected.push_back(&e);
        break;
      }
    }
  }
  std::sort(affected.begin(), affected.end(),
            [](const Example* a, const Example* b) { return a->id < b->id; });
  if (affected.empty()) {
    outcome.skipped_empty = true;
    audit.write({{"event", "merge_skipped_empty"}, {"group", group.tool_names}});
    return outcome;
  }

  for (int attempt = 1; attempt <= config.max_merge_retries; ++attempt) {
    outcome.attempts = attempt;
    ChatRequest req = prompts::build_merge_request(config, tools, group.strategy, attempt);
    StructuredReply reply = chat_parsed(chat, req);
    const auto& tool_reply = std::get<ToolReply>(reply.parsed);

    std::string error;
    auto parsed_tool = tool_from_reply(tool_reply, libs, &error);
    if (!parsed_tool) {
      outcome.failure = error;
      audit.write({{"event", "merge_attempt"}, {"attempt", attempt}, {"ok", false},
                   {"detail", outcome.failure}});
      continue;
    }
    Tool merged = std::move(*parsed_tool);
    for (const Tool* t : tools) {
      merged.source_example_ids.insert(t->source_example_ids.begin(),
                                       t->source_example_ids.end());
    }
    merged.created_at_step = libs.step_counter;

    ValidationResult validation =
        validate_tool(merged, affected, libs, chat, config, fixtures, audit);
    audit.write({{"event", "merge_attempt"},
                 {"attempt", attempt},
                 {"ok", validation.passed},
                 {"tool", merged.name},
                 {"stage", validation.stage},
                 {"group", group.tool_names},
                 {"examples", static_cast<int>(affected.size())}});
    if (!validation.passed) {
      outcome.failure = validation.failure_detail;
      outcome.validation = validation;
      continue;
    }

    libs.tools.emplace(merged.name, merged);
    apply_rewrites(libs, validation, merged.name);
    for (const auto& name : group.tool_names) {
      deprecate_tool(libs, name, "Merged into " + merged.name);
    }
    outcome.merged = true;
    outcome.merged_name = merged.name;
    outcome.validation = std::move(validation);
    return outcome;
  }
  return outcome;
}

DedupPassStats run_dedup_pass(Libraries& libs, ChatProvider& chat, const Config& config,
                              const FixtureStore& fixtures, JsonlWriter& audit) {
  DedupPassStats stats;
  auto groups = find_duplicates(libs, chat, config);
  stats.groups_proposed = static_cast<int>(groups.size());
  for (const auto& group : groups) {
    // A merge earlier in this pass may have deprecated a member; stale groups
    // are dropped rather than retried.
    bool stale = false;
    for (const auto& name : group.tool_names) {
      auto it = libs.tools.find(name);
      if (it == libs.tools.end() || it->second.deprecated) stale = true;
    }
    if (stale) continue;
    MergeOutcome outcome = merge_group(group, libs, chat, config, fixtures, audit);
    if (outcome.merged) {
      ++stats.merges;
      stats.deprecated += static_cast<int>(group.tool_names.size());
    }
  }
  return stats;
}

}  // namespace toolforge
