#pragma once

#include <string>
#include <vector>

#include "toolforge/abstraction.hpp"

namespace toolforge {

struct MergeGroup {
  std::vector<std::string> tool_names;  // sorted
  double similarity = 0;
  std::string strategy;  // the analyst's rationale, forwarded to the merger
};

// Asks the dedup analyst over active learned tools (level >= 1). Returns
// groups with similarity >= dedup_sim_threshold; groups are disjoint and all
// of their members eligible. No provider call is made with fewer than two
// eligible tools.
std::vector<MergeGroup> find_duplicates(const Libraries& libs, ChatProvider& chat,
                                        const Config& config);

struct MergeOutcome {
  bool merged = false;
  bool skipped_empty = false;  // no examples use the group: merge not attempted
  std::string merged_name;
  int attempts = 0;
  ValidationResult validation;
  std::string failure;
};

// Alg-4 merge: E_M = examples using any group member; merger proposes a
// unified tool validated against all of E_M; on pass the originals are
// deprecated ("Merged into <name>") and E_M rewritten; on exhaustion nothing
// changes.
MergeOutcome merge_group(const MergeGroup& group, Libraries& libs, ChatProvider& chat,
                         const Config& config, const FixtureStore& fixtures, JsonlWriter& audit);

struct DedupPassStats {
  int groups_proposed = 0;
  int merges = 0;
  int deprecated = 0;
};

DedupPassStats run_dedup_pass(Libraries& libs, ChatProvider& chat, const Config& config,
                              const FixtureStore& fixtures, JsonlWriter& audit);

}  // namespace toolforge
