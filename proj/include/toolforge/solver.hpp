#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolforge/model.hpp"
#include "toolforge/prompts.hpp"
#include "toolforge/providers.hpp"
#include "toolforge/scene.hpp"

namespace toolforge {

struct Candidate {
  int index = 0;
  std::string raw_reply;
  std::string program;                 // extracted source (empty if reply was unusable)
  std::string status;                  // judged | parse_error | deprecated_tool | exec_error | no_result
  std::string detail;                  // parse/exec error text
  std::optional<vpl::ExecutionTrace> trace;
  std::set<std::string> tools_used;
  std::optional<double> quality;       // present only for executed, judged candidates
};

struct CandidateSet {
  std::string question_id;
  std::vector<Candidate> candidates;
  std::optional<int> best_index;

  nlohmann::json to_json() const;
};

// Admission outcome extended with the no-usable-candidate case.
enum class SolveOutcome { Unsolved, Inserted, Replaced, RejectedQuality, KeptExisting };
std::string solve_outcome_name(SolveOutcome o);

struct RetrievedExample {
  const Example* example;
  double similarity;
};

// Examples with cosine >= tau_sim to the query, descending similarity, ties by
// ascending id, capped at k_max; the query's own question id is excluded.
std::vector<RetrievedExample> retrieve_similar(const Libraries& libs,
                                               const std::string& query_id,
                                               const std::string& query_text,
                                               EmbeddingBank& bank, const Config& config);

struct SolveResult {
  CandidateSet candidates;
  SolveOutcome outcome = SolveOutcome::Unsolved;
  std::optional<Example> admitted;  // the candidate offered to admit_example
};

// Phase-I pass for one question: retrieve, generate m candidates, execute,
// filter, judge survivors, pick argmax (lowest index on ties), admit.
// `mode` labels generation requests ("1".."T" during runs).
SolveResult solve_question(Libraries& libs, const std::string& question_id,
                           const std::string& question, const scene::SceneFixture& fixture,
                           ChatProvider& chat, EmbeddingBank& bank, const Config& config,
                           const std::string& mode);

}  // namespace toolforge
