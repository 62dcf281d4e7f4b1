#include "toolforge/solver.hpp"

#include <algorithm>
#include <future>

namespace toolforge {

namespace {

// A candidate that parses but references a deprecated tool never saw that tool
// in its prompt, so it is filtered at the parse stage.
bool calls_deprecated_tool(const std::set<std::string>& used, const Libraries& libs) {
  for (const auto& name : used) {
    auto it = libs.tools.find(name);
    if (it != libs.tools.end() && it->second.deprecated) return true;
  }
  return false;
}

}  // namespace

std::string solve_outcome_name(SolveOutcome o) {
  switch (o) {
    case SolveOutcome::Unsolved: return "unsolved";
    case SolveOutcome::Inserted: return "inserted";
    case SolveOutcome::Replaced: return "replaced";
    case SolveOutcome::RejectedQuality: return "rejected_quality";
    case SolveOutcome::KeptExisting: return "kept_existing";
  }
  return "?";
}

nlohmann::json CandidateSet::to_json() const {
  nlohmann::json j;
  j["question_id"] = question_id;
  auto arr = nlohmann::json::array();
  for (const auto& c : candidates) {
    nlohmann::json cj;
    cj["index"] = c.index;
    cj["status"] = c.status;
    cj["program"] = c.program;
    if (!c.detail.empty()) cj["detail"] = c.detail;
    cj["quality"] = c.quality ? nlohmann::json(*c.quality) : nlohmann::json(nullptr);
    cj["result"] = (c.trace && c.trace->result) ? c.trace->result->to_json()
                                                : nlohmann::json(nullptr);
    cj["tools_used"] = c.tools_used;
    arr.push_back(std::move(cj));
  }
  j["candidates"] = std::move(arr);
  j["best_index"] = best_index ? nlohmann::json(*best_index) : nlohmann::json(nullptr);
  return j;
}

std::vector<RetrievedExample> retrieve_similar(const Libraries& libs,
                                               const std::string& query_id,
                                               const std::string& query_text,
                                               EmbeddingBank& bank, const Config& config) {
  std::vector<RetrievedExample> hits;
  if (libs.examples.empty()) return hits;
  const std::vector<double> query_vec = bank.get(query_text);  // copy: bank may rehash below
  for (const auto& [id, example] : libs.examples) {
    if (id == query_id) continue;
    double sim = cosine(query_vec, bank.get(example.question));
    if (sim >= config.sim_threshold) hits.push_back(RetrievedExample{&example, sim});
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievedExample& a, const RetrievedExample& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.example->id < b.example->id;
  });
  if (hits.size() > static_cast<std::size_t>(config.retrieval_k_max)) {
    hits.resize(static_cast<std::size_t>(config.retrieval_k_max));
  }
  return hits;
}

SolveResult solve_question(Libraries& libs, const std::string& question_id,
                           const std::string& question, const scene::SceneFixture& fixture,
                           ChatProvider& chat, EmbeddingBank& bank, const Config& config,
                           const std::string& mode) {
  SolveResult out;
  out.candidates.question_id = question_id;

  auto retrieved = retrieve_similar(libs, question_id, question, bank, config);
  std::vector<const Example*> demos;
  demos.reserve(retrieved.size());
  for (const auto& r : retrieved) demos.push_back(r.example);

  const auto active = libs.active_tools();
  const vpl::ToolView view = libs.tool_view();
  const int m = config.candidates_per_question;

  // Candidate generation and execution fan out; results join in index order so
  // everything downstream stays deterministic.
  auto produce = [&](int index) -> Candidate {
    Candidate cand;
    cand.index = index;
    ChatRequest req = prompts::build_generation_request(config, question_id, mode, index,
                                                        question, demos, active, fixture);
    StructuredReply reply = chat_parsed(chat, req);
    cand.raw_reply = reply.raw;
    cand.program = std::get<ProgramReply>(reply.parsed).source;
    vpl::Program prog;
    try {
      prog = vpl::parse(cand.program);
    } catch (const vpl::ParseError& e) {
      cand.status = "parse_error";
      cand.detail = e.what();
      return cand;
    }
    cand.tools_used = vpl::called_tools(prog, view);
    if (calls_deprecated_tool(cand.tools_used, libs)) {
      cand.status = "deprecated_tool";
      cand.detail = "program calls a deprecated tool";
      return cand;
    }
    vpl::ExecutionTrace trace = vpl::execute(prog, fixture, view);
    if (trace.error) {
      cand.status = "exec_error";
      cand.detail = trace.error->kind + ": " + trace.error->message;
      cand.trace = std::move(trace);
      return cand;
    }
    if (!trace.result || trace.result->is_null()) {
      cand.status = "no_result";
      cand.detail = "program produced no result";
      cand.trace = std::move(trace);
      return cand;
    }
    cand.status = "executed";
    cand.trace = std::move(trace);
    return cand;
  };

  std::vector<Candidate> candidates(static_cast<std::size_t>(m));
  if (m > 1) {
    std::vector<std::future<Candidate>> futures;
    futures.reserve(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      futures.push_back(std::async(std::launch::async, produce, j));
    }
    for (int j = 0; j < m; ++j) candidates[static_cast<std::size_t>(j)] = futures[j].get();
  } else {
    candidates[0] = produce(0);
  }

  // Judge the survivors in one batched pass.
  for (Candidate& cand : candidates) {
    if (cand.status != "executed") continue;
    ChatRequest req = prompts::build_quality_judge_request(
        config, question_id, question, cand.program, *cand.trace, cand.tools_used, active,
        fixture);
    StructuredReply reply = chat_parsed(chat, req);
    cand.quality = std::get<RatingReply>(reply.parsed).rating;
    cand.status = "judged";
  }

  int best = -1;
  for (const Candidate& cand : candidates) {
    if (!cand.quality) continue;
    if (best < 0 || *cand.quality > *candidates[static_cast<std::size_t>(best)].quality) {
      best = cand.index;
    }
  }
  out.candidates.candidates = std::move(candidates);
  if (best < 0) {
    out.outcome = SolveOutcome::Unsolved;
    return out;
  }
  out.candidates.best_index = best;

  const Candidate& winner = out.candidates.candidates[static_cast<std::size_t>(best)];
  Example candidate_example;
  candidate_example.id = question_id;
  candidate_example.question = question;
  candidate_example.scene_id = fixture.id;
  candidate_example.program = winner.program;
  candidate_example.quality = *winner.quality;
  candidate_example.result = *winner.trace->result;
  candidate_example.trace_namespace = winner.trace->bindings;
  candidate_example.tools_used = winner.tools_used;
  candidate_example.status = ExampleStatus::Fresh;
  candidate_example.created_at_step = libs.step_counter;
  out.admitted = candidate_example;

  switch (admit_example(libs, candidate_example, config)) {
    case AdmitOutcome::Inserted: out.outcome = SolveOutcome::Inserted; break;
    case AdmitOutcome::Replaced: out.outcome = SolveOutcome::Replaced; break;
    case AdmitOutcome::RejectedQuality: out.outcome = SolveOutcome::RejectedQuality; break;
    case AdmitOutcome::KeptExisting: out.outcome = SolveOutcome::KeptExisting; break;
  }
  return out;
}

}  // namespace toolforge
