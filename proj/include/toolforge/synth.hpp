#pragma once

#include <map>
#include <string>

#include "toolforge/pipeline.hpp"
#include "toolforge/providers.hpp"

namespace toolforge {

// Deterministic offline chat backend. Answers every role by rules over the
// dataset's oracle parameters: correct programs for known questions, ratings
// from oracle agreement, cluster/abstraction/merge replies from a fixed tool
// plan. A pure function of the request, so recording it yields a replayable
// script and the whole pipeline stays byte-reproducible.
class SyntheticChatProvider : public ChatProvider {
 public:
  explicit SyntheticChatProvider(const Dataset& dataset);

  std::string chat_raw(const ChatRequest& req) override;
  std::string describe() const override { return "synthetic"; }

 private:
  const QuestionSpec& by_question(const std::string& question_text) const;
  const QuestionSpec& by_id(const std::string& id) const;
  const scene::SceneFixture& fixture(const std::string& scene_id) const;

  std::string handle_generation(const ChatRequest& req) const;
  std::string handle_quality_judge(const ChatRequest& req) const;
  std::string handle_correctness(const ChatRequest& req) const;
  std::string handle_cluster(const ChatRequest& req) const;
  std::string handle_abstraction(const ChatRequest& req) const;
  std::string handle_rewrite(const ChatRequest& req) const;
  std::string handle_dedup(const ChatRequest& req) const;
  std::string handle_merge(const ChatRequest& req) const;
  std::string handle_rating(const ChatRequest& req) const;

  bool answer_matches_oracle(const QuestionSpec& spec, const std::string& answer_text) const;

  std::map<std::string, QuestionSpec> by_norm_question_;
  std::map<std::string, QuestionSpec> by_id_;
  FixtureStore fixtures_;
};

}  // namespace toolforge
