#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolforge/errors.hpp"
#include "toolforge/model.hpp"

namespace toolforge {

struct ChatMessage {
  std::string speaker;  // "system" | "user"
  std::string text;
};

// One chat turn. `context_key` is the stable, role-specific identity of the
// request (question id, sample index, cluster ids, ...) used for script
// lookup and recording; the full prompt lives in `messages`.
struct ChatRequest {
  Role role = Role::ProgGen;
  std::vector<ChatMessage> messages;
  double temperature = 0;
  std::int64_t seed = 0;
  std::optional<std::string> scene_id;
  std::string context_key;
};

// Script/recording key: "<role>|<context key>".
std::string request_fingerprint(const ChatRequest& req);

// ----- Parsed reply payloads -------------------------------------------------

struct ProgramReply {
  std::string source;
};

struct RatingReply {
  double rating = 0;
  std::string reasoning;
};

struct VerdictReply {
  bool correct = false;
  std::string reasoning;
};

struct ClusterBlock {
  std::vector<std::string> ids;
  std::string pattern;
  std::string parameters;
  double potential = 0;
  std::string reasoning;
};

struct ClusterReply {
  std::vector<ClusterBlock> clusters;
  std::vector<std::string> unclustered;
};

struct ToolReply {
  std::string name;
  std::vector<ToolParam> params;
  std::string docstring;
  std::string code;
};

struct MergeGroupBlock {
  std::vector<std::string> tools;
  double similarity = 0;
  std::string rationale;
};

struct DedupReply {
  std::vector<MergeGroupBlock> groups;
};

struct ScoreReply {
  double score = 0;
  std::string reasoning;
};

using ReplyPayload = std::variant<ProgramReply, RatingReply, VerdictReply, ClusterReply,
                                  ToolReply, DedupReply, ScoreReply>;

struct StructuredReply {
  std::string raw;
  ReplyPayload parsed;
};

// Parses `raw` against the role's tag grammar. Throws ProviderError on a
// grammar violation (the caller decides whether to retry).
ReplyPayload parse_reply(Role role, const std::string& raw);

// ----- Chat providers --------------------------------------------------------

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // Returns the raw reply text. Must tolerate concurrent calls.
  virtual std::string chat_raw(const ChatRequest& req) = 0;
  virtual std::string describe() const = 0;
};

// Replays a JSON script of fingerprint -> reply text. Stateless lookups, so
// runs that resume mid-way request exactly what an uninterrupted run would.
class ScriptedChatProvider : public ChatProvider {
 public:
  explicit ScriptedChatProvider(nlohmann::json script);
  static ScriptedChatProvider load(const std::string& path);

  std::string chat_raw(const ChatRequest& req) override;
  std::string describe() const override { return "scripted"; }

 private:
  std::map<std::string, std::string> entries_;
};

// Wraps a provider and records every (fingerprint, reply). A fingerprint seen
// twice must map to the same reply, otherwise the recording is ambiguous.
class RecordingChatProvider : public ChatProvider {
 public:
  explicit RecordingChatProvider(std::shared_ptr<ChatProvider> inner)
      : inner_(std::move(inner)) {}

  std::string chat_raw(const ChatRequest& req) override;
  std::string describe() const override { return "recording(" + inner_->describe() + ")"; }

  nlohmann::json script() const;

 private:
  std::shared_ptr<ChatProvider> inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> entries_;
};

// JSON-over-HTTP chat-completion backend; base URL, model routing, key env
// var, timeout, and retry count come from ProviderSettings.
class HttpChatProvider : public ChatProvider {
 public:
  explicit HttpChatProvider(ProviderSettings settings);
  std::string chat_raw(const ChatRequest& req) override;
  std::string describe() const override { return "http(" + settings_.base_url + ")"; }

 private:
  ProviderSettings settings_;
};

// Issues the request, parses per the role grammar, and on a grammar violation
// retries once with a reformat instruction before surfacing ProviderError.
// `validate` may reject a syntactically valid payload (same retry path).
StructuredReply chat_parsed(
    ChatProvider& provider, const ChatRequest& req,
    const std::function<std::optional<std::string>(const ReplyPayload&)>& validate = {});

// ----- Embeddings ------------------------------------------------------------

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // One unit-norm vector per input text, fixed dimension.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string fingerprint() const = 0;
};

// Hashed bag-of-words: lowercase, split on non-alphanumerics, hash each token
// into one of 256 buckets, count, L2-normalize. Fully deterministic.
class DeterministicEmbedder : public EmbeddingProvider {
 public:
  static constexpr int kDim = 256;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::string fingerprint() const override { return "hashed-bow/256/v1"; }
};

class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(ProviderSettings settings);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::string fingerprint() const override;

 private:
  ProviderSettings settings_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Per-run cache guaranteeing at most one embedding call per distinct text.
// Serializable so checkpoints can carry it; vectors are only reused when the
// provider fingerprint matches.
class EmbeddingBank {
 public:
  explicit EmbeddingBank(std::shared_ptr<EmbeddingProvider> provider);

  const std::vector<double>& get(const std::string& text);
  std::size_t size() const { return cache_.size(); }

  nlohmann::json to_json() const;
  void restore(const nlohmann::json& j);  // drops entries on fingerprint mismatch

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  std::map<std::string, std::vector<double>> cache_;
};

}  // namespace toolforge
