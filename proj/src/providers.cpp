#include "toolforge/providers.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#define CPPHTTPLIB_NO_EXCEPTIONS
#include <httplib.h>

#include "toolforge/util.hpp"

namespace toolforge {

namespace {

std::optional<std::string> extract_tag(const std::string& raw, const std::string& tag,
                                       std::size_t from = 0, std::size_t* end_out = nullptr) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  std::size_t a = raw.find(open, from);
  if (a == std::string::npos) return std::nullopt;
  std::size_t b = raw.find(close, a + open.size());
  if (b == std::string::npos) return std::nullopt;
  if (end_out) *end_out = b + close.size();
  return raw.substr(a + open.size(), b - a - open.size());
}

double parse_number(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  if (t.empty()) throw ProviderError(what + " is empty");
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) throw ProviderError(what + " is not a number: '" + t + "'");
  if (!std::isfinite(v)) throw ProviderError(what + " is not finite");
  return v;
}

std::vector<std::string> parse_id_list(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& part : split(text, ',')) {
    std::string id = trim(part);
    if (!id.empty()) out.push_back(std::move(id));
  }
  return out;
}

// Program-style replies arrive either as bare source or inside one fenced
// code block; fences win when present.
std::string extract_code(const std::string& raw) {
  std::size_t a = raw.find("```");
  if (a == std::string::npos) return trim(raw);
  std::size_t line_end = raw.find('\n', a);
  if (line_end == std::string::npos) return trim(raw);
  std::size_t b = raw.find("```", line_end + 1);
  if (b == std::string::npos) return trim(raw.substr(line_end + 1));
  return trim(raw.substr(line_end + 1, b - line_end - 1));
}

std::vector<ToolParam> parse_param_spec(const std::string& text) {
  std::vector<ToolParam> out;
  const std::string t = trim(text);
  if (t.empty() || lowercase(t) == "none") return out;
  for (const auto& part : split(t, ';')) {
    std::string item = trim(part);
    if (item.empty()) continue;
    auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ProviderError("param entry '" + item + "' must look like 'name: type'");
    }
    ToolParam p;
    p.name = trim(item.substr(0, colon));
    p.semantic_type = trim(item.substr(colon + 1));
    if (p.name.empty() || p.semantic_type.empty()) {
      throw ProviderError("param entry '" + item + "' must look like 'name: type'");
    }
    out.push_back(std::move(p));
  }
  return out;
}

ReplyPayload parse_program_reply(const std::string& raw) {
  std::string source = extract_code(raw);
  if (source.empty()) throw ProviderError("empty program reply");
  return ProgramReply{std::move(source)};
}

ReplyPayload parse_rating_reply(const std::string& raw) {
  auto rating = extract_tag(raw, "rating");
  if (!rating) throw ProviderError("missing <rating> tag");
  RatingReply r;
  r.rating = parse_number(*rating, "rating");
  if (r.rating < 1.0 || r.rating > 10.0) throw ProviderError("rating out of [1, 10]");
  if (auto reasoning = extract_tag(raw, "reasoning")) r.reasoning = trim(*reasoning);
  return r;
}

ReplyPayload parse_verdict_reply(const std::string& raw) {
  auto verdict = extract_tag(raw, "verdict");
  if (!verdict) throw ProviderError("missing <verdict> tag");
  const std::string v = trim(*verdict);
  VerdictReply r;
  if (v == "CORRECT") {
    r.correct = true;
  } else if (v == "INCORRECT") {
    r.correct = false;
  } else {
    throw ProviderError("verdict must be CORRECT or INCORRECT, got '" + v + "'");
  }
  if (auto reasoning = extract_tag(raw, "reasoning")) r.reasoning = trim(*reasoning);
  return r;
}

ReplyPayload parse_cluster_reply(const std::string& raw) {
  ClusterReply reply;
  std::size_t pos = 0;
  while (true) {
    std::size_t end = 0;
    auto block = extract_tag(raw, "cluster", pos, &end);
    if (!block) break;
    pos = end;
    ClusterBlock c;
    auto ids = extract_tag(*block, "example_ids");
    if (!ids) throw ProviderError("cluster block missing <example_ids>");
    c.ids = parse_id_list(*ids);
    if (c.ids.empty()) throw ProviderError("cluster block has no ids");
    auto pattern = extract_tag(*block, "pattern");
    if (!pattern) throw ProviderError("cluster block missing <pattern>");
    c.pattern = trim(*pattern);
    if (auto params = extract_tag(*block, "parameters")) c.parameters = trim(*params);
    auto potential = extract_tag(*block, "abstraction_potential");
    if (!potential) throw ProviderError("cluster block missing <abstraction_potential>");
    c.potential = parse_number(*potential, "abstraction_potential");
    if (c.potential < 0 || c.potential > 10) {
      throw ProviderError("abstraction_potential out of [0, 10]");
    }
    if (auto reasoning = extract_tag(*block, "reasoning")) c.reasoning = trim(*reasoning);
    reply.clusters.push_back(std::move(c));
  }
  if (auto unclustered = extract_tag(raw, "unclustered")) {
    auto ids = extract_tag(*unclustered, "example_ids");
    if (!ids) throw ProviderError("<unclustered> missing <example_ids>");
    reply.unclustered = parse_id_list(*ids);
  }
  if (reply.clusters.empty() && reply.unclustered.empty()) {
    throw ProviderError("no <cluster> or <unclustered> blocks found");
  }
  return reply;
}

ReplyPayload parse_tool_reply(const std::string& raw) {
  auto block = extract_tag(raw, "tool");
  if (!block) throw ProviderError("missing <tool> block");
  ToolReply t;
  auto name = extract_tag(*block, "name");
  if (!name) throw ProviderError("tool block missing <name>");
  t.name = trim(*name);
  if (t.name.empty()) throw ProviderError("tool name is empty");
  auto params = extract_tag(*block, "params");
  if (!params) throw ProviderError("tool block missing <params>");
  t.params = parse_param_spec(*params);
  auto doc = extract_tag(*block, "docstring");
  if (!doc) throw ProviderError("tool block missing <docstring>");
  t.docstring = trim(*doc);
  auto code = extract_tag(*block, "code");
  if (!code) throw ProviderError("tool block missing <code>");
  t.code = extract_code(*code);
  if (t.code.empty()) throw ProviderError("tool code is empty");
  return t;
}

ReplyPayload parse_dedup_reply(const std::string& raw) {
  DedupReply reply;
  std::size_t pos = 0;
  while (true) {
    std::size_t end = 0;
    auto block = extract_tag(raw, "merge_group", pos, &end);
    if (!block) break;
    pos = end;
    MergeGroupBlock g;
    auto tools = extract_tag(*block, "tools");
    if (!tools) throw ProviderError("merge_group missing <tools>");
    g.tools = parse_id_list(*tools);
    if (g.tools.size() < 2) throw ProviderError("merge_group needs at least 2 tools");
    auto sim = extract_tag(*block, "similarity");
    if (!sim) throw ProviderError("merge_group missing <similarity>");
    g.similarity = parse_number(*sim, "similarity");
    if (g.similarity < 0 || g.similarity > 1) throw ProviderError("similarity out of [0, 1]");
    if (auto rationale = extract_tag(*block, "rationale")) g.rationale = trim(*rationale);
    reply.groups.push_back(std::move(g));
  }
  if (reply.groups.empty() && raw.find("<no_duplicates/>") == std::string::npos) {
    throw ProviderError("expected <merge_group> blocks or <no_duplicates/>");
  }
  return reply;
}

ReplyPayload parse_score_reply(const std::string& raw) {
  auto score = extract_tag(raw, "score");
  if (!score) throw ProviderError("missing <score> tag");
  ScoreReply r;
  r.score = parse_number(*score, "score");
  if (r.score < 1.0 || r.score > 10.0) throw ProviderError("score out of [1, 10]");
  if (auto reasoning = extract_tag(raw, "reasoning")) r.reasoning = trim(*reasoning);
  return r;
}

}  // namespace

std::string request_fingerprint(const ChatRequest& req) {
  return role_name(req.role) + "|" + req.context_key;
}

ReplyPayload parse_reply(Role role, const std::string& raw) {
  switch (role) {
    case Role::ProgGen:
    case Role::Rewriter: return parse_program_reply(raw);
    case Role::QualityJudge: return parse_rating_reply(raw);
    case Role::CorrectnessJudge: return parse_verdict_reply(raw);
    case Role::ClusterAnalyst: return parse_cluster_reply(raw);
    case Role::Abstractor:
    case Role::Merger: return parse_tool_reply(raw);
    case Role::DedupAnalyst: return parse_dedup_reply(raw);
    case Role::ComplexityRater: return parse_score_reply(raw);
  }
  throw ProviderError("unknown role");
}

ScriptedChatProvider::ScriptedChatProvider(nlohmann::json script) {
  if (!script.is_object() || !script.contains("chat") || !script["chat"].is_object()) {
    throw CorruptionError("script must be an object with a 'chat' map", "script");
  }
  for (const auto& [key, value] : script["chat"].items()) {
    if (!value.is_string()) throw CorruptionError("script replies must be strings", key);
    entries_[key] = value.get<std::string>();
  }
}

ScriptedChatProvider ScriptedChatProvider::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open script file", path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), path);
  }
  return ScriptedChatProvider(std::move(j));
}

std::string ScriptedChatProvider::chat_raw(const ChatRequest& req) {
  const std::string fp = request_fingerprint(req);
  auto it = entries_.find(fp);
  if (it == entries_.end()) {
    throw ProviderError("scripted provider missing entry for '" + fp + "'");
  }
  return it->second;
}

std::string RecordingChatProvider::chat_raw(const ChatRequest& req) {
  std::string reply = inner_->chat_raw(req);
  const std::string fp = request_fingerprint(req);
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = entries_.emplace(fp, reply);
  if (!inserted && it->second != reply) {
    throw Error("recording ambiguity: fingerprint '" + fp + "' saw two different replies");
  }
  return reply;
}

nlohmann::json RecordingChatProvider::script() const {
  std::lock_guard<std::mutex> lock(mu_);
  nlohmann::json j;
  j["schema_version"] = 1;
  j["chat"] = entries_;
  return j;
}

HttpChatProvider::HttpChatProvider(ProviderSettings settings) : settings_(std::move(settings)) {
  if (settings_.base_url.empty()) throw ConfigError("http provider requires base_url");
}

namespace {

// Shared retry/backoff loop for the HTTP backends.
std::string http_post_json(const ProviderSettings& settings, const std::string& path,
                           const nlohmann::json& body) {
  std::string last_error;
  for (int attempt = 0; attempt <= settings.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << (attempt - 1)));
    }
    httplib::Client client(settings.base_url);
    client.set_connection_timeout(settings.timeout_s, 0);
    client.set_read_timeout(settings.timeout_s, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(settings.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProviderError("http " + std::to_string(res->status) + ": " + res->body);
    }
    return res->body;
  }
  throw ProviderError("retries exhausted against " + settings.base_url + path + ": " +
                      last_error);
}

}  // namespace

std::string HttpChatProvider::chat_raw(const ChatRequest& req) {
  nlohmann::json body;
  auto model_it = settings_.role_models.find(role_name(req.role));
  body["model"] = model_it != settings_.role_models.end() ? model_it->second : settings_.model;
  auto messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", m.speaker}, {"content", m.text}});
  }
  body["messages"] = std::move(messages);
  body["temperature"] = req.temperature;
  body["seed"] = req.seed;
  const std::string raw = http_post_json(settings_, "/v1/chat/completions", body);
  try {
    nlohmann::json j = nlohmann::json::parse(raw);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("unexpected completion response shape: ") + e.what());
  }
}

StructuredReply chat_parsed(
    ChatProvider& provider, const ChatRequest& req,
    const std::function<std::optional<std::string>(const ReplyPayload&)>& validate) {
  auto attempt = [&](const ChatRequest& r, std::string* error_out)
      -> std::optional<StructuredReply> {
    std::string raw = provider.chat_raw(r);  // transport/missing-entry errors propagate
    try {
      ReplyPayload payload = parse_reply(r.role, raw);
      if (validate) {
        if (auto err = validate(payload)) {
          *error_out = *err;
          return std::nullopt;
        }
      }
      return StructuredReply{std::move(raw), std::move(payload)};
    } catch (const ProviderError& e) {
      *error_out = e.what();
      return std::nullopt;
    }
  };

  std::string error;
  if (auto reply = attempt(req, &error)) return *reply;

  ChatRequest retry = req;
  retry.context_key += ";retry=1";
  retry.messages.push_back(
      {"user", "Your previous reply did not match the required format (" + error +
                   "). Reply again, following the response format exactly."});
  std::string retry_error;
  if (auto reply = attempt(retry, &retry_error)) return *reply;
  throw ProviderError("malformed " + role_name(req.role) + " reply after retry: " + retry_error);
}

std::vector<std::vector<double>> DeterministicEmbedder::embed(
    const std::vector<std::string>& texts) {
  if (texts.empty()) throw ProviderError("embed called with no texts");
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> vec(kDim, 0.0);
    std::string token;
    auto flush = [&]() {
      if (token.empty()) return;
      vec[fnv1a64(token) % kDim] += 1.0;
      token.clear();
    };
    for (char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c))) {
        token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      } else {
        flush();
      }
    }
    flush();
    double norm = 0;
    for (double v : vec) norm += v * v;
    if (norm == 0) {
      throw ProviderError("text carries no information for embedding: '" + text + "'");
    }
    norm = std::sqrt(norm);
    for (double& v : vec) v /= norm;
    out.push_back(std::move(vec));
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(ProviderSettings settings)
    : settings_(std::move(settings)) {
  if (settings_.base_url.empty()) throw ConfigError("http embedding provider requires base_url");
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  if (texts.empty()) throw ProviderError("embed called with no texts");
  for (const auto& t : texts) {
    if (trim(t).empty()) throw ProviderError("text carries no information for embedding");
  }
  nlohmann::json body;
  body["model"] = settings_.embedding_model;
  body["input"] = texts;
  const std::string raw = http_post_json(settings_, "/v1/embeddings", body);
  std::vector<std::vector<double>> out;
  try {
    nlohmann::json j = nlohmann::json::parse(raw);
    for (const auto& item : j.at("data")) {
      auto vec = item.at("embedding").get<std::vector<double>>();
      double norm = 0;
      for (double v : vec) norm += v * v;
      if (norm == 0) throw ProviderError("embedding backend returned a zero vector");
      norm = std::sqrt(norm);
      for (double& v : vec) v /= norm;
      out.push_back(std::move(vec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("unexpected embedding response shape: ") + e.what());
  }
  if (out.size() != texts.size()) {
    throw ProviderError("embedding backend returned the wrong number of vectors");
  }
  return out;
}

std::string HttpEmbeddingProvider::fingerprint() const {
  return "http/" + settings_.embedding_model;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()) + ")");
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw Error("cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

EmbeddingBank::EmbeddingBank(std::shared_ptr<EmbeddingProvider> provider)
    : provider_(std::move(provider)) {}

const std::vector<double>& EmbeddingBank::get(const std::string& text) {
  auto it = cache_.find(text);
  if (it != cache_.end()) return it->second;
  auto vecs = provider_->embed({text});
  return cache_.emplace(text, std::move(vecs.front())).first->second;
}

nlohmann::json EmbeddingBank::to_json() const {
  nlohmann::json j;
  j["provider_fingerprint"] = provider_->fingerprint();
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [text, vec] : cache_) entries[text] = vec;
  j["entries"] = std::move(entries);
  return j;
}

void EmbeddingBank::restore(const nlohmann::json& j) {
  cache_.clear();
  try {
    if (j.at("provider_fingerprint").get<std::string>() != provider_->fingerprint()) {
      return;  // stale vectors from another backend are never reused
    }
    for (const auto& [text, vec] : j.at("entries").items()) {
      cache_[text] = vec.get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), "embedding_bank");
  }
}

}  // namespace toolforge
