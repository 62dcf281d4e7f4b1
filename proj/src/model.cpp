#include "toolforge/model.hpp"

#include <fstream>
#include <sstream>

#include "toolforge/util.hpp"

namespace toolforge {

std::string role_name(Role role) {
  switch (role) {
    case Role::ProgGen: return "prog_gen";
    case Role::QualityJudge: return "quality_judge";
    case Role::CorrectnessJudge: return "correctness_judge";
    case Role::ClusterAnalyst: return "cluster_analyst";
    case Role::Abstractor: return "abstractor";
    case Role::DedupAnalyst: return "dedup_analyst";
    case Role::Merger: return "merger";
    case Role::Rewriter: return "rewriter";
    case Role::ComplexityRater: return "complexity_rater";
  }
  return "?";
}

Role role_from_name(const std::string& name) {
  for (Role r : all_roles()) {
    if (role_name(r) == name) return r;
  }
  throw ConfigError("unknown role '" + name + "'");
}

std::vector<Role> all_roles() {
  return {Role::ProgGen,      Role::QualityJudge, Role::CorrectnessJudge,
          Role::ClusterAnalyst, Role::Abstractor, Role::DedupAnalyst,
          Role::Merger,       Role::Rewriter,     Role::ComplexityRater};
}

std::string ordering_name(Ordering o) {
  switch (o) {
    case Ordering::Random: return "random";
    case Ordering::Curriculum: return "curriculum";
    case Ordering::Dataset: return "dataset";
  }
  return "?";
}

Ordering ordering_from_name(const std::string& name) {
  if (name == "random") return Ordering::Random;
  if (name == "curriculum") return Ordering::Curriculum;
  if (name == "dataset") return Ordering::Dataset;
  throw ConfigError("unknown ordering '" + name + "'");
}

nlohmann::json ProviderSettings::to_json() const {
  nlohmann::json j;
  j["type"] = type;
  j["base_url"] = base_url;
  j["model"] = model;
  j["role_models"] = role_models;
  j["api_key_env"] = api_key_env;
  j["scripts_path"] = scripts_path;
  j["timeout_s"] = timeout_s;
  j["max_retries"] = max_retries;
  j["embedding"] = embedding;
  j["embedding_model"] = embedding_model;
  return j;
}

ProviderSettings ProviderSettings::from_json(const nlohmann::json& j) {
  ProviderSettings p;
  if (j.contains("type")) p.type = j["type"].get<std::string>();
  if (j.contains("base_url")) p.base_url = j["base_url"].get<std::string>();
  if (j.contains("model")) p.model = j["model"].get<std::string>();
  if (j.contains("role_models")) {
    p.role_models = j["role_models"].get<std::map<std::string, std::string>>();
  }
  if (j.contains("api_key_env")) p.api_key_env = j["api_key_env"].get<std::string>();
  if (j.contains("scripts_path")) p.scripts_path = j["scripts_path"].get<std::string>();
  if (j.contains("timeout_s")) p.timeout_s = j["timeout_s"].get<int>();
  if (j.contains("max_retries")) p.max_retries = j["max_retries"].get<int>();
  if (j.contains("embedding")) p.embedding = j["embedding"].get<std::string>();
  if (j.contains("embedding_model")) p.embedding_model = j["embedding_model"].get<std::string>();
  return p;
}

Config::Config() {
  // Deterministic assessment roles run cold; creative roles run hot.
  temperatures = {
      {"prog_gen", 1.0},        {"quality_judge", 0.0},  {"correctness_judge", 0.0},
      {"cluster_analyst", 1.0}, {"abstractor", 1.0},     {"dedup_analyst", 1.0},
      {"merger", 1.0},          {"rewriter", 1.0},       {"complexity_rater", 0.0},
  };
}

double Config::temperature_for(Role role) const {
  auto it = temperatures.find(role_name(role));
  if (it == temperatures.end()) {
    throw ConfigError("no temperature configured for role '" + role_name(role) + "'");
  }
  return it->second;
}

void Config::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  auto non_negative = [](int v, const char* name) {
    if (v < 0) throw ConfigError(std::string(name) + " must be non-negative");
  };
  auto in_range = [](double v, double lo, double hi, const char* name) {
    if (!(v >= lo && v <= hi)) {
      throw ConfigError(std::string(name) + " must be in [" + format_real(lo) + ", " +
                        format_real(hi) + "]");
    }
  };
  positive(iterations, "iterations");
  positive(candidates_per_question, "candidates_per_question");
  positive(retrieval_k_max, "retrieval_k_max");
  positive(cluster_min_size, "cluster_min_size");
  positive(abstraction_interval, "abstraction_interval");
  positive(dedup_interval, "dedup_interval");
  non_negative(max_abstraction_retries, "max_abstraction_retries");
  non_negative(max_rewrite_retries, "max_rewrite_retries");
  non_negative(max_merge_retries, "max_merge_retries");
  in_range(sim_threshold, 0, 1, "sim_threshold");
  in_range(quality_threshold, 1, 10, "quality_threshold");
  in_range(potential_threshold, 0, 10, "potential_threshold");
  in_range(exec_success_min, 0, 1, "exec_success_min");
  in_range(correctness_min, 0, 1, "correctness_min");
  in_range(dedup_sim_threshold, 0, 1, "dedup_sim_threshold");
  for (Role r : all_roles()) temperature_for(r);  // totality check
}

nlohmann::json Config::to_json() const {
  nlohmann::json j;
  j["iterations"] = iterations;
  j["candidates_per_question"] = candidates_per_question;
  j["retrieval_k_max"] = retrieval_k_max;
  j["sim_threshold"] = sim_threshold;
  j["quality_threshold"] = quality_threshold;
  j["cluster_min_size"] = cluster_min_size;
  j["potential_threshold"] = potential_threshold;
  j["abstraction_interval"] = abstraction_interval;
  j["dedup_interval"] = dedup_interval;
  j["exec_success_min"] = exec_success_min;
  j["correctness_min"] = correctness_min;
  j["dedup_sim_threshold"] = dedup_sim_threshold;
  j["max_abstraction_retries"] = max_abstraction_retries;
  j["max_rewrite_retries"] = max_rewrite_retries;
  j["max_merge_retries"] = max_merge_retries;
  j["seed"] = seed;
  j["ordering"] = ordering_name(ordering);
  j["temperatures"] = temperatures;
  j["provider"] = provider.to_json();
  return j;
}

Config Config::from_json(const nlohmann::json& j) {
  Config c;
  try {
    if (j.contains("iterations")) c.iterations = j["iterations"].get<int>();
    if (j.contains("candidates_per_question")) {
      c.candidates_per_question = j["candidates_per_question"].get<int>();
    }
    if (j.contains("retrieval_k_max")) c.retrieval_k_max = j["retrieval_k_max"].get<int>();
    if (j.contains("sim_threshold")) c.sim_threshold = j["sim_threshold"].get<double>();
    if (j.contains("quality_threshold")) {
      c.quality_threshold = j["quality_threshold"].get<double>();
    }
    if (j.contains("cluster_min_size")) c.cluster_min_size = j["cluster_min_size"].get<int>();
    if (j.contains("potential_threshold")) {
      c.potential_threshold = j["potential_threshold"].get<double>();
    }
    if (j.contains("abstraction_interval")) {
      c.abstraction_interval = j["abstraction_interval"].get<int>();
    }
    if (j.contains("dedup_interval")) c.dedup_interval = j["dedup_interval"].get<int>();
    if (j.contains("exec_success_min")) c.exec_success_min = j["exec_success_min"].get<double>();
    if (j.contains("correctness_min")) c.correctness_min = j["correctness_min"].get<double>();
    if (j.contains("dedup_sim_threshold")) {
      c.dedup_sim_threshold = j["dedup_sim_threshold"].get<double>();
    }
    if (j.contains("max_abstraction_retries")) {
      c.max_abstraction_retries = j["max_abstraction_retries"].get<int>();
    }
    if (j.contains("max_rewrite_retries")) {
      c.max_rewrite_retries = j["max_rewrite_retries"].get<int>();
    }
    if (j.contains("max_merge_retries")) c.max_merge_retries = j["max_merge_retries"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::int64_t>();
    if (j.contains("ordering")) c.ordering = ordering_from_name(j["ordering"].get<std::string>());
    if (j.contains("temperatures")) {
      for (const auto& [k, v] : j["temperatures"].items()) {
        c.temperatures[k] = v.get<double>();
      }
    }
    if (j.contains("provider")) c.provider = ProviderSettings::from_json(j["provider"]);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config", path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
  return from_json(j);
}

std::string Config::fingerprint() const { return to_hex(fnv1a64(to_json().dump())); }

nlohmann::json Example::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["question"] = question;
  j["scene"] = scene_id;
  j["program"] = program;
  j["quality"] = quality;
  j["result"] = result.to_json();
  auto ns = nlohmann::json::array();
  for (const auto& [name, value] : trace_namespace) {
    ns.push_back(nlohmann::json::array({name, value.to_json()}));
  }
  j["namespace"] = std::move(ns);
  j["tools_used"] = tools_used;
  j["status"] = status == ExampleStatus::Fresh ? "fresh" : "abstracted";
  j["created_at_step"] = created_at_step;
  return j;
}

Example Example::from_json(const nlohmann::json& j, const std::string& key_path) {
  Example e;
  try {
    e.id = j.at("id").get<std::string>();
    e.question = j.at("question").get<std::string>();
    e.scene_id = j.at("scene").get<std::string>();
    e.program = j.at("program").get<std::string>();
    e.quality = j.at("quality").get<double>();
    e.result = Value::from_json(j.at("result"), key_path + ".result");
    for (std::size_t i = 0; i < j.at("namespace").size(); ++i) {
      const auto& pair = j["namespace"][i];
      if (!pair.is_array() || pair.size() != 2) {
        throw CorruptionError("namespace entries must be [name, value] pairs",
                              key_path + ".namespace");
      }
      e.trace_namespace.emplace_back(
          pair[0].get<std::string>(),
          Value::from_json(pair[1], key_path + ".namespace[" + std::to_string(i) + "]"));
    }
    e.tools_used = j.at("tools_used").get<std::set<std::string>>();
    const std::string status = j.at("status").get<std::string>();
    if (status == "fresh") {
      e.status = ExampleStatus::Fresh;
    } else if (status == "abstracted") {
      e.status = ExampleStatus::Abstracted;
    } else {
      throw CorruptionError("unknown status '" + status + "'", key_path + ".status");
    }
    e.created_at_step = j.at("created_at_step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw CorruptionError(ex.what(), key_path);
  }
  return e;
}

std::string Tool::signature() const {
  std::string sig = name + "(";
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i) sig += ", ";
    sig += params[i].name;
  }
  return sig + ")";
}

nlohmann::json Tool::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  auto ps = nlohmann::json::array();
  for (const auto& p : params) ps.push_back(nlohmann::json::array({p.name, p.semantic_type}));
  j["params"] = std::move(ps);
  j["docstring"] = docstring;
  j["body"] = body;
  j["level"] = level;
  j["deprecated"] = deprecated;
  j["deprecation_reason"] = deprecation_reason ? nlohmann::json(*deprecation_reason)
                                               : nlohmann::json(nullptr);
  j["source_example_ids"] = source_example_ids;
  j["created_at_step"] = created_at_step;
  return j;
}

Tool Tool::from_json(const nlohmann::json& j, const std::string& key_path) {
  Tool t;
  try {
    t.name = j.at("name").get<std::string>();
    for (const auto& p : j.at("params")) {
      if (!p.is_array() || p.size() != 2) {
        throw CorruptionError("params entries must be [name, type] pairs", key_path + ".params");
      }
      t.params.push_back(ToolParam{p[0].get<std::string>(), p[1].get<std::string>()});
    }
    t.docstring = j.at("docstring").get<std::string>();
    t.body = j.at("body").get<std::string>();
    t.level = j.at("level").get<int>();
    t.deprecated = j.at("deprecated").get<bool>();
    if (!j.at("deprecation_reason").is_null()) {
      t.deprecation_reason = j["deprecation_reason"].get<std::string>();
    }
    t.source_example_ids = j.at("source_example_ids").get<std::set<std::string>>();
    t.created_at_step = j.at("created_at_step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw CorruptionError(ex.what(), key_path);
  }
  return t;
}

std::vector<const Tool*> Libraries::active_tools() const {
  std::vector<const Tool*> out;
  for (const auto& [_, tool] : tools) {
    if (!tool.deprecated) out.push_back(&tool);
  }
  return out;
}

std::vector<const Tool*> Libraries::active_learned_tools() const {
  std::vector<const Tool*> out;
  for (const auto& [_, tool] : tools) {
    if (!tool.deprecated && tool.level >= 1) out.push_back(&tool);
  }
  return out;
}

int Libraries::created_learned_count() const {
  int n = 0;
  for (const auto& [_, tool] : tools) {
    if (tool.level >= 1) ++n;
  }
  return n;
}

int Libraries::active_learned_count() const {
  int n = 0;
  for (const auto& [_, tool] : tools) {
    if (tool.level >= 1 && !tool.deprecated) ++n;
  }
  return n;
}

vpl::ToolView Libraries::tool_view(const Tool* extra) const {
  vpl::ToolView view;
  auto add = [&](const Tool& tool) {
    if (tool.level == 0) return;  // natives are built into the executor
    try {
      view.add(tool.name, vpl::parse_tool_body(tool.body, tool.name));
    } catch (const vpl::ParseError& e) {
      throw IntegrityError("tool-body-parses", tool.name + ": " + e.what());
    }
  };
  for (const auto& [_, tool] : tools) {
    if (!tool.deprecated) add(tool);
  }
  if (extra) add(*extra);
  return view;
}

namespace {

const std::set<std::string> kLevel0Names = {"loc", "depth", "get_2d_object_size", "same_object",
                                            "vqa"};

void validate_libraries(const Libraries& libs, double min_quality) {
  for (const auto& [name, tool] : libs.tools) {
    if (name != tool.name) {
      throw IntegrityError("tool-key-matches-name", "key '" + name + "' holds '" + tool.name + "'");
    }
    if ((tool.level == 0) != (kLevel0Names.count(name) > 0)) {
      throw IntegrityError("level-0-exactly-predefined", name);
    }
    if (tool.level >= 1 && tool.source_example_ids.empty()) {
      throw IntegrityError("learned-tools-have-sources", name);
    }
    if (tool.level == 0 && tool.deprecated) {
      throw IntegrityError("level-0-never-deprecated", name);
    }
    if (tool.level >= 1) {
      try {
        vpl::parse_tool_body(tool.body, tool.name);
      } catch (const vpl::ParseError& e) {
        throw IntegrityError("tool-body-parses", name + ": " + e.what());
      }
    }
  }
  for (const auto& [id, ex] : libs.examples) {
    if (id != ex.id) {
      throw IntegrityError("example-key-matches-id", "key '" + id + "' holds '" + ex.id + "'");
    }
    if (ex.quality < min_quality) {
      throw IntegrityError("quality-at-least-threshold",
                           id + ": quality " + format_real(ex.quality) + " < " +
                               format_real(min_quality));
    }
    if (ex.quality < 1.0 || ex.quality > 10.0) {
      throw IntegrityError("quality-in-range", id);
    }
    try {
      vpl::parse(ex.program);
    } catch (const vpl::ParseError& e) {
      throw IntegrityError("program-parses", id + ": " + e.what());
    }
    bool has_learned = false;
    for (const auto& used : ex.tools_used) {
      auto it = libs.tools.find(used);
      if (it == libs.tools.end()) {
        throw IntegrityError("tools-used-resolve", id + " references '" + used + "'");
      }
      if (it->second.level >= 1) has_learned = true;
    }
    if (ex.status == ExampleStatus::Abstracted && !has_learned) {
      throw IntegrityError("abstracted-implies-learned-tool", id);
    }
  }
}

}  // namespace

nlohmann::json Libraries::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kLibrarySchemaVersion;
  nlohmann::json ex = nlohmann::json::object();
  for (const auto& [id, e] : examples) ex[id] = e.to_json();
  j["examples"] = std::move(ex);
  nlohmann::json ts = nlohmann::json::object();
  for (const auto& [name, t] : tools) ts[name] = t.to_json();
  j["tools"] = std::move(ts);
  j["step_counter"] = step_counter;
  j["rng_state"] = std::to_string(rng_state);  // opaque, kept textual
  return j;
}

Libraries Libraries::from_json(const nlohmann::json& j, double min_quality) {
  Libraries libs;
  try {
    if (j.at("schema_version").get<int>() != kLibrarySchemaVersion) {
      throw CorruptionError("unsupported schema_version", "schema_version");
    }
    for (const auto& [id, ej] : j.at("examples").items()) {
      libs.examples.emplace(id, Example::from_json(ej, "examples." + id));
    }
    for (const auto& [name, tj] : j.at("tools").items()) {
      libs.tools.emplace(name, Tool::from_json(tj, "tools." + name));
    }
    libs.step_counter = j.at("step_counter").get<std::int64_t>();
    libs.rng_state = std::stoull(j.at("rng_state").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), "libraries");
  } catch (const std::logic_error& e) {
    throw CorruptionError(e.what(), "libraries.rng_state");
  }
  validate_libraries(libs, min_quality);
  return libs;
}

std::string libraries_to_string(const Libraries& libs) { return libs.to_json().dump(2) + "\n"; }

void save_libraries(const Libraries& libs, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write libraries", path);
  out << libraries_to_string(libs);
  if (!out) throw IoError("write failure", path);
}

Libraries load_libraries(const std::string& path, double min_quality) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open libraries", path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), path);
  }
  return Libraries::from_json(j, min_quality);
}

std::string admit_outcome_name(AdmitOutcome o) {
  switch (o) {
    case AdmitOutcome::Inserted: return "inserted";
    case AdmitOutcome::Replaced: return "replaced";
    case AdmitOutcome::RejectedQuality: return "rejected_quality";
    case AdmitOutcome::KeptExisting: return "kept_existing";
  }
  return "?";
}

AdmitOutcome admit_example(Libraries& libs, const Example& candidate, const Config& config) {
  if (candidate.quality < config.quality_threshold) return AdmitOutcome::RejectedQuality;
  auto it = libs.examples.find(candidate.id);
  if (it == libs.examples.end()) {
    libs.examples.emplace(candidate.id, candidate);
    return AdmitOutcome::Inserted;
  }
  const Example& old = it->second;
  bool better = candidate.quality > old.quality;
  bool tie_with_new_learned_tool = false;
  if (!better && candidate.quality >= old.quality) {
    for (const auto& used : candidate.tools_used) {
      auto tool_it = libs.tools.find(used);
      if (tool_it != libs.tools.end() && tool_it->second.level >= 1 &&
          old.tools_used.count(used) == 0) {
        tie_with_new_learned_tool = true;
        break;
      }
    }
  }
  if (better || tie_with_new_learned_tool) {
    it->second = candidate;
    return AdmitOutcome::Replaced;
  }
  return AdmitOutcome::KeptExisting;
}

void deprecate_tool(Libraries& libs, const std::string& name, const std::string& reason) {
  auto it = libs.tools.find(name);
  if (it == libs.tools.end()) {
    throw IntegrityError("tool-exists", "cannot deprecate unknown tool '" + name + "'");
  }
  if (it->second.level == 0) {
    throw IntegrityError("level-0-never-deprecated",
                         "'" + name + "' is a predefined tool and cannot be deprecated");
  }
  it->second.deprecated = true;
  it->second.deprecation_reason = reason;
}

}  // namespace toolforge
