#include "toolforge/abstraction.hpp"

#include <algorithm>
#include <functional>

#include "toolforge/prompts.hpp"
#include "toolforge/util.hpp"

namespace toolforge {

const scene::SceneFixture& fixture_for(const FixtureStore& fixtures, const std::string& id) {
  auto it = fixtures.find(id);
  if (it == fixtures.end()) throw Error("no fixture loaded for scene '" + id + "'");
  return it->second;
}

std::string cluster_membership_key(const std::vector<std::string>& ids) {
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  return to_hex(fnv1a64(join(sorted, ",")));
}

std::vector<Cluster> cluster_by_similarity(const Libraries& libs, EmbeddingBank& bank,
                                           const Config& config) {
  // Only fresh examples are eligible for abstraction.
  std::vector<const Example*> members;
  for (const auto& [_, e] : libs.examples) {
    if (e.status == ExampleStatus::Fresh) members.push_back(&e);
  }
  std::sort(members.begin(), members.end(),
            [](const Example* a, const Example* b) { return a->id < b->id; });
  const std::size_t n = members.size();
  if (n == 0) return {};

  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto vi = bank.get(members[i]->question);
    for (std::size_t j = i + 1; j < n; ++j) {
      sim[i][j] = sim[j][i] = cosine(vi, bank.get(members[j]->question));
    }
  }

  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups.push_back({i});
  auto avg_link = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double total = 0;
    for (std::size_t i : a) {
      for (std::size_t j : b) total += sim[i][j];
    }
    return total / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  // Members are sorted by id, so the smallest member index is the minimum id.
  auto min_idx = [](const std::vector<std::size_t>& g) {
    return *std::min_element(g.begin(), g.end());
  };

  while (groups.size() > 1) {
    double best_sim = -2;
    std::size_t best_a = 0, best_b = 0;
    for (std::size_t a = 0; a < groups.size(); ++a) {
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        double s = avg_link(groups[a], groups[b]);
        bool better = s > best_sim;
        if (s == best_sim) {
          auto lo = std::min(min_idx(groups[a]), min_idx(groups[b]));
          auto hi = std::max(min_idx(groups[a]), min_idx(groups[b]));
          auto cur_lo = std::min(min_idx(groups[best_a]), min_idx(groups[best_b]));
          auto cur_hi = std::max(min_idx(groups[best_a]), min_idx(groups[best_b]));
          better = lo < cur_lo || (lo == cur_lo && hi < cur_hi);
        }
        if (better) {
          best_sim = s;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (best_sim < config.sim_threshold) break;
    auto merged = groups[best_a];
    merged.insert(merged.end(), groups[best_b].begin(), groups[best_b].end());
    std::sort(merged.begin(), merged.end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(best_b));
    groups[best_a] = std::move(merged);
  }

  std::vector<Cluster> out;
  for (const auto& g : groups) {
    if (g.size() < static_cast<std::size_t>(config.cluster_min_size)) continue;
    Cluster c;
    for (std::size_t i : g) c.ids.push_back(members[i]->id);
    std::sort(c.ids.begin(), c.ids.end());
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(),
            [](const Cluster& a, const Cluster& b) { return a.ids.front() < b.ids.front(); });
  return out;
}

namespace {

std::vector<const Example*> resolve_members(const Libraries& libs,
                                            const std::vector<std::string>& ids) {
  std::vector<const Example*> members;
  for (const auto& id : ids) {
    auto it = libs.examples.find(id);
    if (it == libs.examples.end()) throw Error("cluster references unknown example '" + id + "'");
    members.push_back(&it->second);
  }
  return members;
}

}  // namespace

std::vector<Cluster> assess_cluster(const Cluster& cluster, const Libraries& libs,
                                    ChatProvider& chat, const Config& config) {
  if (cluster.ids.size() < static_cast<std::size_t>(config.cluster_min_size)) {
    throw IntegrityError("cluster-min-size", "assess_cluster given a cluster of " +
                                                 std::to_string(cluster.ids.size()));
  }
  auto members = resolve_members(libs, cluster.ids);
  ChatRequest req = prompts::build_cluster_request(config, members);

  const std::set<std::string> submitted(cluster.ids.begin(), cluster.ids.end());
  auto validate = [&](const ReplyPayload& payload) -> std::optional<std::string> {
    const auto& reply = std::get<ClusterReply>(payload);
    std::set<std::string> seen;
    auto account = [&](const std::vector<std::string>& ids) -> std::optional<std::string> {
      for (const auto& id : ids) {
        if (!submitted.count(id)) return "id '" + id + "' was not in the submitted cluster";
        if (!seen.insert(id).second) {
          return "id '" + id + "' appears in more than one block";
        }
      }
      return std::nullopt;
    };
    for (const auto& block : reply.clusters) {
      if (auto err = account(block.ids)) return err;
    }
    if (auto err = account(reply.unclustered)) return err;
    if (seen.size() != submitted.size()) {
      return "reply does not cover every submitted example id";
    }
    return std::nullopt;
  };

  StructuredReply reply = chat_parsed(chat, req, validate);
  const auto& parsed = std::get<ClusterReply>(reply.parsed);
  std::vector<Cluster> out;
  for (const auto& block : parsed.clusters) {
    Cluster c;
    c.ids = block.ids;
    std::sort(c.ids.begin(), c.ids.end());
    c.pattern = block.pattern;
    c.parameters = block.parameters;
    c.potential = block.potential;
    out.push_back(std::move(c));
  }
  return out;
}

ValidationResult validate_tool(const Tool& tool, const std::vector<const Example*>& members,
                               const Libraries& libs, ChatProvider& chat, const Config& config,
                               const FixtureStore& fixtures, JsonlWriter& audit,
                               bool early_exit) {
  ValidationResult result;
  if (members.empty()) throw Error("validate_tool: empty member set");
  const vpl::ToolView view = libs.tool_view(&tool);
  const auto g = static_cast<double>(members.size());

  auto log = [&](const std::string& event, const std::string& example_id,
                 const nlohmann::json& extra) {
    nlohmann::json row;
    row["event"] = event;
    row["tool"] = tool.name;
    if (!example_id.empty()) row["example"] = example_id;
    for (const auto& [k, v] : extra.items()) row[k] = v;
    audit.write(row);
  };

  // Stage 1: every example needs a rewrite that parses, calls the tool, and
  // executes to a non-null result.
  bool stage1_failed = false;
  for (const Example* example : members) {
    bool ok = false;
    std::string last_failure = "no rewrite attempts allowed";
    for (int attempt = 1; attempt <= config.max_rewrite_retries && !ok; ++attempt) {
      ChatRequest req = prompts::build_rewrite_request(config, *example, tool, attempt);
      StructuredReply reply = chat_parsed(chat, req);
      const std::string source = std::get<ProgramReply>(reply.parsed).source;
      vpl::Program prog;
      try {
        prog = vpl::parse(source);
      } catch (const vpl::ParseError& e) {
        last_failure = e.what();
        continue;
      }
      auto used = vpl::called_tools(prog, view);
      if (!used.count(tool.name)) {
        last_failure = "rewrite does not call " + tool.name;
        continue;
      }
      vpl::ExecutionTrace trace =
          vpl::execute(prog, fixture_for(fixtures, example->scene_id), view);
      if (trace.error) {
        last_failure = trace.error->kind + ": " + trace.error->message;
        continue;
      }
      if (!trace.result || trace.result->is_null()) {
        last_failure = "rewrite produced no result";
        continue;
      }
      RewriteRecord record;
      record.program = source;
      record.result = *trace.result;
      record.bindings = trace.bindings;
      record.tools_used = used;
      record.divergent = !value_equivalent(record.result, example->result, kDivergenceTol);
      result.rewrites[example->id] = std::move(record);
      ok = true;
    }
    log("rewrite", example->id,
        {{"ok", ok}, {"detail", ok ? "" : last_failure}});
    if (!ok) {
      stage1_failed = true;
      result.failure_detail = example->id + ": " + last_failure;
      if (early_exit) break;  // 100% execution success is already impossible
    }
  }
  if (stage1_failed) {
    result.passed = false;
    result.stage = "execution";
    log("validation", "", {{"stage", "execution"}, {"passed", false},
                           {"detail", result.failure_detail}});
    return result;
  }

  // Stage 2: judge divergent results sequentially, bailing out as soon as the
  // correctness bound cannot be met.
  int incorrect = 0;
  for (const Example* example : members) {
    RewriteRecord& record = result.rewrites.at(example->id);
    if (!record.divergent) continue;
    ++result.divergent_count;
    ChatRequest req = prompts::build_correctness_request(
        config, example->id, example->question, example->program, example->result,
        record.program, record.result, fixture_for(fixtures, example->scene_id));
    StructuredReply reply = chat_parsed(chat, req);
    record.judged_correct = std::get<VerdictReply>(reply.parsed).correct;
    log("divergence_verdict", example->id,
        {{"correct", record.judged_correct},
         {"original", example->result.render()},
         {"rewritten", record.result.render()}});
    if (record.judged_correct) {
      ++result.correct_divergent_count;
    } else {
      ++incorrect;
      double best_possible = (g - incorrect) / g;
      if (early_exit && best_possible < config.correctness_min) {
        result.passed = false;
        result.stage = "correctness";
        result.failure_detail = std::to_string(incorrect) + " incorrect divergences cap " +
                                "correctness below the threshold";
        log("validation", "",
            {{"stage", "correctness"}, {"passed", false}, {"detail", result.failure_detail}});
        return result;
      }
    }
  }
  double overall =
      (g - result.divergent_count + result.correct_divergent_count) / g;
  result.passed = overall >= config.correctness_min;
  result.stage = result.passed ? "passed" : "correctness";
  if (!result.passed) {
    result.failure_detail = "overall correctness " + format_real(overall) + " below threshold";
  }
  log("validation", "", {{"stage", result.stage},
                         {"passed", result.passed},
                         {"overall_correct", overall},
                         {"divergent", result.divergent_count},
                         {"correct_divergent", result.correct_divergent_count}});
  return result;
}

int compute_tool_level(const std::string& body, const std::string& name, const Libraries& libs) {
  vpl::ExecutableTool parsed = vpl::parse_tool_body(body, name);
  std::set<std::string> callees;
  std::function<void(const vpl::Expr&)> scan_expr = [&](const vpl::Expr& e) {
    if (e.kind == vpl::Expr::Kind::Call) callees.insert(e.name);
    for (const auto& a : e.args) scan_expr(*a);
  };
  std::function<void(const std::vector<vpl::StmtPtr>&)> scan =
      [&](const std::vector<vpl::StmtPtr>& stmts) {
        for (const auto& s : stmts) {
          if (s->expr) scan_expr(*s->expr);
          scan(s->body);
          scan(s->orelse);
        }
      };
  scan(parsed.body->helper_defs.front().body);

  int max_callee = 0;
  for (const auto& callee : callees) {
    if (vpl::is_builtin(callee)) continue;
    if (vpl::is_native_tool(callee)) continue;  // level 0
    auto it = libs.tools.find(callee);
    if (it == libs.tools.end() || it->second.deprecated) {
      throw Error("tool body calls unavailable tool '" + callee + "'");
    }
    max_callee = std::max(max_callee, it->second.level);
  }
  return 1 + max_callee;
}

namespace {

std::string unique_tool_name(const std::string& wanted, const Libraries& libs) {
  if (!libs.tools.count(wanted)) return wanted;
  for (int suffix = 2;; ++suffix) {
    std::string candidate = wanted + "_" + std::to_string(suffix);
    if (!libs.tools.count(candidate)) return candidate;
  }
}

}  // namespace

std::optional<Tool> tool_from_reply(const ToolReply& reply, const Libraries& libs,
                                    std::string* error) {
  Tool tool;
  tool.name = unique_tool_name(reply.name, libs);
  tool.params = reply.params;
  tool.docstring = reply.docstring;
  tool.body = reply.code;
  if (tool.name != reply.name) {
    const std::string marker = "def " + reply.name;
    auto pos = tool.body.find(marker);
    if (pos == std::string::npos) {
      *error = "code does not define '" + reply.name + "'";
      return std::nullopt;
    }
    tool.body = tool.body.substr(0, pos) + "def " + tool.name +
                tool.body.substr(pos + marker.size());
  }
  vpl::ExecutableTool parsed;
  try {
    parsed = vpl::parse_tool_body(tool.body, tool.name);
  } catch (const vpl::ParseError& e) {
    *error = e.what();
    return std::nullopt;
  }
  if (parsed.params.size() != tool.params.size()) {
    *error = "declared params do not match the definition";
    return std::nullopt;
  }
  for (std::size_t i = 0; i < parsed.params.size(); ++i) {
    if (parsed.params[i] != tool.params[i].name) {
      *error = "param '" + tool.params[i].name + "' does not match definition param '" +
               parsed.params[i] + "'";
      return std::nullopt;
    }
  }
  try {
    tool.level = compute_tool_level(tool.body, tool.name, libs);
  } catch (const Error& e) {
    *error = e.what();
    return std::nullopt;
  }
  return tool;
}

void apply_rewrites(Libraries& libs, const ValidationResult& validation,
                    const std::string& tool_name) {
  (void)tool_name;
  for (const auto& [id, record] : validation.rewrites) {
    auto it = libs.examples.find(id);
    if (it == libs.examples.end()) continue;
    Example& e = it->second;
    e.program = record.program;
    e.result = record.result;
    e.trace_namespace = record.bindings;
    e.tools_used = record.tools_used;
    e.status = ExampleStatus::Abstracted;
  }
}

AbstractionOutcome create_tool(const Cluster& assessed, Libraries& libs, ChatProvider& chat,
                               const Config& config, const FixtureStore& fixtures,
                               JsonlWriter& audit) {
  AbstractionOutcome outcome;
  auto members = resolve_members(libs, assessed.ids);
  for (int attempt = 1; attempt <= config.max_abstraction_retries; ++attempt) {
    outcome.attempts = attempt;
    ChatRequest req = prompts::build_abstraction_request(
        config, members, assessed.pattern, assessed.parameters, libs.active_tools(), attempt);
    StructuredReply reply = chat_parsed(chat, req);
    std::string error;
    auto tool = tool_from_reply(std::get<ToolReply>(reply.parsed), libs, &error);
    if (!tool) {
      outcome.failure = error;
      audit.write({{"event", "abstraction_attempt"},
                   {"attempt", attempt},
                   {"ok", false},
                   {"detail", error}});
      continue;
    }
    tool->source_example_ids.insert(assessed.ids.begin(), assessed.ids.end());
    tool->created_at_step = libs.step_counter;
    ValidationResult validation =
        validate_tool(*tool, members, libs, chat, config, fixtures, audit);
    audit.write({{"event", "abstraction_attempt"},
                 {"attempt", attempt},
                 {"ok", validation.passed},
                 {"tool", tool->name},
                 {"stage", validation.stage}});
    if (!validation.passed) {
      outcome.failure = validation.failure_detail;
      outcome.validation = validation;
      continue;
    }
    libs.tools.emplace(tool->name, *tool);
    apply_rewrites(libs, validation, tool->name);
    outcome.created = true;
    outcome.tool_name = tool->name;
    outcome.validation = std::move(validation);
    return outcome;
  }
  return outcome;
}

AbstractionPassStats run_abstraction_pass(Libraries& libs, EmbeddingBank& bank,
                                          ChatProvider& chat, const Config& config,
                                          const FixtureStore& fixtures,
                                          std::set<std::string>& skip_cache,
                                          JsonlWriter& audit) {
  AbstractionPassStats stats;
  for (const Cluster& cluster : cluster_by_similarity(libs, bank, config)) {
    ++stats.clusters_considered;
    const std::string key = cluster_membership_key(cluster.ids);
    if (skip_cache.count(key)) {
      ++stats.clusters_skipped_cached;
      continue;
    }
    bool created_here = false;
    for (const Cluster& assessed : assess_cluster(cluster, libs, chat, config)) {
      if (assessed.ids.size() < static_cast<std::size_t>(config.cluster_min_size)) continue;
      if (assessed.potential < config.potential_threshold) {
        ++stats.clusters_skipped_potential;
        audit.write({{"event", "cluster_skipped"},
                     {"ids", assessed.ids},
                     {"potential", assessed.potential}});
        continue;
      }
      AbstractionOutcome outcome =
          create_tool(assessed, libs, chat, config, fixtures, audit);
      if (outcome.created) {
        ++stats.tools_created;
        created_here = true;
      }
    }
    // A cluster that produced nothing is not retried until its membership
    // changes; a successful creation changes membership by itself.
    if (!created_here) skip_cache.insert(key);
  }
  return stats;
}

}  // namespace toolforge
