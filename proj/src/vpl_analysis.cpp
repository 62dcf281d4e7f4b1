#include <functional>

#include "toolforge/vpl.hpp"

namespace toolforge::vpl {

namespace {

int count_branch_points(const std::vector<StmtPtr>& stmts) {
  int n = 0;
  for (const auto& s : stmts) {
    if (s->kind == Stmt::Kind::If || s->kind == Stmt::Kind::For) ++n;
    n += count_branch_points(s->body);
    n += count_branch_points(s->orelse);
  }
  return n;
}

void collect_call_names(const Expr& e, std::set<std::string>& out) {
  if (e.kind == Expr::Kind::Call) out.insert(e.name);
  for (const auto& a : e.args) collect_call_names(*a, out);
}

void collect_call_names(const std::vector<StmtPtr>& stmts, std::set<std::string>& out) {
  for (const auto& s : stmts) {
    if (s->expr) collect_call_names(*s->expr, out);
    collect_call_names(s->body, out);
    collect_call_names(s->orelse, out);
  }
}

}  // namespace

ComplexityReport cyclomatic_complexity(const Program& prog) {
  ComplexityReport report;
  report.top_level = 1 + count_branch_points(prog.statements);
  report.max = report.top_level;
  for (const auto& def : prog.helper_defs) {
    int ccn = 1 + count_branch_points(def.body);
    report.per_function[def.name] = ccn;
    report.max = std::max(report.max, ccn);
  }
  return report;
}

nlohmann::json ComplexityReport::to_json() const {
  nlohmann::json j;
  j["per_function"] = per_function;
  j["top_level"] = top_level;
  j["max"] = max;
  return j;
}

std::set<std::string> called_tools(const Program& prog, const ToolView& tools) {
  // Walk top-level statements, expanding through helper bodies (helpers shadow
  // tools) but never through tool bodies.
  std::set<std::string> reachable;
  std::set<std::string> visited_helpers;
  std::function<void(const std::vector<StmtPtr>&)> walk = [&](const std::vector<StmtPtr>& b) {
    std::set<std::string> names;
    collect_call_names(b, names);
    for (const auto& name : names) {
      if (const HelperDef* helper = prog.find_helper(name)) {
        if (visited_helpers.insert(name).second) walk(helper->body);
        continue;
      }
      if (tools.has(name) || is_native_tool(name)) reachable.insert(name);
    }
  };
  walk(prog.statements);
  return reachable;
}

}  // namespace toolforge::vpl
