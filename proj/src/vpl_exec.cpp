#include <climits>
#include <cmath>
#include <cstdlib>

#include "toolforge/scene.hpp"
#include "toolforge/vpl.hpp"

namespace toolforge::vpl {

namespace {

const std::set<std::string> kNativeTools = {"loc", "depth", "get_2d_object_size",
                                            "same_object", "vqa"};
const std::set<std::string> kBuiltins = {"len", "sum", "min", "max", "abs", "sqrt", "append"};

constexpr int kMaxCallDepth = 64;

struct RuntimeFailure {
  std::string kind;
  std::string message;
};

[[noreturn]] void fail(const std::string& kind, const std::string& message) {
  throw RuntimeFailure{kind, message};
}

[[noreturn]] void type_fail(const std::string& context, const Value& offending) {
  fail("type", context + " (got " + offending.kind_name() + " " + offending.render() + ")");
}

// One activation record: a function body (or top level) shares a single
// flat scope, like a Python function namespace.
struct Scope {
  std::vector<std::string> order;
  std::map<std::string, Value> vars;

  void assign(const std::string& name, Value v) {
    auto it = vars.find(name);
    if (it == vars.end()) {
      order.push_back(name);
      vars.emplace(name, std::move(v));
    } else {
      it->second = std::move(v);
    }
  }

  const Value* find(const std::string& name) const {
    auto it = vars.find(name);
    return it == vars.end() ? nullptr : &it->second;
  }
};

enum class Flow { Normal, Returned };

class Interpreter {
 public:
  Interpreter(const scene::SceneFixture& fixture, const ToolView& tools, int step_budget)
      : fixture_(fixture), tools_(tools), budget_(step_budget) {}

  ExecutionTrace run(const Program& prog) {
    ExecutionTrace trace;
    Scope top;
    try {
      Value result;
      Flow flow = exec_block(prog.statements, prog, top, result, /*top_level=*/true);
      if (flow == Flow::Returned) {
        trace.result = result;
      } else {
        trace.error = ExecError{"no_result", "no result", current_top_};
      }
    } catch (const RuntimeFailure& f) {
      trace.error = ExecError{f.kind, f.message, current_top_};
    }
    for (const auto& name : top.order) trace.bindings.emplace_back(name, top.vars.at(name));
    trace.calls = std::move(calls_);
    return trace;
  }

 private:
  void step(int line) {
    if (--budget_ < 0) {
      fail("step_budget", "evaluation step budget exceeded near line " + std::to_string(line));
    }
  }

  Flow exec_block(const std::vector<StmtPtr>& stmts, const Program& prog, Scope& scope,
                  Value& result, bool top_level) {
    for (std::size_t i = 0; i < stmts.size(); ++i) {
      if (top_level) current_top_ = static_cast<int>(i);
      Flow flow = exec_stmt(*stmts[i], prog, scope, result);
      if (flow == Flow::Returned) return flow;
    }
    return Flow::Normal;
  }

  Flow exec_stmt(const Stmt& stmt, const Program& prog, Scope& scope, Value& result) {
    step(stmt.line);
    switch (stmt.kind) {
      case Stmt::Kind::Let:
        scope.assign(stmt.name, eval(*stmt.expr, prog, scope));
        return Flow::Normal;
      case Stmt::Kind::ExprStmt:
        eval(*stmt.expr, prog, scope);
        return Flow::Normal;
      case Stmt::Kind::Return:
        result = eval(*stmt.expr, prog, scope);
        return Flow::Returned;
      case Stmt::Kind::If: {
        Value cond = eval(*stmt.expr, prog, scope);
        if (cond.kind() != Value::Kind::Bool) type_fail("if condition must be a bool", cond);
        const auto& branch = cond.as_bool() ? stmt.body : stmt.orelse;
        return exec_block(branch, prog, scope, result, /*top_level=*/false);
      }
      case Stmt::Kind::For: {
        Value iterable = eval(*stmt.expr, prog, scope);
        if (iterable.kind() != Value::Kind::List) {
          type_fail("for expects a list", iterable);
        }
        for (const Value& item : iterable.as_list()) {
          step(stmt.line);
          scope.assign(stmt.name, item);
          Flow flow = exec_block(stmt.body, prog, scope, result, /*top_level=*/false);
          if (flow == Flow::Returned) return flow;
        }
        return Flow::Normal;
      }
    }
    fail("runtime", "unknown statement kind");
  }

  Value eval(const Expr& e, const Program& prog, Scope& scope) {
    step(e.line);
    switch (e.kind) {
      case Expr::Kind::Literal: return e.literal;
      case Expr::Kind::Var: {
        if (const Value* v = scope.find(e.name)) return *v;
        fail("runtime", "undefined variable '" + e.name + "' at line " + std::to_string(e.line));
      }
      case Expr::Kind::Unary: {
        Value v = eval(*e.args[0], prog, scope);
        if (e.is_not) {
          if (v.kind() != Value::Kind::Bool) type_fail("not expects a bool", v);
          return Value::boolean(!v.as_bool());
        }
        if (v.kind() == Value::Kind::Int) {
          if (v.as_int() == INT64_MIN) fail("runtime", "integer overflow");
          return Value::integer(-v.as_int());
        }
        if (v.kind() == Value::Kind::Real) return Value::real(-v.as_real());
        type_fail("negation expects a number", v);
      }
      case Expr::Kind::Binary: return eval_binary(e, prog, scope);
      case Expr::Kind::Call: return eval_call(e, prog, scope);
      case Expr::Kind::Index: {
        Value target = eval(*e.args[0], prog, scope);
        Value idx = eval(*e.args[1], prog, scope);
        if (idx.kind() != Value::Kind::Int) type_fail("index must be an integer", idx);
        std::int64_t i = idx.as_int();
        auto check = [&](std::int64_t n) {
          if (i < 0 || i >= n) {
            fail("runtime", "index " + std::to_string(i) + " out of range for " +
                                target.kind_name() + " of size " + std::to_string(n));
          }
        };
        switch (target.kind()) {
          case Value::Kind::List: {
            const ValueList& items = target.as_list();
            check(static_cast<std::int64_t>(items.size()));
            return items[static_cast<std::size_t>(i)];
          }
          case Value::Kind::Box: {
            check(4);
            const BoxVal& b = target.as_box();
            double v[4] = {b.x_min, b.y_min, b.x_max, b.y_max};
            return Value::real(v[i]);
          }
          case Value::Kind::Point: {
            check(2);
            const PointVal& p = target.as_point();
            return Value::real(i == 0 ? p.x : p.y);
          }
          default: type_fail("value is not indexable", target);
        }
      }
      case Expr::Kind::ListLit: {
        ValueList items;
        items.reserve(e.args.size());
        for (const auto& a : e.args) items.push_back(eval(*a, prog, scope));
        return Value::list(std::move(items));
      }
    }
    fail("runtime", "unknown expression kind");
  }

  Value eval_binary(const Expr& e, const Program& prog, Scope& scope) {
    // and/or short-circuit, so evaluate lazily.
    if (e.op == BinOp::And || e.op == BinOp::Or) {
      Value lhs = eval(*e.args[0], prog, scope);
      if (lhs.kind() != Value::Kind::Bool) type_fail("boolean operator expects bools", lhs);
      if (e.op == BinOp::And && !lhs.as_bool()) return Value::boolean(false);
      if (e.op == BinOp::Or && lhs.as_bool()) return Value::boolean(true);
      Value rhs = eval(*e.args[1], prog, scope);
      if (rhs.kind() != Value::Kind::Bool) type_fail("boolean operator expects bools", rhs);
      return rhs;
    }
    Value lhs = eval(*e.args[0], prog, scope);
    Value rhs = eval(*e.args[1], prog, scope);
    switch (e.op) {
      case BinOp::Eq: return Value::boolean(language_equals(lhs, rhs));
      case BinOp::Ne: return Value::boolean(!language_equals(lhs, rhs));
      case BinOp::Lt:
      case BinOp::Le:
      case BinOp::Gt:
      case BinOp::Ge: {
        if (!lhs.is_number()) type_fail("comparison expects numbers", lhs);
        if (!rhs.is_number()) type_fail("comparison expects numbers", rhs);
        double a = lhs.number(), b = rhs.number();
        switch (e.op) {
          case BinOp::Lt: return Value::boolean(a < b);
          case BinOp::Le: return Value::boolean(a <= b);
          case BinOp::Gt: return Value::boolean(a > b);
          default: return Value::boolean(a >= b);
        }
      }
      case BinOp::Add:
        if (lhs.kind() == Value::Kind::Text && rhs.kind() == Value::Kind::Text) {
          return Value::text(lhs.as_text() + rhs.as_text());
        }
        [[fallthrough]];
      case BinOp::Sub:
      case BinOp::Mul: {
        if (!lhs.is_number()) type_fail("arithmetic expects numbers", lhs);
        if (!rhs.is_number()) type_fail("arithmetic expects numbers", rhs);
        if (lhs.kind() == Value::Kind::Int && rhs.kind() == Value::Kind::Int) {
          std::int64_t a = lhs.as_int(), b = rhs.as_int(), out = 0;
          bool overflow = false;
          switch (e.op) {
            case BinOp::Add: overflow = __builtin_add_overflow(a, b, &out); break;
            case BinOp::Sub: overflow = __builtin_sub_overflow(a, b, &out); break;
            default: overflow = __builtin_mul_overflow(a, b, &out); break;
          }
          if (overflow) fail("runtime", "integer overflow");
          return Value::integer(out);
        }
        double a = lhs.number(), b = rhs.number();
        double out = e.op == BinOp::Add ? a + b : e.op == BinOp::Sub ? a - b : a * b;
        if (!std::isfinite(out)) fail("runtime", "non-finite arithmetic result");
        return Value::real(out);
      }
      case BinOp::Div: {
        if (!lhs.is_number()) type_fail("arithmetic expects numbers", lhs);
        if (!rhs.is_number()) type_fail("arithmetic expects numbers", rhs);
        double b = rhs.number();
        if (b == 0) fail("runtime", "division by zero");
        double out = lhs.number() / b;
        if (!std::isfinite(out)) fail("runtime", "non-finite arithmetic result");
        return Value::real(out);
      }
      default: fail("runtime", "unknown operator");
    }
  }

  Value eval_call(const Expr& e, const Program& prog, Scope& scope) {
    ValueList args;
    args.reserve(e.args.size());
    for (const auto& a : e.args) args.push_back(eval(*a, prog, scope));

    if (++call_depth_ > kMaxCallDepth) fail("runtime", "call nesting too deep");
    struct DepthGuard {
      int& d;
      ~DepthGuard() { --d; }
    } guard{call_depth_};

    // Resolution order: program helpers, learned tools, scene primitives,
    // builtins. Helpers exist only in the program's own frame set.
    if (const HelperDef* helper = prog.find_helper(e.name)) {
      Value out = invoke_function(e.name, helper->params, helper->body, prog, args, e.line);
      record(e.name, args, out);
      return out;
    }
    if (const ExecutableTool* tool = tools_.find(e.name)) {
      const HelperDef& def = tool->body->helper_defs.front();
      Value out = invoke_function(e.name, tool->params, def.body, *tool->body, args, e.line);
      record(e.name, args, out);
      return out;
    }
    if (kNativeTools.count(e.name)) {
      Value out = call_native(e.name, args, e.line);
      record(e.name, args, out);
      return out;
    }
    if (kBuiltins.count(e.name)) {
      Value out = call_builtin(e.name, args, e.line);
      record(e.name, args, out);
      return out;
    }
    fail("unknown_tool", "unknown tool or function '" + e.name + "'");
  }

  Value invoke_function(const std::string& name, const std::vector<std::string>& params,
                        const std::vector<StmtPtr>& body, const Program& owner,
                        const ValueList& args, int line) {
    if (args.size() != params.size()) {
      fail("arity", name + " expects " + std::to_string(params.size()) + " arguments, got " +
                        std::to_string(args.size()) + " at line " + std::to_string(line));
    }
    Scope local;
    for (std::size_t i = 0; i < params.size(); ++i) local.assign(params[i], args[i]);
    Value result;
    Flow flow = exec_block(body, owner, local, result, /*top_level=*/false);
    if (flow != Flow::Returned) fail("no_result", name + ": no result");
    return result;
  }

  void expect_arity(const std::string& name, const ValueList& args, std::size_t n, int line) {
    if (args.size() != n) {
      fail("arity", name + " expects " + std::to_string(n) + " arguments, got " +
                        std::to_string(args.size()) + " at line " + std::to_string(line));
    }
  }

  Value call_native(const std::string& name, const ValueList& args, int line) {
    try {
      if (name == "loc") {
        expect_arity(name, args, 1, line);
        if (args[0].kind() != Value::Kind::Text) type_fail("loc expects a label", args[0]);
        ValueList boxes;
        for (const BoxVal& b : scene::tool_loc(fixture_, args[0].as_text())) {
          boxes.push_back(Value::box(b));
        }
        return Value::list(std::move(boxes));
      }
      if (name == "depth") {
        expect_arity(name, args, 1, line);
        if (args[0].kind() != Value::Kind::Box) type_fail("depth expects a box", args[0]);
        return Value::real(scene::tool_depth(fixture_, args[0].as_box()));
      }
      if (name == "get_2d_object_size") {
        expect_arity(name, args, 1, line);
        if (args[0].kind() != Value::Kind::Box) {
          type_fail("get_2d_object_size expects a box", args[0]);
        }
        auto [w, h] = scene::tool_get_2d_object_size(fixture_, args[0].as_box());
        return Value::list({Value::real(w), Value::real(h)});
      }
      if (name == "same_object") {
        expect_arity(name, args, 2, line);
        if (args[0].kind() != Value::Kind::Box) type_fail("same_object expects boxes", args[0]);
        if (args[1].kind() != Value::Kind::Box) type_fail("same_object expects boxes", args[1]);
        return Value::boolean(
            scene::tool_same_object(fixture_, args[0].as_box(), args[1].as_box()));
      }
      // vqa
      expect_arity(name, args, 1, line);
      if (args[0].kind() != Value::Kind::Text) type_fail("vqa expects a question", args[0]);
      return Value::text(scene::tool_vqa(fixture_, args[0].as_text()));
    } catch (const scene::ToolFailure& f) {
      fail("tool_error", name + ": " + f.what());
    }
  }

  Value call_builtin(const std::string& name, const ValueList& args, int line) {
    if (name == "len") {
      expect_arity(name, args, 1, line);
      if (args[0].kind() != Value::Kind::List) type_fail("len expects a list", args[0]);
      return Value::integer(static_cast<std::int64_t>(args[0].as_list().size()));
    }
    if (name == "sum") {
      expect_arity(name, args, 1, line);
      if (args[0].kind() != Value::Kind::List) type_fail("sum expects a list", args[0]);
      bool all_int = true;
      for (const Value& v : args[0].as_list()) {
        if (!v.is_number()) type_fail("sum expects numbers", v);
        if (v.kind() != Value::Kind::Int) all_int = false;
      }
      if (all_int) {
        std::int64_t total = 0;
        for (const Value& v : args[0].as_list()) {
          if (__builtin_add_overflow(total, v.as_int(), &total)) {
            fail("runtime", "integer overflow in sum");
          }
        }
        return Value::integer(total);
      }
      double total = 0;
      for (const Value& v : args[0].as_list()) total += v.number();
      if (!std::isfinite(total)) fail("runtime", "non-finite arithmetic result");
      return Value::real(total);
    }
    if (name == "min" || name == "max") {
      ValueList items;
      if (args.size() == 1 && args[0].kind() == Value::Kind::List) {
        items = args[0].as_list();
        if (items.empty()) fail("runtime", name + " of empty list");
      } else if (args.size() == 2) {
        items = args;
      } else {
        fail("arity", name + " expects a list or two numbers at line " + std::to_string(line));
      }
      const Value* best = nullptr;
      for (const Value& v : items) {
        if (!v.is_number()) type_fail(name + " expects numbers", v);
        if (!best || (name == "min" ? v.number() < best->number()
                                    : v.number() > best->number())) {
          best = &v;
        }
      }
      return *best;
    }
    if (name == "abs") {
      expect_arity(name, args, 1, line);
      if (args[0].kind() == Value::Kind::Int) {
        if (args[0].as_int() == INT64_MIN) fail("runtime", "integer overflow");
        return Value::integer(std::llabs(args[0].as_int()));
      }
      if (args[0].kind() == Value::Kind::Real) return Value::real(std::fabs(args[0].as_real()));
      type_fail("abs expects a number", args[0]);
    }
    if (name == "sqrt") {
      expect_arity(name, args, 1, line);
      if (!args[0].is_number()) type_fail("sqrt expects a number", args[0]);
      double v = args[0].number();
      if (v < 0) fail("runtime", "sqrt of negative number");
      return Value::real(std::sqrt(v));
    }
    // append
    expect_arity(name, args, 2, line);
    if (args[0].kind() != Value::Kind::List) type_fail("append expects a list", args[0]);
    ValueList out = args[0].as_list();
    out.push_back(args[1]);
    return Value::list(std::move(out));
  }

  void record(const std::string& name, const ValueList& args, const Value& result) {
    calls_.push_back(TraceCall{name, args, result});
  }

  const scene::SceneFixture& fixture_;
  const ToolView& tools_;
  int budget_;
  int current_top_ = -1;
  int call_depth_ = 0;
  std::vector<TraceCall> calls_;
};

}  // namespace

void ToolView::add(const std::string& name, ExecutableTool tool) {
  tools_[name] = std::move(tool);
}

const ExecutableTool* ToolView::find(const std::string& name) const {
  auto it = tools_.find(name);
  return it == tools_.end() ? nullptr : &it->second;
}

std::vector<std::string> ToolView::names() const {
  std::vector<std::string> out;
  out.reserve(tools_.size());
  for (const auto& [name, _] : tools_) out.push_back(name);
  return out;
}

bool is_native_tool(const std::string& name) { return kNativeTools.count(name) > 0; }
bool is_builtin(const std::string& name) { return kBuiltins.count(name) > 0; }

ExecutionTrace execute(const Program& prog, const scene::SceneFixture& fixture,
                       const ToolView& tools, int step_budget) {
  Interpreter interp(fixture, tools, step_budget);
  return interp.run(prog);
}

nlohmann::json ExecutionTrace::to_json() const {
  nlohmann::json j;
  auto binds = nlohmann::json::array();
  for (const auto& [name, value] : bindings) {
    binds.push_back(nlohmann::json::array({name, value.to_json()}));
  }
  j["bindings"] = std::move(binds);
  auto cs = nlohmann::json::array();
  for (const auto& c : calls) {
    nlohmann::json cj;
    cj["name"] = c.name;
    auto as = nlohmann::json::array();
    for (const auto& a : c.args) as.push_back(a.to_json());
    cj["args"] = std::move(as);
    cj["result"] = c.result.to_json();
    cs.push_back(std::move(cj));
  }
  j["calls"] = std::move(cs);
  j["result"] = result ? result->to_json() : nlohmann::json(nullptr);
  if (error) {
    nlohmann::json ej;
    ej["kind"] = error->kind;
    ej["message"] = error->message;
    ej["statement_index"] = error->statement_index;
    j["error"] = std::move(ej);
  } else {
    j["error"] = nullptr;
  }
  return j;
}

}  // namespace toolforge::vpl
