#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolforge/errors.hpp"
#include "toolforge/value.hpp"

namespace toolforge {
namespace scene {
struct SceneFixture;
}

namespace vpl {

// Interpreter limits. The step budget bounds runaway loops; the statement
// limit bounds degenerate generated sources.
inline constexpr int kDefaultStepBudget = 100000;
inline constexpr int kMaxStatements = 500;

class ParseError : public Error {
 public:
  ParseError(int line, int col, const std::string& message)
      : Error("parse error at " + std::to_string(line) + ":" + std::to_string(col) + ": " +
              message),
        line_(line),
        col_(col) {}
  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

enum class BinOp { Add, Sub, Mul, Div, Eq, Ne, Lt, Le, Gt, Ge, And, Or };

struct Expr {
  enum class Kind { Literal, Var, Unary, Binary, Call, Index, ListLit };
  Kind kind;
  int line = 0, col = 0;

  Value literal;            // Literal
  std::string name;         // Var, Call
  BinOp op = BinOp::Add;    // Binary
  bool is_not = false;      // Unary: true => not, false => negate
  std::vector<ExprPtr> args;  // Binary operands / Call args / Index (target, index) / list items
};

struct Stmt;
using StmtPtr = std::unique_ptr<Stmt>;

struct Stmt {
  enum class Kind { Let, ExprStmt, Return, If, For };
  Kind kind;
  int line = 0, col = 0;

  std::string name;              // Let target, For variable
  ExprPtr expr;                  // Let value / Return value / If condition / For iterable / ExprStmt
  std::vector<StmtPtr> body;     // If-then, For body
  std::vector<StmtPtr> orelse;   // If-else
};

struct HelperDef {
  std::string name;
  std::vector<std::string> params;
  std::vector<StmtPtr> body;
  int line = 0, col = 0;
};

// Parsed source. Helper definitions are hoisted out of the statement list;
// the helper call graph is verified acyclic at parse time.
struct Program {
  std::vector<StmtPtr> statements;
  std::vector<HelperDef> helper_defs;
  std::string source_text;

  const HelperDef* find_helper(const std::string& name) const;
};

Program parse(const std::string& source);

// ----- Execution ----------------------------------------------------------

struct TraceCall {
  std::string name;
  ValueList args;
  Value result;
};

struct ExecError {
  std::string kind;     // unknown_tool | arity | type | step_budget | tool_error |
                        // no_result | runtime
  std::string message;
  int statement_index = -1;  // top-level statement active when the error surfaced
};

struct ExecutionTrace {
  std::vector<std::pair<std::string, Value>> bindings;  // final top-level values, in binding order
  std::vector<TraceCall> calls;                         // dynamic sequence of named calls
  std::optional<Value> result;
  std::optional<ExecError> error;

  bool ok() const { return !error.has_value() && result.has_value(); }
  nlohmann::json to_json() const;
};

// A learned tool as the executor sees it: parameter names plus a parsed body.
struct ExecutableTool {
  std::vector<std::string> params;
  std::shared_ptr<const Program> body;  // exactly one helper_def, no top statements
};

// Name-resolution view handed to execute(): learned tools by name; the five
// scene primitives are built in. Deprecated tools are simply absent.
class ToolView {
 public:
  void add(const std::string& name, ExecutableTool tool);
  const ExecutableTool* find(const std::string& name) const;
  bool has(const std::string& name) const { return find(name) != nullptr; }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, ExecutableTool> tools_;
};

bool is_native_tool(const std::string& name);
bool is_builtin(const std::string& name);

// Pure: the fixture and view are never mutated, and identical inputs produce
// identical traces.
ExecutionTrace execute(const Program& prog, const scene::SceneFixture& fixture,
                       const ToolView& tools, int step_budget = kDefaultStepBudget);

// Parses `source` expecting exactly one function definition and nothing else.
// Used for learned tool bodies. Throws ParseError when the shape is wrong.
ExecutableTool parse_tool_body(const std::string& source, const std::string& expected_name);

// ----- Static analysis -----------------------------------------------------

struct ComplexityReport {
  std::map<std::string, int> per_function;  // helpers by name
  int top_level = 1;
  int max = 1;

  nlohmann::json to_json() const;
};

// McCabe number: 1 + branch points, where `if` and `for` each add one.
ComplexityReport cyclomatic_complexity(const Program& prog);

// Tool names syntactically reachable from top level, following helper calls
// but not descending into tool bodies.
std::set<std::string> called_tools(const Program& prog, const ToolView& tools);

}  // namespace vpl
}  // namespace toolforge
