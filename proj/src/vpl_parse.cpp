#include <cctype>
#include <charconv>
#include <cstdlib>
#include <map>

#include "toolforge/vpl.hpp"

namespace toolforge::vpl {

namespace {

enum class Tok {
  End, Newline, Ident, Keyword, Int, Real, String,
  Plus, Minus, Star, Slash, Eq, Ne, Lt, Le, Gt, Ge, Assign,
  LParen, RParen, LBracket, RBracket, LBrace, RBrace, Comma,
};

struct Token {
  Tok type;
  std::string text;
  std::int64_t int_val = 0;
  double real_val = 0;
  int line = 1, col = 1;
};

const std::set<std::string> kKeywords = {"let", "if",   "else", "for",  "in",  "return",
                                         "def", "and",  "or",   "not",  "true", "false",
                                         "null"};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    int depth = 0;  // () and [] nesting suppresses newline tokens
    while (true) {
      skip_ws_and_comments();
      if (pos_ >= src_.size()) break;
      char c = src_[pos_];
      if (c == '\n' || c == ';') {
        if (depth == 0 &&
            !(out.empty() || out.back().type == Tok::Newline || out.back().type == Tok::LBrace)) {
          out.push_back(make(Tok::Newline, c == ';' ? ";" : "\\n"));
        }
        advance();
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && pos_ + 1 < src_.size() &&
           std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        out.push_back(number());
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        Token t = ident();
        out.push_back(t);
        continue;
      }
      if (c == '"') {
        out.push_back(string_lit());
        continue;
      }
      Token t = make(Tok::End, std::string(1, c));
      switch (c) {
        case '+': t.type = Tok::Plus; break;
        case '-': t.type = Tok::Minus; break;
        case '*': t.type = Tok::Star; break;
        case '/': t.type = Tok::Slash; break;
        case ',': t.type = Tok::Comma; break;
        case '(': t.type = Tok::LParen; ++depth; break;
        case ')': t.type = Tok::RParen; depth = std::max(0, depth - 1); break;
        case '[': t.type = Tok::LBracket; ++depth; break;
        case ']': t.type = Tok::RBracket; depth = std::max(0, depth - 1); break;
        case '{': t.type = Tok::LBrace; break;
        case '}': {
          // A closing brace also terminates the statement before it.
          if (!out.empty() && out.back().type != Tok::Newline && out.back().type != Tok::LBrace) {
            out.push_back(make(Tok::Newline, "\\n"));
          }
          t.type = Tok::RBrace;
          break;
        }
        case '=':
          if (peek(1) == '=') {
            t.type = Tok::Eq;
            t.text = "==";
            advance();
          } else {
            t.type = Tok::Assign;
          }
          break;
        case '!':
          if (peek(1) == '=') {
            t.type = Tok::Ne;
            t.text = "!=";
            advance();
          } else {
            throw ParseError(line_, col_, "unexpected '!'");
          }
          break;
        case '<':
          if (peek(1) == '=') {
            t.type = Tok::Le;
            t.text = "<=";
            advance();
          } else {
            t.type = Tok::Lt;
          }
          break;
        case '>':
          if (peek(1) == '=') {
            t.type = Tok::Ge;
            t.text = ">=";
            advance();
          } else {
            t.type = Tok::Gt;
          }
          break;
        default:
          throw ParseError(line_, col_, std::string("unexpected character '") + c + "'");
      }
      advance();
      out.push_back(t);
    }
    if (!out.empty() && out.back().type != Tok::Newline) out.push_back(make(Tok::Newline, "\\n"));
    out.push_back(make(Tok::End, "<end>"));
    return out;
  }

 private:
  char peek(std::size_t off = 0) const {
    return pos_ + off < src_.size() ? src_[pos_ + off] : '\0';
  }

  void advance() {
    if (pos_ < src_.size()) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  void skip_ws_and_comments() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (c == ' ' || c == '\t' || c == '\r') {
        advance();
      } else {
        break;
      }
    }
  }

  Token make(Tok type, std::string text) const {
    Token t;
    t.type = type;
    t.text = std::move(text);
    t.line = line_;
    t.col = col_;
    return t;
  }

  Token number() {
    Token t = make(Tok::Int, "");
    std::size_t start = pos_;
    bool is_real = false;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
      is_real = true;
      advance();
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    }
    if (peek() == 'e' || peek() == 'E') {
      is_real = true;
      advance();
      if (peek() == '+' || peek() == '-') advance();
      if (!std::isdigit(static_cast<unsigned char>(peek()))) {
        throw ParseError(t.line, t.col, "malformed exponent");
      }
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    }
    t.text = src_.substr(start, pos_ - start);
    if (is_real) {
      t.type = Tok::Real;
      t.real_val = std::strtod(t.text.c_str(), nullptr);
    } else {
      auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.int_val);
      if (res.ec != std::errc{}) {
        // Integer literal too large for i64: fall back to a real.
        t.type = Tok::Real;
        t.real_val = std::strtod(t.text.c_str(), nullptr);
      }
    }
    return t;
  }

  Token ident() {
    Token t = make(Tok::Ident, "");
    std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                  src_[pos_] == '_')) {
      advance();
    }
    t.text = src_.substr(start, pos_ - start);
    if (kKeywords.count(t.text)) t.type = Tok::Keyword;
    return t;
  }

  Token string_lit() {
    Token t = make(Tok::String, "");
    advance();  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') {
        throw ParseError(t.line, t.col, "unterminated string literal");
      }
      char c = src_[pos_];
      if (c == '"') {
        advance();
        break;
      }
      if (c == '\\') {
        advance();
        char esc = peek();
        switch (esc) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: throw ParseError(line_, col_, "unknown escape sequence");
        }
        advance();
      } else {
        out += c;
        advance();
      }
    }
    t.text = std::move(out);
    return t;
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Program run(const std::string& source) {
    Program prog;
    prog.source_text = source;
    skip_newlines();
    while (!at(Tok::End)) {
      if (at_keyword("def")) {
        prog.helper_defs.push_back(parse_def());
      } else {
        prog.statements.push_back(parse_stmt(/*in_function=*/false));
      }
      expect_terminator();
      skip_newlines();
    }
    if (stmt_count_ > kMaxStatements) {
      throw ParseError(1, 1, "program exceeds the " + std::to_string(kMaxStatements) +
                                 "-statement limit");
    }
    check_helper_graph(prog);
    return prog;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  bool at(Tok t) const { return cur().type == t; }
  bool at_keyword(const char* k) const { return at(Tok::Keyword) && cur().text == k; }

  Token take() { return toks_[pos_++]; }

  Token expect(Tok t, const char* what) {
    if (!at(t)) throw ParseError(cur().line, cur().col, std::string("expected ") + what);
    return take();
  }

  void expect_terminator() {
    if (at(Tok::End)) return;
    if (at(Tok::Newline)) {
      take();
      return;
    }
    throw ParseError(cur().line, cur().col, "expected end of statement");
  }

  void skip_newlines() {
    while (at(Tok::Newline)) take();
  }

  void bump_stmt() {
    if (++stmt_count_ > kMaxStatements) {
      throw ParseError(cur().line, cur().col,
                       "program exceeds the " + std::to_string(kMaxStatements) +
                           "-statement limit");
    }
  }

  HelperDef parse_def() {
    Token kw = take();  // def
    if (in_def_) throw ParseError(kw.line, kw.col, "nested function definitions are not allowed");
    in_def_ = true;
    HelperDef def;
    def.line = kw.line;
    def.col = kw.col;
    Token name = expect(Tok::Ident, "function name");
    def.name = name.text;
    expect(Tok::LParen, "'('");
    if (!at(Tok::RParen)) {
      while (true) {
        Token p = expect(Tok::Ident, "parameter name");
        for (const auto& existing : def.params) {
          if (existing == p.text) {
            throw ParseError(p.line, p.col, "duplicate parameter '" + p.text + "'");
          }
        }
        def.params.push_back(p.text);
        if (at(Tok::Comma)) {
          take();
          continue;
        }
        break;
      }
    }
    expect(Tok::RParen, "')'");
    def.body = parse_block();
    in_def_ = false;
    return def;
  }

  std::vector<StmtPtr> parse_block() {
    expect(Tok::LBrace, "'{'");
    std::vector<StmtPtr> body;
    skip_newlines();
    while (!at(Tok::RBrace)) {
      if (at(Tok::End)) throw ParseError(cur().line, cur().col, "unterminated block");
      if (at_keyword("def")) {
        throw ParseError(cur().line, cur().col, "nested function definitions are not allowed");
      }
      body.push_back(parse_stmt(/*in_function=*/true));
      if (!at(Tok::RBrace)) expect_terminator();
      skip_newlines();
    }
    take();  // }
    return body;
  }

  StmtPtr parse_stmt(bool in_function) {
    bump_stmt();
    auto stmt = std::make_unique<Stmt>();
    stmt->line = cur().line;
    stmt->col = cur().col;
    if (at_keyword("let")) {
      take();
      stmt->kind = Stmt::Kind::Let;
      stmt->name = expect(Tok::Ident, "binding name").text;
      expect(Tok::Assign, "'='");
      stmt->expr = parse_expr();
      return stmt;
    }
    if (at_keyword("return")) {
      take();
      stmt->kind = Stmt::Kind::Return;
      stmt->expr = parse_expr();
      return stmt;
    }
    if (at_keyword("if")) return parse_if(in_function);
    if (at_keyword("for")) {
      take();
      stmt->kind = Stmt::Kind::For;
      stmt->name = expect(Tok::Ident, "loop variable").text;
      if (!at_keyword("in")) throw ParseError(cur().line, cur().col, "expected 'in'");
      take();
      stmt->expr = parse_expr();
      stmt->body = parse_block();
      return stmt;
    }
    if (at(Tok::Keyword) && cur().text != "true" && cur().text != "false" &&
        cur().text != "null" && cur().text != "not") {
      throw ParseError(cur().line, cur().col, "unexpected keyword '" + cur().text + "'");
    }
    stmt->kind = Stmt::Kind::ExprStmt;
    stmt->expr = parse_expr();
    return stmt;
  }

  StmtPtr parse_if(bool in_function) {
    auto stmt = std::make_unique<Stmt>();
    stmt->line = cur().line;
    stmt->col = cur().col;
    take();  // if
    stmt->kind = Stmt::Kind::If;
    stmt->expr = parse_expr();
    stmt->body = parse_block();
    if (at_keyword("else")) {
      take();
      if (at_keyword("if")) {
        bump_stmt();
        stmt->orelse.push_back(parse_if(in_function));
      } else {
        stmt->orelse = parse_block();
      }
    }
    return stmt;
  }

  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr make_binary(BinOp op, ExprPtr lhs, ExprPtr rhs, int line, int col) {
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::Binary;
    e->op = op;
    e->line = line;
    e->col = col;
    e->args.push_back(std::move(lhs));
    e->args.push_back(std::move(rhs));
    return e;
  }

  ExprPtr parse_or() {
    ExprPtr lhs = parse_and();
    while (at_keyword("or")) {
      Token t = take();
      lhs = make_binary(BinOp::Or, std::move(lhs), parse_and(), t.line, t.col);
    }
    return lhs;
  }

  ExprPtr parse_and() {
    ExprPtr lhs = parse_not();
    while (at_keyword("and")) {
      Token t = take();
      lhs = make_binary(BinOp::And, std::move(lhs), parse_not(), t.line, t.col);
    }
    return lhs;
  }

  ExprPtr parse_not() {
    if (at_keyword("not")) {
      Token t = take();
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Unary;
      e->is_not = true;
      e->line = t.line;
      e->col = t.col;
      e->args.push_back(parse_not());
      return e;
    }
    return parse_comparison();
  }

  ExprPtr parse_comparison() {
    ExprPtr lhs = parse_additive();
    BinOp op;
    switch (cur().type) {
      case Tok::Eq: op = BinOp::Eq; break;
      case Tok::Ne: op = BinOp::Ne; break;
      case Tok::Lt: op = BinOp::Lt; break;
      case Tok::Le: op = BinOp::Le; break;
      case Tok::Gt: op = BinOp::Gt; break;
      case Tok::Ge: op = BinOp::Ge; break;
      default: return lhs;
    }
    Token t = take();
    return make_binary(op, std::move(lhs), parse_additive(), t.line, t.col);
  }

  ExprPtr parse_additive() {
    ExprPtr lhs = parse_term();
    while (at(Tok::Plus) || at(Tok::Minus)) {
      Token t = take();
      lhs = make_binary(t.type == Tok::Plus ? BinOp::Add : BinOp::Sub, std::move(lhs),
                        parse_term(), t.line, t.col);
    }
    return lhs;
  }

  ExprPtr parse_term() {
    ExprPtr lhs = parse_unary();
    while (at(Tok::Star) || at(Tok::Slash)) {
      Token t = take();
      lhs = make_binary(t.type == Tok::Star ? BinOp::Mul : BinOp::Div, std::move(lhs),
                        parse_unary(), t.line, t.col);
    }
    return lhs;
  }

  ExprPtr parse_unary() {
    if (at(Tok::Minus)) {
      Token t = take();
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Unary;
      e->is_not = false;
      e->line = t.line;
      e->col = t.col;
      e->args.push_back(parse_unary());
      return e;
    }
    return parse_postfix();
  }

  ExprPtr parse_postfix() {
    ExprPtr e = parse_primary();
    while (true) {
      if (at(Tok::LParen)) {
        Token t = take();
        if (e->kind != Expr::Kind::Var) {
          throw ParseError(t.line, t.col, "only named functions can be called");
        }
        auto call = std::make_unique<Expr>();
        call->kind = Expr::Kind::Call;
        call->name = e->name;
        call->line = e->line;
        call->col = e->col;
        if (!at(Tok::RParen)) {
          while (true) {
            call->args.push_back(parse_expr());
            if (at(Tok::Comma)) {
              take();
              continue;
            }
            break;
          }
        }
        expect(Tok::RParen, "')'");
        e = std::move(call);
      } else if (at(Tok::LBracket)) {
        Token t = take();
        auto idx = std::make_unique<Expr>();
        idx->kind = Expr::Kind::Index;
        idx->line = t.line;
        idx->col = t.col;
        idx->args.push_back(std::move(e));
        idx->args.push_back(parse_expr());
        expect(Tok::RBracket, "']'");
        e = std::move(idx);
      } else {
        return e;
      }
    }
  }

  ExprPtr parse_primary() {
    auto e = std::make_unique<Expr>();
    e->line = cur().line;
    e->col = cur().col;
    switch (cur().type) {
      case Tok::Int:
        e->kind = Expr::Kind::Literal;
        e->literal = Value::integer(take().int_val);
        return e;
      case Tok::Real:
        e->kind = Expr::Kind::Literal;
        e->literal = Value::real(take().real_val);
        return e;
      case Tok::String:
        e->kind = Expr::Kind::Literal;
        e->literal = Value::text(take().text);
        return e;
      case Tok::Keyword: {
        const std::string& k = cur().text;
        if (k == "true" || k == "false") {
          e->kind = Expr::Kind::Literal;
          e->literal = Value::boolean(k == "true");
          take();
          return e;
        }
        if (k == "null") {
          e->kind = Expr::Kind::Literal;
          e->literal = Value::null();
          take();
          return e;
        }
        throw ParseError(cur().line, cur().col, "unexpected keyword '" + k + "'");
      }
      case Tok::Ident:
        e->kind = Expr::Kind::Var;
        e->name = take().text;
        return e;
      case Tok::LParen: {
        take();
        ExprPtr inner = parse_expr();
        expect(Tok::RParen, "')'");
        return inner;
      }
      case Tok::LBracket: {
        take();
        e->kind = Expr::Kind::ListLit;
        if (!at(Tok::RBracket)) {
          while (true) {
            e->args.push_back(parse_expr());
            if (at(Tok::Comma)) {
              take();
              continue;
            }
            break;
          }
        }
        expect(Tok::RBracket, "']'");
        return e;
      }
      default:
        throw ParseError(cur().line, cur().col, "expected an expression");
    }
  }

  // Helpers may call each other but the call graph must stay acyclic.
  void check_helper_graph(const Program& prog) {
    std::map<std::string, const HelperDef*> by_name;
    for (const auto& def : prog.helper_defs) {
      if (is_builtin(def.name) || is_native_tool(def.name)) {
        throw ParseError(def.line, def.col,
                         "function name '" + def.name + "' shadows a builtin");
      }
      if (by_name.count(def.name)) {
        throw ParseError(def.line, def.col, "duplicate function '" + def.name + "'");
      }
      by_name[def.name] = &def;
    }
    std::map<std::string, int> state;  // 0 unvisited, 1 visiting, 2 done
    std::function<void(const HelperDef&)> visit = [&](const HelperDef& def) {
      state[def.name] = 1;
      std::function<void(const Expr&)> scan_expr;
      std::function<void(const std::vector<StmtPtr>&)> scan_block;
      scan_expr = [&](const Expr& e) {
        if (e.kind == Expr::Kind::Call) {
          auto it = by_name.find(e.name);
          if (it != by_name.end()) {
            int s = state[e.name];
            if (s == 1) {
              throw ParseError(e.line, e.col,
                               "recursion detected through '" + e.name + "'");
            }
            if (s == 0) visit(*it->second);
          }
        }
        for (const auto& a : e.args) scan_expr(*a);
      };
      scan_block = [&](const std::vector<StmtPtr>& stmts) {
        for (const auto& s : stmts) {
          if (s->expr) scan_expr(*s->expr);
          scan_block(s->body);
          scan_block(s->orelse);
        }
      };
      scan_block(def.body);
      state[def.name] = 2;
    };
    for (const auto& def : prog.helper_defs) {
      if (state[def.name] == 0) visit(def);
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int stmt_count_ = 0;
  bool in_def_ = false;
};

}  // namespace

const HelperDef* Program::find_helper(const std::string& name) const {
  for (const auto& def : helper_defs) {
    if (def.name == name) return &def;
  }
  return nullptr;
}

Program parse(const std::string& source) {
  Lexer lexer(source);
  Parser parser(lexer.run());
  return parser.run(source);
}

ExecutableTool parse_tool_body(const std::string& source, const std::string& expected_name) {
  Program prog = parse(source);
  if (prog.helper_defs.size() != 1 || !prog.statements.empty()) {
    throw ParseError(1, 1, "tool body must be exactly one function definition");
  }
  HelperDef& def = prog.helper_defs.front();
  if (def.name != expected_name) {
    throw ParseError(def.line, def.col, "tool body defines '" + def.name + "', expected '" +
                                            expected_name + "'");
  }
  ExecutableTool tool;
  tool.params = def.params;
  tool.body = std::make_shared<const Program>(std::move(prog));
  return tool;
}

}  // namespace toolforge::vpl
