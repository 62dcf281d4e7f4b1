#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace toolforge {

// Axis-aligned pixel rectangle, (x_min, y_min) top-left.
struct BoxVal {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

struct PointVal {
  double x = 0, y = 0;
};

class Value;
using ValueList = std::vector<Value>;

// Runtime value of the VPL interpreter and the unit stored in traces,
// examples, and ground truths. Immutable once built; lists share storage.
class Value {
 public:
  enum class Kind { Null, Bool, Int, Real, Text, Box, Point, List };

  Value() : data_(std::monostate{}) {}

  static Value null() { return Value(); }
  static Value boolean(bool b);
  static Value integer(std::int64_t i);
  static Value real(double d);  // rejects non-finite
  static Value text(std::string s);
  static Value box(BoxVal b);  // rejects inverted or non-finite boxes
  static Value point(PointVal p);
  static Value list(ValueList items);

  Kind kind() const;
  bool is_null() const { return kind() == Kind::Null; }
  bool is_number() const { return kind() == Kind::Int || kind() == Kind::Real; }

  bool as_bool() const;
  std::int64_t as_int() const;
  double as_real() const;    // Real only
  double number() const;     // Int or Real, widened
  const std::string& as_text() const;
  const BoxVal& as_box() const;
  const PointVal& as_point() const;
  const ValueList& as_list() const;

  nlohmann::json to_json() const;
  static Value from_json(const nlohmann::json& j, const std::string& key_path);

  // Canonical single-line rendering, used in prompts and audit records.
  std::string render() const;

  std::string kind_name() const;

 private:
  std::variant<std::monostate, bool, std::int64_t, double, std::string, BoxVal,
               PointVal, std::shared_ptr<const ValueList>>
      data_;
};

// Structural equality, kind-sensitive (Int 2 != Real 2.0). Serialization tests.
bool value_equal_exact(const Value& a, const Value& b);

// Deep equivalence with |a-b| <= tol on numeric leaves, Int and Real compared
// numerically. This is the divergence test used by tool validation.
bool value_equivalent(const Value& a, const Value& b, double tol);

// Semantics of the VPL `==` operator: numbers compare numerically, everything
// else structurally, mismatched categories are unequal (never an error).
bool language_equals(const Value& a, const Value& b);

}  // namespace toolforge
