#include "toolforge/value.hpp"

#include <cmath>

#include "toolforge/errors.hpp"
#include "toolforge/util.hpp"

namespace toolforge {

namespace {

[[noreturn]] void kind_error(const char* wanted, const std::string& got) {
  throw Error(std::string("value: expected ") + wanted + ", got " + got);
}

}  // namespace

Value Value::boolean(bool b) {
  Value v;
  v.data_ = b;
  return v;
}

Value Value::integer(std::int64_t i) {
  Value v;
  v.data_ = i;
  return v;
}

Value Value::real(double d) {
  if (!std::isfinite(d)) throw Error("value: non-finite number");
  Value v;
  v.data_ = d;
  return v;
}

Value Value::text(std::string s) {
  Value v;
  v.data_ = std::move(s);
  return v;
}

Value Value::box(BoxVal b) {
  if (!std::isfinite(b.x_min) || !std::isfinite(b.y_min) || !std::isfinite(b.x_max) ||
      !std::isfinite(b.y_max)) {
    throw Error("value: non-finite box coordinate");
  }
  if (b.x_min > b.x_max || b.y_min > b.y_max) throw Error("value: inverted box");
  Value v;
  v.data_ = b;
  return v;
}

Value Value::point(PointVal p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("value: non-finite point");
  Value v;
  v.data_ = p;
  return v;
}

Value Value::list(ValueList items) {
  Value v;
  v.data_ = std::make_shared<const ValueList>(std::move(items));
  return v;
}

Value::Kind Value::kind() const {
  switch (data_.index()) {
    case 0: return Kind::Null;
    case 1: return Kind::Bool;
    case 2: return Kind::Int;
    case 3: return Kind::Real;
    case 4: return Kind::Text;
    case 5: return Kind::Box;
    case 6: return Kind::Point;
    default: return Kind::List;
  }
}

std::string Value::kind_name() const {
  switch (kind()) {
    case Kind::Null: return "null";
    case Kind::Bool: return "bool";
    case Kind::Int: return "int";
    case Kind::Real: return "real";
    case Kind::Text: return "text";
    case Kind::Box: return "box";
    case Kind::Point: return "point";
    case Kind::List: return "list";
  }
  return "?";
}

bool Value::as_bool() const {
  if (auto* p = std::get_if<bool>(&data_)) return *p;
  kind_error("bool", kind_name());
}

std::int64_t Value::as_int() const {
  if (auto* p = std::get_if<std::int64_t>(&data_)) return *p;
  kind_error("int", kind_name());
}

double Value::as_real() const {
  if (auto* p = std::get_if<double>(&data_)) return *p;
  kind_error("real", kind_name());
}

double Value::number() const {
  if (auto* p = std::get_if<std::int64_t>(&data_)) return static_cast<double>(*p);
  if (auto* p = std::get_if<double>(&data_)) return *p;
  kind_error("number", kind_name());
}

const std::string& Value::as_text() const {
  if (auto* p = std::get_if<std::string>(&data_)) return *p;
  kind_error("text", kind_name());
}

const BoxVal& Value::as_box() const {
  if (auto* p = std::get_if<BoxVal>(&data_)) return *p;
  kind_error("box", kind_name());
}

const PointVal& Value::as_point() const {
  if (auto* p = std::get_if<PointVal>(&data_)) return *p;
  kind_error("point", kind_name());
}

const ValueList& Value::as_list() const {
  if (auto* p = std::get_if<std::shared_ptr<const ValueList>>(&data_)) return **p;
  kind_error("list", kind_name());
}

nlohmann::json Value::to_json() const {
  nlohmann::json j;
  switch (kind()) {
    case Kind::Null: j["t"] = "null"; break;
    case Kind::Bool:
      j["t"] = "bool";
      j["v"] = as_bool();
      break;
    case Kind::Int:
      j["t"] = "int";
      j["v"] = as_int();
      break;
    case Kind::Real:
      j["t"] = "real";
      j["v"] = as_real();
      break;
    case Kind::Text:
      j["t"] = "text";
      j["v"] = as_text();
      break;
    case Kind::Box: {
      const BoxVal& b = as_box();
      j["t"] = "box";
      j["v"] = nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max});
      break;
    }
    case Kind::Point: {
      const PointVal& p = as_point();
      j["t"] = "point";
      j["v"] = nlohmann::json::array({p.x, p.y});
      break;
    }
    case Kind::List: {
      j["t"] = "list";
      auto arr = nlohmann::json::array();
      for (const Value& v : as_list()) arr.push_back(v.to_json());
      j["v"] = std::move(arr);
      break;
    }
  }
  return j;
}

Value Value::from_json(const nlohmann::json& j, const std::string& key_path) {
  if (!j.is_object() || !j.contains("t") || !j["t"].is_string()) {
    throw CorruptionError("value must be an object with a 't' tag", key_path);
  }
  const std::string tag = j["t"].get<std::string>();
  auto need = [&](const char* type_check) -> const nlohmann::json& {
    if (!j.contains("v")) throw CorruptionError(std::string("missing 'v' for ") + type_check, key_path);
    return j["v"];
  };
  try {
    if (tag == "null") return Value::null();
    if (tag == "bool") return Value::boolean(need("bool").get<bool>());
    if (tag == "int") return Value::integer(need("int").get<std::int64_t>());
    if (tag == "real") return Value::real(need("real").get<double>());
    if (tag == "text") return Value::text(need("text").get<std::string>());
    if (tag == "box") {
      const auto& a = need("box");
      if (!a.is_array() || a.size() != 4) throw CorruptionError("box needs 4 numbers", key_path);
      return Value::box(BoxVal{a[0].get<double>(), a[1].get<double>(), a[2].get<double>(),
                               a[3].get<double>()});
    }
    if (tag == "point") {
      const auto& a = need("point");
      if (!a.is_array() || a.size() != 2) throw CorruptionError("point needs 2 numbers", key_path);
      return Value::point(PointVal{a[0].get<double>(), a[1].get<double>()});
    }
    if (tag == "list") {
      const auto& a = need("list");
      if (!a.is_array()) throw CorruptionError("list 'v' must be an array", key_path);
      ValueList items;
      items.reserve(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        items.push_back(Value::from_json(a[i], key_path + "[" + std::to_string(i) + "]"));
      }
      return Value::list(std::move(items));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), key_path);
  } catch (const Error& e) {
    throw CorruptionError(e.what(), key_path);
  }
  throw CorruptionError("unknown value tag '" + tag + "'", key_path);
}

std::string Value::render() const {
  switch (kind()) {
    case Kind::Null: return "null";
    case Kind::Bool: return as_bool() ? "true" : "false";
    case Kind::Int: return std::to_string(as_int());
    case Kind::Real: return format_real(as_real());
    case Kind::Text: return as_text();
    case Kind::Box: {
      const BoxVal& b = as_box();
      return "box(" + format_real(b.x_min) + ", " + format_real(b.y_min) + ", " +
             format_real(b.x_max) + ", " + format_real(b.y_max) + ")";
    }
    case Kind::Point: {
      const PointVal& p = as_point();
      return "point(" + format_real(p.x) + ", " + format_real(p.y) + ")";
    }
    case Kind::List: {
      std::string out = "[";
      const ValueList& items = as_list();
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i].render();
      }
      return out + "]";
    }
  }
  return "?";
}

bool value_equal_exact(const Value& a, const Value& b) {
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Value::Kind::Null: return true;
    case Value::Kind::Bool: return a.as_bool() == b.as_bool();
    case Value::Kind::Int: return a.as_int() == b.as_int();
    case Value::Kind::Real: return a.as_real() == b.as_real();
    case Value::Kind::Text: return a.as_text() == b.as_text();
    case Value::Kind::Box: {
      const BoxVal &x = a.as_box(), &y = b.as_box();
      return x.x_min == y.x_min && x.y_min == y.y_min && x.x_max == y.x_max &&
             x.y_max == y.y_max;
    }
    case Value::Kind::Point: {
      const PointVal &x = a.as_point(), &y = b.as_point();
      return x.x == y.x && x.y == y.y;
    }
    case Value::Kind::List: {
      const ValueList &x = a.as_list(), &y = b.as_list();
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!value_equal_exact(x[i], y[i])) return false;
      }
      return true;
    }
  }
  return false;
}

bool value_equivalent(const Value& a, const Value& b, double tol) {
  if (a.is_number() && b.is_number()) return std::fabs(a.number() - b.number()) <= tol;
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Value::Kind::Null: return true;
    case Value::Kind::Bool: return a.as_bool() == b.as_bool();
    case Value::Kind::Text: return a.as_text() == b.as_text();
    case Value::Kind::Box: {
      const BoxVal &x = a.as_box(), &y = b.as_box();
      return std::fabs(x.x_min - y.x_min) <= tol && std::fabs(x.y_min - y.y_min) <= tol &&
             std::fabs(x.x_max - y.x_max) <= tol && std::fabs(x.y_max - y.y_max) <= tol;
    }
    case Value::Kind::Point: {
      const PointVal &x = a.as_point(), &y = b.as_point();
      return std::fabs(x.x - y.x) <= tol && std::fabs(x.y - y.y) <= tol;
    }
    case Value::Kind::List: {
      const ValueList &x = a.as_list(), &y = b.as_list();
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!value_equivalent(x[i], y[i], tol)) return false;
      }
      return true;
    }
    default: return false;
  }
}

bool language_equals(const Value& a, const Value& b) {
  if (a.is_number() && b.is_number()) return a.number() == b.number();
  return value_equal_exact(a, b);
}

}  // namespace toolforge
