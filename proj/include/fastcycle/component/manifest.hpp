#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fastcycle/component/param_store.hpp"
#include "fastcycle/error.hpp"

namespace fastcycle {

struct ComponentDescriptor {
  std::string name;
  bool enabled = true;
  std::optional<double> serve_period_ms;
  ParamStore params;

  std::optional<std::chrono::nanoseconds> serve_period() const {
    if (!serve_period_ms) return std::nullopt;
    return std::chrono::nanoseconds(static_cast<std::int64_t>(std::llround(*serve_period_ms * 1e6)));
  }

  friend bool operator==(const ComponentDescriptor&, const ComponentDescriptor&) = default;
};

struct Manifest {
  std::vector<ComponentDescriptor> active;    // enabled, file order
  std::vector<ComponentDescriptor> disabled;  // reported, never registered
  std::vector<std::string> names;             // every component, file order
};

struct ManifestOptions {
  /// Ignore unknown keys instead of rejecting them.
  bool lenient = false;
};

namespace detail {

// Input iterator that counts consumed bytes so the SAX handler can tell
// where in the document the parser currently is.
struct CountingIterator {
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  const char* pos = nullptr;
  std::size_t* consumed = nullptr;

  reference operator*() const { return *pos; }
  CountingIterator& operator++() {
    ++pos;
    ++*consumed;
    return *this;
  }
  CountingIterator operator++(int) {
    auto old = *this;
    ++*this;
    return old;
  }
  bool operator==(const CountingIterator& other) const { return pos == other.pos; }
};

// Builds the DOM like the stock SAX DOM parser and additionally records the
// byte offset of every object key and container start, keyed by JSON pointer.
class PositionedDomParser : public nlohmann::detail::json_sax_dom_parser<Json> {
  using Base = nlohmann::detail::json_sax_dom_parser<Json>;

  struct Frame {
    bool array = false;
    std::size_t index = 0;
    std::string key;
  };

 public:
  PositionedDomParser(Json& root, const std::size_t& consumed)
      : Base(root, false), consumed_(consumed) {}

  std::unordered_map<std::string, std::size_t> offsets;
  std::optional<std::size_t> error_byte;
  std::string error_message;

  bool null() { return scalar(Base::null()); }
  bool boolean(bool v) { return scalar(Base::boolean(v)); }
  bool number_integer(Json::number_integer_t v) { return scalar(Base::number_integer(v)); }
  bool number_unsigned(Json::number_unsigned_t v) { return scalar(Base::number_unsigned(v)); }
  bool number_float(Json::number_float_t v, const Json::string_t& s) {
    return scalar(Base::number_float(v, s));
  }
  bool string(Json::string_t& v) { return scalar(Base::string(v)); }
  bool binary(Json::binary_t& v) { return scalar(Base::binary(v)); }

  bool start_object(std::size_t n) {
    open(false);
    return Base::start_object(n);
  }
  bool end_object() {
    close();
    return Base::end_object();
  }
  bool start_array(std::size_t n) {
    open(true);
    return Base::start_array(n);
  }
  bool end_array() {
    close();
    return Base::end_array();
  }

  bool key(Json::string_t& k) {
    frames_.back().key = k;
    const std::size_t end = consumed_;
    offsets[path()] = end >= k.size() + 2 ? end - k.size() - 2 : 0;
    return Base::key(k);
  }

  template <class Exception>
  bool parse_error(std::size_t byte, const std::string&, const Exception& ex) {
    error_byte = byte;
    error_message = ex.what();
    return false;
  }

 private:
  static std::string escape(const std::string& segment) {
    std::string out;
    for (char c : segment) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  }

  std::string path() const {
    std::string p;
    for (const auto& f : frames_) p += "/" + (f.array ? std::to_string(f.index) : escape(f.key));
    return p;
  }

  void open(bool array) {
    offsets[path()] = consumed_ > 0 ? consumed_ - 1 : 0;
    frames_.push_back({array, 0, {}});
  }
  void close() {
    frames_.pop_back();
    advance();
  }
  bool scalar(bool ok) {
    advance();
    return ok;
  }
  void advance() {
    if (!frames_.empty() && frames_.back().array) ++frames_.back().index;
  }

  const std::size_t& consumed_;
  std::vector<Frame> frames_;
};

struct Located {
  std::string_view text;
  const std::unordered_map<std::string, std::size_t>& offsets;

  [[noreturn]] void fail(ErrorCode code, const std::string& pointer, const std::string& what) const {
    auto it = offsets.find(pointer);
    if (it == offsets.end()) throw ManifestError(code, 0, 0, 0, what);
    fail_at(code, it->second, what);
  }

  [[noreturn]] void fail_at(ErrorCode code, std::size_t byte, const std::string& what) const {
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ManifestError(code, byte, line, column, what);
  }
};

}  // namespace detail

/// Parses a component manifest:
///   {"components": [{"name": str, "enabled": bool, "serve_period_ms": number,
///                    "params": object}, ...]}
/// Errors carry the line/column of the offending key or value.
inline Manifest load_manifest(std::string_view text, ManifestOptions options = {}) {
  Json root;
  std::size_t consumed = 0;
  detail::PositionedDomParser handler(root, consumed);
  detail::CountingIterator first{text.data(), &consumed};
  detail::CountingIterator last{text.data() + text.size(), &consumed};
  const detail::Located where{text, handler.offsets};

  if (!Json::sax_parse(first, last, &handler) || handler.error_byte) {
    const std::size_t byte = handler.error_byte.value_or(consumed);
    where.fail_at(ErrorCode::parse_error, byte > 0 ? byte - 1 : 0,
                  handler.error_message.empty() ? "malformed manifest" : handler.error_message);
  }

  if (!root.is_object()) where.fail(ErrorCode::invalid_field, "", "manifest must be an object");
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (it.key() != "components" && !options.lenient) {
      where.fail(ErrorCode::unknown_key, "/" + it.key(), "unknown key '" + it.key() + "'");
    }
  }
  if (!root.contains("components")) {
    where.fail(ErrorCode::missing_field, "", "manifest has no 'components' list");
  }
  const Json& list = root["components"];
  if (!list.is_array()) {
    where.fail(ErrorCode::invalid_field, "/components", "'components' must be a list");
  }

  static const std::set<std::string> known{"name", "enabled", "serve_period_ms", "params"};
  Manifest manifest;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Json& entry = list[i];
    const std::string at = "/components/" + std::to_string(i);
    if (!entry.is_object()) where.fail(ErrorCode::invalid_field, at, "component must be an object");

    for (auto it = entry.begin(); it != entry.end(); ++it) {
      if (!known.count(it.key()) && !options.lenient) {
        where.fail(ErrorCode::unknown_key, at + "/" + it.key(),
                   "unknown key '" + it.key() + "' in component " + std::to_string(i));
      }
    }

    ComponentDescriptor desc;
    if (!entry.contains("name")) {
      where.fail(ErrorCode::missing_field, at, "component " + std::to_string(i) + " has no name");
    }
    if (!entry["name"].is_string() || entry["name"].get<std::string>().empty()) {
      where.fail(ErrorCode::invalid_field, at + "/name", "name must be a nonempty string");
    }
    desc.name = entry["name"].get<std::string>();

    if (entry.contains("enabled")) {
      if (!entry["enabled"].is_boolean()) {
        where.fail(ErrorCode::invalid_field, at + "/enabled", "'enabled' must be a boolean");
      }
      desc.enabled = entry["enabled"].get<bool>();
    }
    if (entry.contains("serve_period_ms")) {
      const Json& p = entry["serve_period_ms"];
      if (!p.is_number() || !(p.get<double>() > 0.0)) {
        where.fail(ErrorCode::invalid_field, at + "/serve_period_ms",
                   "'serve_period_ms' must be a positive number");
      }
      desc.serve_period_ms = p.get<double>();
    }
    if (entry.contains("params")) {
      if (!entry["params"].is_object()) {
        where.fail(ErrorCode::invalid_field, at + "/params", "'params' must be an object");
      }
      desc.params = ParamStore(entry["params"]);
    }

    if (!seen.insert(desc.name).second) {
      where.fail(ErrorCode::duplicate_component_name, at + "/name",
                 "component name '" + desc.name + "' appears twice");
    }
    manifest.names.push_back(desc.name);
    (desc.enabled ? manifest.active : manifest.disabled).push_back(std::move(desc));
  }
  return manifest;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Manifest load_manifest_file(const std::filesystem::path& path, ManifestOptions options = {}) {
  return load_manifest(read_text_file(path), options);
}

/// Serializes descriptors back into manifest form, preserving order and
/// parameter values.
inline std::string emit_manifest(std::span<const ComponentDescriptor> components, int indent = 2) {
  Json list = Json::array();
  for (const auto& c : components) {
    Json entry = Json::object();
    entry["name"] = c.name;
    if (!c.enabled) entry["enabled"] = false;
    if (c.serve_period_ms) {
      const double p = *c.serve_period_ms;
      if (p == std::floor(p) && p < 9.0e15) {
        entry["serve_period_ms"] = static_cast<std::int64_t>(p);
      } else {
        entry["serve_period_ms"] = p;
      }
    }
    entry["params"] = c.params.json();
    list.push_back(std::move(entry));
  }
  Json root = Json::object();
  root["components"] = std::move(list);
  return root.dump(indent);
}

namespace detail {
inline void merge_defaults(Json& target, const Json& defaults) {
  for (auto it = defaults.begin(); it != defaults.end(); ++it) {
    auto existing = target.find(it.key());
    if (existing == target.end()) {
      target[it.key()] = it.value();
    } else if (existing->is_object() && it->is_object()) {
      merge_defaults(*existing, *it);
    }
  }
}
}  // namespace detail

/// Merges a per-component configuration document (a JSON object of
/// parameters) into a descriptor. Values already present in the manifest
/// take precedence; nested objects are merged key by key.
inline void merge_component_config(ComponentDescriptor& desc, std::string_view document) {
  Json doc;
  try {
    doc = Json::parse(document);
  } catch (const Json::parse_error& e) {
    throw ManifestError(ErrorCode::parse_error, e.byte, 0, 0, e.what());
  }
  if (!doc.is_object()) {
    throw Error(ErrorCode::invalid_field, "component config for '" + desc.name + "' must be an object");
  }
  Json merged = desc.params.json();
  detail::merge_defaults(merged, doc);
  desc.params = ParamStore(std::move(merged));
}

}  // namespace fastcycle
