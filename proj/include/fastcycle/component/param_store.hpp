#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "fastcycle/error.hpp"

namespace fastcycle {

using Json = nlohmann::ordered_json;

/// Typed, read-only view of a component's parameters. Keys keep their file
/// order. A lookup either yields the requested type or throws TypeMismatch;
/// the only implicit conversion is integer -> floating point.
class ParamStore {
 public:
  ParamStore() : root_(Json::object()) {}

  explicit ParamStore(Json object) : root_(std::move(object)) {
    if (!root_.is_object()) throw Error(ErrorCode::type_mismatch, "parameters must be an object");
  }

  bool contains(std::string_view key) const { return root_.contains(key); }
  std::size_t size() const noexcept { return root_.size(); }
  bool empty() const noexcept { return root_.empty(); }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (auto it = root_.begin(); it != root_.end(); ++it) out.push_back(it.key());
    return out;
  }

  template <class T>
  T get(std::string_view key) const {
    auto it = root_.find(key);
    if (it == root_.end()) {
      throw Error(ErrorCode::missing_param, "parameter '" + std::string(key) + "' is not set");
    }
    return convert<T>(*it, key);
  }

  template <class T>
  T get(std::string_view key, T fallback) const {
    auto it = root_.find(key);
    if (it == root_.end()) return fallback;
    return convert<T>(*it, key);
  }

  const Json& json() const noexcept { return root_; }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.root_ == b.root_; }

 private:
  template <class T>
  static constexpr std::string_view type_name() {
    if constexpr (std::is_same_v<T, bool>) return "boolean";
    else if constexpr (std::is_integral_v<T>) return "integer";
    else if constexpr (std::is_floating_point_v<T>) return "float";
    else if constexpr (std::is_same_v<T, std::string>) return "text";
    else if constexpr (std::is_same_v<T, ParamStore>) return "object";
    else return "list";
  }

  template <class T>
  static T convert(const Json& v, std::string_view key) {
    auto mismatch = [&] {
      return Error(ErrorCode::type_mismatch, "parameter '" + std::string(key) + "' is " +
                                                 std::string(v.type_name()) + ", expected " +
                                                 std::string(type_name<T>()));
    };
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw mismatch();
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw mismatch();
      if (v.is_number_unsigned()) {
        const auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) throw mismatch();
        return static_cast<T>(u);
      }
      const auto s = v.get<std::int64_t>();
      if constexpr (std::is_unsigned_v<T>) {
        if (s < 0 || static_cast<std::uint64_t>(s) > std::numeric_limits<T>::max()) throw mismatch();
      } else {
        if (s < std::numeric_limits<T>::min() || s > std::numeric_limits<T>::max()) throw mismatch();
      }
      return static_cast<T>(s);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw mismatch();
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw mismatch();
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, ParamStore>) {
      if (!v.is_object()) throw mismatch();
      return ParamStore(v);
    } else {
      static_assert(std::is_same_v<T, std::vector<typename T::value_type>>,
                    "unsupported parameter type");
      if (!v.is_array()) throw mismatch();
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], std::string(key) + "[" +
                                                                 std::to_string(i) + "]"));
      }
      return out;
    }
  }

  Json root_;
};

template <class T>
T get_param(const ParamStore& store, std::string_view key, std::optional<T> fallback = {}) {
  return fallback ? store.get<T>(key, *fallback) : store.get<T>(key);
}

}  // namespace fastcycle
