#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace arag::detail {

/// Compact dump that tolerates invalid UTF-8 in strings (replaced with U+FFFD).
inline std::string dump(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace arag::detail
