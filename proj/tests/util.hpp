#pragma once

#include <string>
#include <utility>

#include "qdd/common.hpp"

namespace testutil {

// Runs f and reports the structured error code it throws, or "" if it
// returns normally. Lets assertions name the expected code directly.
template <class F>
inline std::string error_code_of(F&& f) {
  try {
    std::forward<F>(f)();
  } catch (const qdd::Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace testutil
