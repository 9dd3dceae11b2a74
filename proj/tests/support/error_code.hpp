#pragma once

#include "s8uv/error.hpp"

/// Runs fn and returns the code of the s8uv::Error it raised, or
/// InvariantViolation when it returned normally.
template <class Fn>
s8uv::ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const s8uv::Error& e) {
    return e.code();
  }
  return s8uv::ErrorCode::InvariantViolation;
}
