#pragma once

#include <stdexcept>
#include <string>

namespace ctxattack {

// Raised when a planner cannot produce any label choice for an object,
// e.g. the candidate pool for a helper is empty.
class NoFeasibleTargetError : public std::runtime_error {
 public:
  NoFeasibleTargetError(int object_index, const std::string& what)
      : std::runtime_error(what), object_index_(object_index) {}

  int object_index() const { return object_index_; }

 private:
  int object_index_;
};

}  // namespace ctxattack
