#pragma once

#include <stdexcept>
#include <string>

namespace aem {

// Bad user-facing input: flags, files, sizes. Recoverable by fixing the input.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Broken internal contract (shape mismatch, wrong mode). A bug, not user error.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace aem
