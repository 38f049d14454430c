#pragma once

#include <stdexcept>
#include <string>

namespace satrestore {

// Malformed request: bad parameter combination, unsupported option.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Shape mismatch between operands. A subtype of configuration misuse.
struct DimensionError : ConfigError {
  explicit DimensionError(const std::string& what) : ConfigError(what) {}
};

// Unreadable or inconsistent input data: files, manifests, checksums.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or an unsafe numerical state that cannot be recovered.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace satrestore
