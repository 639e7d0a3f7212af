#pragma once

#include <stdexcept>
#include <string>

namespace txadv {

/// Raised for contract violations on inputs (bad configs, malformed files,
/// out-of-range edits). Violations found by `validate_edits` are data, not
/// errors, and never raise this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace txadv
