// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ddpc {

/// A caller broke an operation's precondition (shape, scale, channel count).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input could not be parsed (PLY, CSV, config, weight file).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A bitstream or substream is truncated or inconsistent.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation received an empty input it cannot work with.
class EmptyInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A predicted frame arrived without the decoded frame it references.
class MissingReferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}

}  // namespace ddpc
