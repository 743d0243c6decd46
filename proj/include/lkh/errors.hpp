#pragma once

#include <stdexcept>

namespace lkh {

// Malformed persisted data (tree JSON, epoch JSONL, report JSON).
// Distinct from std::invalid_argument so callers can map bad *files* to a
// different exit path than bad *arguments*.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lkh
