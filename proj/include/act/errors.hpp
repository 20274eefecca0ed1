#pragma once

#include <stdexcept>
#include <string>

namespace act {

// Bad experiment configuration (unknown key, missing key, malformed value).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg, int line_no = 0)
      : std::runtime_error(msg), line(line_no) {}
  int line;
};

// Data that violates a protocol precondition (empty class, missing file,
// label out of range, k larger than the training set).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric failure: non-finite loss, zero-variance column, and the like.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training aborted on a non-finite loss; records where it happened.
struct TrainAbort : NumericError {
  TrainAbort(const std::string& msg, int epoch_no, int batch_no)
      : NumericError(msg), epoch(epoch_no), batch(batch_no) {}
  int epoch;
  int batch;
};

// A quantity the artifact promises to uphold failed its check.
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace act
