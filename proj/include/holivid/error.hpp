#pragma once

#include <stdexcept>
#include <string>

namespace holivid {

// Raised for malformed inputs: bad files, bad configs, inconsistent
// taxonomy/manifest pairs.  The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when an optimisation run produces a non-finite loss.  Carries
// enough context to identify the offending step.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(const std::string& msg, int epoch, int batch, double max_abs_logit)
      : std::runtime_error(msg), epoch(epoch), batch(batch), max_abs_logit(max_abs_logit) {}
  int epoch;
  int batch;
  double max_abs_logit;
};

}  // namespace holivid
