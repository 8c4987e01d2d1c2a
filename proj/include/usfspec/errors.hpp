#pragma once

#include <stdexcept>
#include <string>

namespace usfspec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or argument (bad thresholds, lengths, counts).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Fewer independent equations than unknowns: the annihilating system or the
// amplitude fit cannot determine K modes.
class RankDeficientError : public Error {
 public:
  using Error::Error;
};

// Numerically ambiguous problem: threshold grid too dense for the distortion
// bound, clustered roots, or a vanishing amplitude.
class IllConditionedError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace usfspec
