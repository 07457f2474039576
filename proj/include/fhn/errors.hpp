#pragma once

#include <stdexcept>
#include <string>

namespace fhn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NonIntegrableKernel : public Error {
 public:
  using Error::Error;
};

class NonFiniteInput : public Error {
 public:
  using Error::Error;
};

class TruncationViolation : public Error {
 public:
  TruncationViolation(const std::string& what, double boundary_mass)
      : Error(what), boundary_mass(boundary_mass) {}
  double boundary_mass;
};

class CflViolation : public Error {
 public:
  CflViolation(const std::string& what, double ratio) : Error(what), ratio(ratio) {}
  double ratio;
};

class MassDriftExceeded : public Error {
 public:
  MassDriftExceeded(const std::string& what, double drift) : Error(what), drift(drift) {}
  double drift;
};

class BlowupDetected : public Error {
 public:
  using Error::Error;
};

class MissingSnapshots : public Error {
 public:
  using Error::Error;
};

class StabilityViolation : public Error {
 public:
  using Error::Error;
};

class EmptyCell : public Error {
 public:
  using Error::Error;
};

class NonPositiveAlpha0 : public Error {
 public:
  using Error::Error;
};

class BoundaryOnly : public Error {
 public:
  using Error::Error;
};

class EmptyMask : public Error {
 public:
  using Error::Error;
};

class InitialOrderingViolated : public Error {
 public:
  using Error::Error;
};

class DegeneratePairs : public Error {
 public:
  using Error::Error;
};

}  // namespace fhn
