#pragma once

#include <stdexcept>
#include <string>

namespace sqc {

// Every failure the library raises derives from Error so callers can
// distinguish model failures from generic std exceptions.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotPositiveDefinite : Error {
  using Error::Error;
};

struct Singular : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

// A potential was evaluated outside its admissible domain (e.g. a barrier
// expansion point on or beyond the boundary).
struct DomainViolation : Error {
  using Error::Error;
};

struct NonFinite : Error {
  using Error::Error;
};

struct QuadratureDomain : Error {
  using Error::Error;
};

struct MassLoss : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

}  // namespace sqc
