#pragma once

#include <stdexcept>
#include <string>

namespace ddeld {

// Base of every error raised by the library. Callers that only care about
// "something in the pipeline failed" catch this one.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define DDELD_DEFINE_ERROR(Name)              \
  class Name : public Error {                 \
  public:                                     \
    using Error::Error;                       \
  }

DDELD_DEFINE_ERROR(DivisibilityError);
DDELD_DEFINE_ERROR(ShapeMismatchError);
DDELD_DEFINE_ERROR(SliceBoundsError);
DDELD_DEFINE_ERROR(RankError);
DDELD_DEFINE_ERROR(PredictorContractError);
DDELD_DEFINE_ERROR(ProbeDomainTooSmall);
DDELD_DEFINE_ERROR(UnsupportedBoundary);
DDELD_DEFINE_ERROR(StabilityError);
DDELD_DEFINE_ERROR(FormatError);
DDELD_DEFINE_ERROR(DomainError);
DDELD_DEFINE_ERROR(DegenerateSignal);
DDELD_DEFINE_ERROR(SingularSystem);
DDELD_DEFINE_ERROR(DegenerateTruth);
DDELD_DEFINE_ERROR(WindowTooSmall);
DDELD_DEFINE_ERROR(WindowTooLarge);
DDELD_DEFINE_ERROR(ConfigError);

#undef DDELD_DEFINE_ERROR

}  // namespace ddeld
