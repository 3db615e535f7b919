#pragma once

#include <stdexcept>
#include <string>

namespace nemo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define NEMO_DEFINE_ERROR(Name)                \
  class Name : public Error {                  \
   public:                                     \
    using Error::Error;                        \
  }

NEMO_DEFINE_ERROR(DegenerateRotation);
NEMO_DEFINE_ERROR(NegativeThrust);
NEMO_DEFINE_ERROR(InvalidSpec);
NEMO_DEFINE_ERROR(NonFiniteState);
NEMO_DEFINE_ERROR(AllocationSingular);
NEMO_DEFINE_ERROR(IoError);
NEMO_DEFINE_ERROR(SchemaMismatch);
NEMO_DEFINE_ERROR(HorizonTooLong);
NEMO_DEFINE_ERROR(Diverged);
NEMO_DEFINE_ERROR(NonFiniteEstimate);
NEMO_DEFINE_ERROR(MissingCheckpoint);
NEMO_DEFINE_ERROR(ConfigError);

#undef NEMO_DEFINE_ERROR

}  // namespace nemo
