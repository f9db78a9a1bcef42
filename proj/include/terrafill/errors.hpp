#pragma once

#include <stdexcept>
#include <string>

namespace terrafill {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define TERRAFILL_ERROR(Name)                  \
  struct Name : Error {                        \
    using Error::Error;                        \
  }

// grid
TERRAFILL_ERROR(DegenerateFlat);
TERRAFILL_ERROR(ContainsNodata);
TERRAFILL_ERROR(NoValidCrop);
TERRAFILL_ERROR(BadSide);
TERRAFILL_ERROR(FormatError);
TERRAFILL_ERROR(UnsupportedVariant);
TERRAFILL_ERROR(IoError);

// maskgen
TERRAFILL_ERROR(AllMasked);

// classical
TERRAFILL_ERROR(InsufficientKnown);
TERRAFILL_ERROR(SingularSystem);
TERRAFILL_ERROR(NoBoundary);
TERRAFILL_ERROR(InvalidConfig);

// nn / diffusion
TERRAFILL_ERROR(ShapeMismatch);
TERRAFILL_ERROR(GraphConsumed);
TERRAFILL_ERROR(BadRange);
TERRAFILL_ERROR(EmptyDataset);
TERRAFILL_ERROR(ResolutionMismatch);
TERRAFILL_ERROR(NonFinite);

// metrics
TERRAFILL_ERROR(WindowTooLarge);

// harness
TERRAFILL_ERROR(EmptyRun);

#undef TERRAFILL_ERROR

}  // namespace terrafill
