#pragma once

#include <stdexcept>
#include <string>

namespace neckflow {

// Base class for all domain errors. Each named error from the module
// contracts gets its own type so callers can catch precisely.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define NECKFLOW_ERROR(Name)                                      \
  struct Name : Error {                                           \
    explicit Name(const std::string& what = #Name) : Error(what) {} \
  }

// hypersurface-core
NECKFLOW_ERROR(NonPositiveRadius);
NECKFLOW_ERROR(InsufficientSamples);
NECKFLOW_ERROR(HeightOutOfRange);
NECKFLOW_ERROR(DegenerateMetric);
NECKFLOW_ERROR(WindowExceedsDomain);
NECKFLOW_ERROR(NonPositiveH);

// neck-detection
NECKFLOW_ERROR(MissingDerivatives);
NECKFLOW_ERROR(InsufficientHistory);
NECKFLOW_ERROR(SurgeryInWindow);

// normal-neck
NECKFLOW_ERROR(NewtonDivergence);
NECKFLOW_ERROR(FoliationCollision);
NECKFLOW_ERROR(NonConvergence);
NECKFLOW_ERROR(DegenerateLeaf);
NECKFLOW_ERROR(NonMonotoneRelabeling);
NECKFLOW_ERROR(AlignmentSingularity);

// neck-algebra
NECKFLOW_ERROR(NoOverlap);
NECKFLOW_ERROR(ResidualTooLarge);
NECKFLOW_ERROR(LiftExitsCylinder);
NECKFLOW_ERROR(AmbiguousLift);
NECKFLOW_ERROR(OrientationIncompatible);
NECKFLOW_ERROR(IncompleteData);

// flow-engine
NECKFLOW_ERROR(RadiusUnderflow);
NECKFLOW_ERROR(NeckTooShort);
NECKFLOW_ERROR(CapConvexityFailure);

// cli-reporting
NECKFLOW_ERROR(ScenarioParseError);

#undef NECKFLOW_ERROR

// Certification failed partway through a construction; carries context in the
// message. merge_necks / extend_maximal attach the partial result separately.
struct CertificationFailure : Error {
  explicit CertificationFailure(const std::string& what = "CertificationFailure")
      : Error(what) {}
};

}  // namespace neckflow
