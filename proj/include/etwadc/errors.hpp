#pragma once

#include <stdexcept>

namespace etwadc {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// linear-systems layer
class DimensionMismatch : public Error {
  public:
    using Error::Error;
};
class SingularLyapunov : public Error {
  public:
    using Error::Error;
};
class NonSymmetricQ : public Error {
  public:
    using Error::Error;
};
class NegativeDelay : public Error {
  public:
    using Error::Error;
};
class ImproperTransferFunction : public Error {
  public:
    using Error::Error;
};
class AlgebraicLoop : public Error {
  public:
    using Error::Error;
};
class TargetTooSmall : public Error {
  public:
    using Error::Error;
};
class NonFiniteState : public Error {
  public:
    using Error::Error;
};
class FrequencyOnEigenvalue : public Error {
  public:
    using Error::Error;
};
class DefectiveMode : public Error {
  public:
    using Error::Error;
};

// grid layer
class ParseError : public Error {
  public:
    using Error::Error;
};
class ValidationError : public Error {
  public:
    using Error::Error;
};
class NonConvergence : public Error {
  public:
    using Error::Error;
};
class SingularJacobian : public Error {
  public:
    using Error::Error;
};
class SingularEliminationBlock : public Error {
  public:
    using Error::Error;
};
class EquilibriumResidual : public Error {
  public:
    using Error::Error;
};

// event layer
class UnstableClosedLoop : public Error {
  public:
    using Error::Error;
};
class SigmaOutOfRange : public Error {
  public:
    using Error::Error;
};
class WrongMode : public Error {
  public:
    using Error::Error;
};

// scenario / CLI layer
class ConfigError : public Error {
  public:
    using Error::Error;
};

}  // namespace etwadc
