#pragma once

#include <stdexcept>
#include <string>

namespace enkmp {

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise unusable vehicle state.
class InvalidStateError : public Error
{
public:
    using Error::Error;
};

/// Bad configuration: dimension mismatch, missing field, out-of-range value.
class ConfigError : public Error
{
public:
    using Error::Error;
};

/// Ensemble with fewer than two members where a sample covariance is needed.
class DegenerateEnsembleError : public Error
{
public:
    using Error::Error;
};

/// Linear-algebra failure. Carries the reciprocal condition estimate of the
/// offending matrix when one is available.
class NumericalError : public Error
{
public:
    NumericalError(const std::string& what, double rcond)
        : Error(what), rcond_(rcond) {}

    double rcond() const noexcept { return rcond_; }

private:
    double rcond_;
};

class TrainingDivergedError : public Error
{
public:
    TrainingDivergedError(const std::string& what, int epoch)
        : Error(what), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

} // namespace enkmp
