#pragma once

#include <stdexcept>
#include <string>

namespace lfi {

// Base of every exception thrown by the library. Catch this to handle any
// library failure; catch a subclass to react to one failure mode.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A parameter lies on or outside its prior bound.
class BoundaryError : public Error { using Error::Error; };

// Two samples that must share a length do not.
class LengthMismatch : public Error { using Error::Error; };

// A sample too small (or too tied) for the estimator.
class DegenerateSample : public Error { using Error::Error; };

// A pilot pool whose spread is zero, so no weight can be derived.
class DegeneratePool : public Error { using Error::Error; };

// Mixture fitting collapsed a component or never produced a valid fit.
class FitFailure : public Error { using Error::Error; };

// Observed information (or a weighting matrix) is not positive definite.
class IllConditioned : public Error { using Error::Error; };

// Synthetic-likelihood covariance could not be factorised.
class SingularCovariance : public Error { using Error::Error; };

// Model parameters outside the valid region of the model.
class InvalidParameter : public Error { using Error::Error; };

// A summary statistic could not be formed from a simulated dataset.
class SummaryFailure : public Error { using Error::Error; };

// Bad configuration: misaligned composite pieces, unknown ids, bad files.
class ConfigError : public Error { using Error::Error; };

// Calibration or tuning could not complete.
class TuningFailure : public Error { using Error::Error; };

}  // namespace lfi
