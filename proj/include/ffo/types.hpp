#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ffo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure condition surfaced by the library maps to one
// of these types so callers (and the CLI exit-code policy) can dispatch on it.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input arrays have inconsistent shapes.
struct DimensionMismatch : Error {
  using Error::Error;
};

/// A matrix required to be SPD failed its Cholesky factorization.
struct NotPositiveDefinite : Error {
  using Error::Error;
};

/// The lower-level objective is not strongly convex at the evaluated point.
struct NotStronglyConvex : Error {
  using Error::Error;
};

/// Unrecognized preset name.
struct UnknownPreset : Error {
  using Error::Error;
};

/// The feasible region of a lower-level solve is (numerically) empty.
struct Infeasible : Error {
  using Error::Error;
};

/// A pivot fell below the relative threshold during factorization.
struct RankDeficient : Error {
  using Error::Error;
};

/// A solution was passed to a consumer demanding tighter certification.
struct UncertifiedSolution : Error {
  using Error::Error;
};

/// Active constraint gradients are rank deficient at the solution.
struct LicqViolation : Error {
  using Error::Error;
};

/// Both the multiplier and the slack of some constraint vanish (strict mode).
struct DegenerateActiveSet : Error {
  using Error::Error;
};

/// The KKT Jacobian is singular (LICQ or strict complementarity failure).
struct SingularKkt : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Logging. Controlled by the FFO_LOG environment variable: "info" or "debug"
// enable progressively chattier output on stderr; anything else is silent.
// ---------------------------------------------------------------------------

enum class LogLevel { off = 0, info = 1, debug = 2 };

LogLevel log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace ffo
