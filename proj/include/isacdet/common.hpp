// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Shared numeric types and the error type used across the library.

#pragma once

#include <Eigen/Dense>

#include <cmath>

#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace isacdet {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfLight = 299792458.0;

enum class ErrorKind {
    InvalidArgument,
    DuplicateTap,
    NonOrthogonalPaths,
    ZeroChannel,
    Infeasible,
    ZeroSignal,
    DegenerateDenominator,
    InsufficientTrials,
    Config,
};

inline const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DuplicateTap: return "DuplicateTap";
    case ErrorKind::NonOrthogonalPaths: return "NonOrthogonalPaths";
    case ErrorKind::ZeroChannel: return "ZeroChannel";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::ZeroSignal: return "ZeroSignal";
    case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::InsufficientTrials: return "InsufficientTrials";
    case ErrorKind::Config: return "Config";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition)
        throw Error(ErrorKind::InvalidArgument, message);
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

} // namespace isacdet
