/**
 * @file errors.hpp
 * @brief Exception types raised by the robustmv library.
 *
 * Every error derives from robustmv::Error and carries an ErrorKind so the
 * CLI can map failures onto stable exit codes.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace robustmv {

enum class ErrorKind {
    Input,
    NotPositiveDefinite,
    NoFeasiblePoint,
    SamplingExhausted,
    NoMinimum,
    ZeroDrift,
    BoxNotPD,
    NonConvergence,
    GridTooLarge,
    SaddleViolated,
    PrincipleViolated,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Input: return "InputError";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::NoFeasiblePoint: return "NoFeasiblePoint";
        case ErrorKind::SamplingExhausted: return "SamplingExhausted";
        case ErrorKind::NoMinimum: return "NoMinimum";
        case ErrorKind::ZeroDrift: return "ZeroDrift";
        case ErrorKind::BoxNotPD: return "BoxNotPD";
        case ErrorKind::NonConvergence: return "NonConvergence";
        case ErrorKind::GridTooLarge: return "GridTooLarge";
        case ErrorKind::SaddleViolated: return "SaddleViolated";
        case ErrorKind::PrincipleViolated: return "PrincipleViolated";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

/// Raised when a correlation matrix fails the factorization test; carries
/// the zero-based index of the first pivot that fell below tolerance.
class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(int pivot)
        : Error(ErrorKind::NotPositiveDefinite,
                "correlation matrix is not positive definite (pivot " +
                    std::to_string(pivot) + ")"),
          pivot_(pivot) {}

    int pivot() const noexcept { return pivot_; }

private:
    int pivot_;
};

class NoFeasiblePoint : public Error {
public:
    explicit NoFeasiblePoint(const std::string& what)
        : Error(ErrorKind::NoFeasiblePoint, what) {}
};

class SamplingExhausted : public Error {
public:
    explicit SamplingExhausted(const std::string& what)
        : Error(ErrorKind::SamplingExhausted, what) {}
};

class NoMinimum : public Error {
public:
    explicit NoMinimum(const std::string& what) : Error(ErrorKind::NoMinimum, what) {}
};

class ZeroDrift : public Error {
public:
    ZeroDrift()
        : Error(ErrorKind::ZeroDrift,
                "anchor drift is zero: the optimal strategy is to never trade") {}
};

class BoxNotPD : public Error {
public:
    explicit BoxNotPD(const std::string& what) : Error(ErrorKind::BoxNotPD, what) {}
};

class GridTooLarge : public Error {
public:
    explicit GridTooLarge(const std::string& what)
        : Error(ErrorKind::GridTooLarge, what) {}
};

}  // namespace robustmv
