#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace optode {

// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularMatrix : public Error {
public:
    using Error::Error;
};

class Infeasible : public Error {
public:
    using Error::Error;
};

class MaxIterations : public Error {
public:
    using Error::Error;
};

class ZeroConstraintRow : public Error {
public:
    using Error::Error;
};

// Strict complementarity fails: some constraint has lambda ~ 0 and slack ~ 0.
class DegenerateActiveSet : public Error {
public:
    explicit DegenerateActiveSet(const std::string& what, std::ptrdiff_t step = -1)
        : Error(what), step_(step) {}
    std::ptrdiff_t step() const { return step_; }

private:
    std::ptrdiff_t step_;
};

class RelativeDegreeMismatch : public Error {
public:
    using Error::Error;
};

class QpInfeasible : public Error {
public:
    QpInfeasible(const std::string& what, std::ptrdiff_t step)
        : Error(what), step_(step) {}
    std::ptrdiff_t step() const { return step_; }

private:
    std::ptrdiff_t step_;
};

class NonFiniteState : public Error {
public:
    NonFiniteState(const std::string& what, std::ptrdiff_t step)
        : Error(what), step_(step) {}
    std::ptrdiff_t step() const { return step_; }

private:
    std::ptrdiff_t step_;
};

class DivergedLoss : public Error {
public:
    DivergedLoss(const std::string& what, std::size_t epoch)
        : Error(what), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

private:
    std::size_t epoch_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace optode
