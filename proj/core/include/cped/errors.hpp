#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cped {

// Base class for all errors raised by the library. Subclasses exist so that
// callers (and the CLI) can map failures onto distinct exit paths.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IntegrationDiverged : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    using Error::Error;
};

class SamplingExhausted : public Error {
public:
    SamplingExhausted(std::string region, const std::string& what)
        : Error(what), region_(std::move(region)) {}
    const std::string& region() const { return region_; }

private:
    std::string region_;
};

class InvalidSplit : public Error {
public:
    using Error::Error;
};

class InsufficientCalibration : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// The single CBF constraint cannot be met: its control coefficient vanishes
// while the constraint is violated.
class QpInfeasible : public Error {
public:
    QpInfeasible(std::vector<double> state, double slack, const std::string& what)
        : Error(what), state_(std::move(state)), slack_(slack) {}
    const std::vector<double>& state() const { return state_; }
    double slack() const { return slack_; }

private:
    std::vector<double> state_;
    double slack_;
};

class InvalidComparison : public Error {
public:
    using Error::Error;
};

}  // namespace cped
