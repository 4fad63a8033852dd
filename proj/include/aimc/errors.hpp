#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace aimc {

// Violated precondition / out-of-contract argument.
class ContractViolation : public std::invalid_argument {
public:
    explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// Input vector longer than the array supports in the requested mode; the
// caller has to partition the matrix first.
class PartitionRequired : public ContractViolation {
public:
    explicit PartitionRequired(const std::string& what) : ContractViolation(what) {}
};

// Bad configuration values (negative spreads, malformed config file, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable / malformed external data (dataset files, checkpoints, ...).
class IngestError : public std::runtime_error {
public:
    explicit IngestError(const std::string& what) : std::runtime_error(what) {}
};

// Calibration did not reach its tolerance. Carries the offending channels.
class CalibrationFailure : public std::runtime_error {
public:
    CalibrationFailure(const std::string& what, std::vector<int> offenders, double achieved)
        : std::runtime_error(what), offenders(std::move(offenders)), achieved(achieved) {}

    std::vector<int> offenders;
    double achieved = 0.0;
};

} // namespace aimc
