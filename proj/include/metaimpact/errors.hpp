#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace metaimpact {

enum class ErrorKind { Config, Data, Convergence, Io };

/// Base class for every error raised by the library. The kind decides the
/// CLI exit code and the C API status.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> trace)
        : Error(ErrorKind::Convergence, what), trace_(std::move(trace)) {}
    /// Objective values of the accepted iterations, oldest first.
    const std::vector<double>& residual_trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

/// Interval volume V(t_e) - V(t_s) is zero.
class DegenerateExecutionError : public DataError {
public:
    using DataError::DataError;
};

/// Metaorder volume exceeds the market volume of its own execution window.
class ParticipationOverflowError : public DataError {
public:
    using DataError::DataError;
};

/// Least-squares design is rank deficient; carries the offending columns.
class RankDeficientError : public DataError {
public:
    RankDeficientError(const std::string& what, std::vector<std::size_t> columns)
        : DataError(what), columns_(std::move(columns)) {}
    const std::vector<std::size_t>& columns() const noexcept { return columns_; }

private:
    std::vector<std::size_t> columns_;
};

} // namespace metaimpact
