#pragma once

#include <stdexcept>
#include <string>

namespace townsend {

/// Argument outside the domain of a model function or geometry constructor.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A numerical procedure could not deliver a result satisfying its contract.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Transport coefficient field violates the strict |dPhi/dr| > 0 hypothesis.
class DegenerateField : public SolverError {
public:
    using SolverError::SolverError;
};

/// Invalid run configuration (file or command-line override).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace townsend
