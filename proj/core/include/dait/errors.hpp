// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Exception taxonomy shared across the library. The CLI maps ConfigError to
// exit code 2 and every other Error to exit code 1.

#pragma once

#include <stdexcept>
#include <string>

namespace dait {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed configuration: unknown key, bad type, unresolvable reference.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// A caller violated an operation precondition (shape mismatch, bad range).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

// Numerically degenerate input (zero-norm row, zero-variance matrix).
class DegenerateInputError : public Error {
public:
    explicit DegenerateInputError(const std::string& msg) : Error("degenerate input: " + msg) {}
};

// Filesystem / serialization failure; message carries the offending path.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

// Training diverged (non-finite loss) or a freeze contract was broken mid-run.
class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& msg) : Error("training error: " + msg) {}
};

// A requested external encoder backend is not available in this build.
class BackendError : public Error {
public:
    explicit BackendError(const std::string& msg) : Error("backend error: " + msg) {}
};

}  // namespace dait
