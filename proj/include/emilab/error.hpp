// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace emilab {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user input: incompatible geometry parameters, malformed config, bad sizes.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: breakdown, failed factorization, stagnating coarsening.
class SolverError : public Error {
public:
    using Error::Error;
};

} // namespace emilab
