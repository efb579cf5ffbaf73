// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ensner {

// Bad input data: malformed records, inconsistent shapes, corrupt files.
// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged or hit an unrecoverable numeric condition.
class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ensner
