// Copyright 2026 The Mimic Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MIMIC_ERROR_HPP_
#define MIMIC_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace mimic {

// Root of every exception thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: config values, dataset specs, CLI flags.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. Carries the offending row when one applies.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long row = -1)
      : Error(row >= 0 ? what + " (row " + std::to_string(row) + ")" : what), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

// Tensor operand shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// The simulator reached a non-finite state.
class SimulationFault : public Error {
 public:
  using Error::Error;
};

// A required file (checkpoint, dataset) is absent.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

}  // namespace mimic

#endif  // MIMIC_ERROR_HPP_
