// Copyright (c) the cotta project authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COTTA_CORE_ERROR_HPP_
#define COTTA_CORE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cotta {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes (messages always carry both shapes).
struct ShapeError : Error {
  using Error::Error;
};

// An API precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Bad user-supplied configuration. The CLI maps this to exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace cotta

#endif  // COTTA_CORE_ERROR_HPP_
