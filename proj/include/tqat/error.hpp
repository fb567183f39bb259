// Copyright 2026 The tqat Authors. All Rights Reserved.
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

#pragma once

#include <stdexcept>
#include <string>

namespace tqat {

// Shapes that do not fit an operation's contract.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Token id or similar index outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A caller violated a precondition (lambda outside [0,1], double transition, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed, truncated or foreign byte stream.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed data that does not match the expected model configuration.
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf in a loss or gradient.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tqat
