// Copyright 2026 The eosw Authors. All Rights Reserved.
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

namespace eosw {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
  using Error::Error;
};

class NumericError : public Error {
  using Error::Error;
};

class IndexError : public Error {
  using Error::Error;
};

class LengthError : public Error {
  using Error::Error;
};

class RangeError : public Error {
  using Error::Error;
};

class EncodingError : public Error {
  using Error::Error;
};

class ParseError : public Error {
  using Error::Error;
};

/// Raised when a dataset builder cannot satisfy the requested split sizes.
class InsufficientDataError : public Error {
  using Error::Error;
};

/// Raised when prediction and reference files cannot be joined by id.
class AlignmentError : public Error {
  using Error::Error;
};

class InputError : public Error {
  using Error::Error;
};

}  // namespace eosw
