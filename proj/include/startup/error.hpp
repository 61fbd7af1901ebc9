// Copyright 2026 The startup-fsl Authors.
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

#ifndef STARTUP_ERROR_HPP_
#define STARTUP_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace startup {

// Root of every exception thrown by the library. Subclasses name the
// failure category so callers can catch narrowly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define STARTUP_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

STARTUP_DEFINE_ERROR(DimensionError);
STARTUP_DEFINE_ERROR(NumericError);
STARTUP_DEFINE_ERROR(ContractError);
STARTUP_DEFINE_ERROR(ConfigError);
STARTUP_DEFINE_ERROR(DataError);
STARTUP_DEFINE_ERROR(ProtocolError);
STARTUP_DEFINE_ERROR(SelectionError);
STARTUP_DEFINE_ERROR(StalenessError);
STARTUP_DEFINE_ERROR(ReportError);
STARTUP_DEFINE_ERROR(IoError);
STARTUP_DEFINE_ERROR(FormatError);

#undef STARTUP_DEFINE_ERROR

// Parse failure in a text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace startup

#endif  // STARTUP_ERROR_HPP_
