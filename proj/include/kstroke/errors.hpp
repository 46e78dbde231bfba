/*
 * Copyright 2026 The kstroke Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Exception types shared by every kstroke module.

#ifndef KSTROKE_ERRORS_HPP_
#define KSTROKE_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kstroke {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed canonical log line. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class AdapterError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class ForgeError : public Error {
 public:
  using Error::Error;
};

class PersistenceError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public PersistenceError {
 public:
  using PersistenceError::PersistenceError;
};

class KindMismatchError : public PersistenceError {
 public:
  using PersistenceError::PersistenceError;
};

class VersionError : public PersistenceError {
 public:
  using PersistenceError::PersistenceError;
};

class FormatError : public PersistenceError {
 public:
  using PersistenceError::PersistenceError;
};

}  // namespace kstroke

#endif  // KSTROKE_ERRORS_HPP_
