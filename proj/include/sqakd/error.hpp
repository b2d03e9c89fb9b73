/* Copyright 2026 The sqakd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SQAKD_ERROR_HPP_
#define SQAKD_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace sqakd {

// Broad failure categories. The CLI maps these onto its exit codes.
enum class ErrorKind {
  kDimension,
  kConfig,
  kData,
  kNumeric,
  kIO,
  kMissingTeacher,
  kInternal,
};

// Finer classification for data failures so that callers can tell a bad
// IDX header from a truncated payload or a labels-free loader.
enum class DataFault {
  kGeneric,
  kBadMagic,
  kTruncated,
  kCountMismatch,
  kLabelRange,
  kEmpty,
  kMissingLabels,
  kPath,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(ErrorKind::kDimension, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::kNumeric, what) {}
};

class IOError : public Error {
 public:
  explicit IOError(const std::string& what) : Error(ErrorKind::kIO, what) {}
};

class MissingTeacherError : public Error {
 public:
  explicit MissingTeacherError(const std::string& what)
      : Error(ErrorKind::kMissingTeacher, what) {}
};

class DataError : public Error {
 public:
  DataError(DataFault fault, const std::string& what)
      : Error(ErrorKind::kData, what), fault_(fault) {}

  DataFault fault() const noexcept { return fault_; }

 private:
  DataFault fault_;
};

}  // namespace sqakd

#endif  // SQAKD_ERROR_HPP_
