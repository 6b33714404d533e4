// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace proctrack {

// Exit codes used by the CLI: 0 ok, 2 validation, 3 numeric, 4 I/O.
enum class ExitCode : int { ok = 0, validation = 2, numeric = 3, io = 4 };

// Base error with a stable machine-readable code alongside the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }
  virtual ExitCode exit_code() const { return ExitCode::validation; }

 private:
  std::string code_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::validation; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::numeric; }
};

class IoError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::io; }
};

}  // namespace proctrack
