#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stdml {

/// Process exit codes shared by every CLI verb.
enum class ExitCode : int { ok = 0, usage = 1, validation = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what, ExitCode::usage) {}
};

/// Invalid parameters: zero dimensions, K larger than the unit count, etc.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::validation) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what, ExitCode::validation) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what, ExitCode::validation) {}
};

/// Itemized input-file problems. Each item already names its line.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> items)
      : Error(join(items), ExitCode::validation), items_(std::move(items)) {}
  const std::vector<std::string>& items() const noexcept { return items_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "validation failed:";
    for (const auto& s : items) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> items_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, ExitCode::numerical) {}
};

/// Rank-deficient design. Carries the names of the columns found dependent.
class SingularityError : public NumericalError {
 public:
  SingularityError(const std::string& what, std::vector<std::string> columns)
      : NumericalError(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

}  // namespace stdml
