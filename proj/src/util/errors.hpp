#pragma once

#include <stdexcept>
#include <string>

namespace pd {

// Error taxonomy used across the library. Everything derives from pd::Error
// so callers can catch the whole family; the CLI maps ConfigError to exit
// code 1 and the rest to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error("domain error: " + msg) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& msg) : Error("index error: " + msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

class TokenizationError : public Error {
 public:
  explicit TokenizationError(const std::string& msg)
      : Error("tokenization error: " + msg) {}
};

class CacheIntegrityError : public Error {
 public:
  explicit CacheIntegrityError(const std::string& msg)
      : Error("cache integrity error: " + msg) {}
};

class LengthError : public Error {
 public:
  explicit LengthError(const std::string& msg) : Error("length error: " + msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace pd
