#pragma once

#include <stdexcept>
#include <string>

namespace htdn {

// Root of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed external data: bad UTF-8, corrupt image, bad record.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration or command-line value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace htdn
