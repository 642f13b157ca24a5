#ifndef ZGEN_ERROR_H_
#define ZGEN_ERROR_H_

#include <stdexcept>
#include <string>

namespace zgen {

// Raised for malformed inputs and failed preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when user configuration is invalid (bad paths, bad values). The CLI
// maps this to exit code 2; every other Error maps to 3.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace zgen

#endif  // ZGEN_ERROR_H_
