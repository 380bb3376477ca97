#pragma once

#include <stdexcept>
#include <string>

namespace echogrid {

/// Malformed or inconsistent input data (config files, logs, CSV, HRIR sets).
/// The CLI maps this to exit code 3.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A statistical design that cannot be analysed as requested.
class DesignError : public DataError {
public:
  using DataError::DataError;
};

/// Writing an artifact to disk failed.
class StorageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace echogrid
