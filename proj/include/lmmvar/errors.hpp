#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lmmvar {

// Two families of failures. DataError covers I/O, schema and row validation
// (CLI exit code 2); StatsError covers estimation and inference failures
// (CLI exit code 1).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StatsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public DataError {
 public:
  explicit IoError(const std::string& path, const std::string& what)
      : DataError("cannot " + what + " '" + path + "'"), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDatasetError : public DataError {
 public:
  EmptyDatasetError() : DataError("dataset is empty") {}
};

// Row index is 1-based over data rows (the header is row 0).
class RowError : public DataError {
 public:
  RowError(std::size_t row, const std::string& msg)
      : DataError("row " + std::to_string(row) + ": " + msg), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class UnknownNameError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientDataError : public StatsError {
 public:
  using StatsError::StatsError;
};

class RankDeficientError : public StatsError {
 public:
  using StatsError::StatsError;
};

class DegenerateVarianceError : public StatsError {
 public:
  using StatsError::StatsError;
};

class BoundaryEstimateError : public StatsError {
 public:
  using StatsError::StatsError;
};

class DomainError : public StatsError {
 public:
  using StatsError::StatsError;
};

}  // namespace lmmvar
