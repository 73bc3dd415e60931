#pragma once

#include <stdexcept>
#include <string>

namespace pcnet {

// Root of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateHomography : public Error {
 public:
  using Error::Error;
};

class PointAtInfinity : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Anything wrong with input data: missing files, undecodable images, bad
// homography files.
class DataError : public Error {
 public:
  using Error::Error;
};

class MissingModality : public DataError {
 public:
  using DataError::DataError;
};

class MissingGroundTruth : public DataError {
 public:
  using DataError::DataError;
};

class DecodeError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDataset : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& batch_id)
      : Error("non-finite loss in batch " + batch_id), batch_id_(batch_id) {}
  const std::string& batch_id() const { return batch_id_; }

 private:
  std::string batch_id_;
};

}  // namespace pcnet
