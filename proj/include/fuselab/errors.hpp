#pragma once

#include <stdexcept>
#include <string>

namespace fuselab {

// Base of every error thrown by the library. Each subclass corresponds to one
// failure family so the CLI can report which stage failed.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between matrices, layers or models.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value violates a documented invariant (non-finite entry, asymmetric
// scatter, bias length mismatch, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed model / dataset file.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Linear algebra failure: singular transform, failed SVD, ill-conditioning.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (odd class count for class-structured splits, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(int epoch, int batch)
      : Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

// No gamma candidate produced a usable merge.
class SelectionError : public Error {
 public:
  using Error::Error;
};

}  // namespace fuselab
