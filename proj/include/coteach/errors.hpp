#pragma once

#include <stdexcept>
#include <string>

namespace coteach {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Label parsing / IO
class MalformedLine : public Error {
 public:
  using Error::Error;
};
class InvalidBox : public Error {
 public:
  using Error::Error;
};
class IoFailure : public Error {
 public:
  using Error::Error;
};

// Noise injection
class SingleCategoryDataset : public Error {
 public:
  using Error::Error;
};

// Loss / selection
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};
class EmptyBatch : public Error {
 public:
  using Error::Error;
};
class KeyMismatch : public Error {
 public:
  using Error::Error;
};

// Training
class DivergenceDetected : public Error {
 public:
  using Error::Error;
};

}  // namespace coteach
