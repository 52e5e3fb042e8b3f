#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace copaint {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stroke or setting broke one of its invariants. `fields()` names every
/// offending field (e.g. "p0", "color_index").
class ConstraintViolation : public Error {
 public:
  ConstraintViolation(const std::string& what, std::vector<std::string> fields,
                      int stroke_index = -1)
      : Error(what), fields_(std::move(fields)), stroke_index_(stroke_index) {}
  const std::vector<std::string>& fields() const { return fields_; }
  /// Position of the offending stroke within a plan or batch, or -1.
  int stroke_index() const { return stroke_index_; }

 private:
  std::vector<std::string> fields_;
  int stroke_index_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// External service (target, embedding, saliency...) failed or timed out.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Undecodable image, malformed JSON, bad config value.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace copaint
