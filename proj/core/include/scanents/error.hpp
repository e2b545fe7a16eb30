#pragma once

#include <stdexcept>
#include <string>

namespace scanents {

// Base class for every domain error raised by this library. Callers that do
// not care about the exact failure can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// -- geometry ---------------------------------------------------------------
class NonAxisAligned : public Error {
 public:
  using Error::Error;
};
class UnknownObject : public Error {
 public:
  using Error::Error;
};

// -- annotation parsing -----------------------------------------------------
class MalformedRecord : public Error {
 public:
  MalformedRecord(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};
class SpanOutOfRange : public Error {
 public:
  using Error::Error;
};
class MultipleTargets : public Error {
 public:
  using Error::Error;
};
class OverlappingSpans : public Error {
 public:
  using Error::Error;
};

// -- corpus level -------------------------------------------------------------
class MissingScene : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};

// -- tensors ------------------------------------------------------------------
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};
class NonBinaryTarget : public Error {
 public:
  using Error::Error;
};
class NotScalar : public Error {
 public:
  using Error::Error;
};

// -- models -------------------------------------------------------------------
class VocabOverflow : public Error {
 public:
  using Error::Error;
};
class TokenOutOfVocab : public Error {
 public:
  using Error::Error;
};
class CheckpointMismatch : public Error {
 public:
  using Error::Error;
};
class EmptyProposals : public Error {
 public:
  using Error::Error;
};
class EmptyReference : public Error {
 public:
  using Error::Error;
};

// -- harness --------------------------------------------------------------------
class GenerationExhausted : public Error {
 public:
  using Error::Error;
};

}  // namespace scanents
