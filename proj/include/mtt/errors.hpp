#pragma once

#include <stdexcept>
#include <string>

namespace mtt {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File-level problems: missing, unreadable, unwritable. CLI exit code 2.
class IoError : public Error {
 public:
  using Error::Error;
};

// File exists but its content is malformed for the expected format.
// Shares the I/O exit code: the file, not the request, is at fault.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// Recognizable container but a version/magic we do not speak.
class UnsupportedFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

// File ends before the declared payload does.
class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Stored checksum does not match the payload.
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Caller handed us arguments or data that violate a documented
// precondition. CLI exit code 3.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtt
