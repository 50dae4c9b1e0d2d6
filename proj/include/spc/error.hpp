#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spc {

enum class Errc
{
  kInvalidCloud,
  kInvalidArgument,
  kParseError,
  kIoError,
  kEmptyIndex,
  kInvalidLevel,
  kEmptyPatch,
  kDegenerateWeights,
  kUseAfterBackward,
  kDecodeError,
  kUnsupportedStream,
  kNoOverlap,
  kNumericError,
};

const char* to_string(Errc code);

//============================================================================
// Every failure in the library is reported as spc::Error.  The optional
// location carries a line number (PLY parsing) or byte offset (decoding).

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what, int64_t location = -1)
    : std::runtime_error(what), code_(code), location_(location)
  {}

  Errc code() const { return code_; }
  int64_t location() const { return location_; }

private:
  Errc code_;
  int64_t location_;
};

}  // namespace spc
