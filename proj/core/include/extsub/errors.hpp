#pragma once

#include <stdexcept>
#include <string>

namespace extsub {

// All library failures carry a stable machine-readable code alongside the
// human-readable message. The CLI forwards the code verbatim in its JSON
// error output.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string & message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string & code() const noexcept { return code_; }

private:
    std::string code_;
};

inline Error malformed_header(const std::string & msg)  { return Error("MalformedHeader", msg); }
inline Error offset_overlap(const std::string & msg)    { return Error("OffsetOverlap", msg); }
inline Error unknown_dtype(const std::string & msg)     { return Error("UnknownDtype", msg); }
inline Error io_failure(const std::string & msg)        { return Error("IoFailure", msg); }
inline Error shape_unsupported(const std::string & msg) { return Error("ShapeUnsupported", msg); }
inline Error unpaired_factor(const std::string & msg)   { return Error("UnpairedFactor", msg); }
inline Error rank_mismatch(const std::string & msg)     { return Error("RankMismatch", msg); }
inline Error key_set_mismatch(const std::string & msg)  { return Error("KeySetMismatch", msg); }
inline Error shape_mismatch(const std::string & msg)    { return Error("ShapeMismatch", msg); }
inline Error rank_too_large(const std::string & msg)    { return Error("RankTooLarge", msg); }
inline Error malformed_line(const std::string & msg)    { return Error("MalformedLine", msg); }
inline Error ambiguous_orientation(const std::string & msg) { return Error("AmbiguousOrientation", msg); }
inline Error invalid_argument_error(const std::string & msg) { return Error("InvalidArgument", msg); }

} // namespace extsub
