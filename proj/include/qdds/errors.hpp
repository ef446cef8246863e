#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qdds {

// Carrier frequency at or above Nyquist for the configured sample rate.
struct NyquistError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Summed ideal amplitude left the DAC full-scale range.
struct ClippingError : std::runtime_error {
    std::int64_t first_sample;
    ClippingError(const std::string& msg, std::int64_t idx)
        : std::runtime_error(msg), first_sample(idx) {}
};

// A gate was requested whose calibration entry is missing (un-tuned gate).
struct UntunedGateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TuneUpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; line is 1-based.
struct ParseError : std::runtime_error {
    int line;
    ParseError(const std::string& msg, int line_no)
        : std::runtime_error(msg), line(line_no) {}
};

}  // namespace qdds
