#pragma once

#include <cstdint>

namespace duplexrag {

using FrameIndex = uint64_t;

// ─── Frame-indexed virtual clock ─────────────────────────────────────────────
//
// The whole engine runs on a frame grid (default 12.5 Hz, one frame = 80 ms).
// A delay of d seconds spans round(d * frame_rate_hz) frames; the rounding is
// round-half-to-even, fixed globally, so traces replay identically everywhere.
// Note the frames-per-delay formula is frames = round(d * f_r) with f_r a rate
// in Hz: a 2 s delay is 25 frames at 12.5 Hz, and 250 frames span 20 s.

struct TimeBase {
    double frame_rate_hz = 12.5;

    double frame_period_s() const { return 1.0 / frame_rate_hz; }
};

// Nearest integer, ties to even. Input must be non-negative.
uint64_t round_half_even(double x);

// d seconds -> frame count. Throws std::domain_error for d < 0.
uint64_t seconds_to_frames(double d, const TimeBase& tb);

// n frames -> seconds.
double frames_to_seconds(uint64_t n, const TimeBase& tb);

// Validates frame_rate_hz > 0; throws std::invalid_argument otherwise.
void validate(const TimeBase& tb);

} // namespace duplexrag
