#include "duplexrag/timebase.hpp"

#include <cmath>
#include <stdexcept>

namespace duplexrag {

uint64_t round_half_even(double x) {
    double f = std::floor(x);
    double frac = x - f;
    if (frac > 0.5)
        return static_cast<uint64_t>(f) + 1;
    if (frac < 0.5)
        return static_cast<uint64_t>(f);
    // Exact tie: pick the even neighbor.
    auto lo = static_cast<uint64_t>(f);
    return (lo % 2 == 0) ? lo : lo + 1;
}

uint64_t seconds_to_frames(double d, const TimeBase& tb) {
    if (!(d >= 0.0))
        throw std::domain_error("seconds_to_frames: duration must be >= 0");
    return round_half_even(d * tb.frame_rate_hz);
}

double frames_to_seconds(uint64_t n, const TimeBase& tb) {
    return static_cast<double>(n) / tb.frame_rate_hz;
}

void validate(const TimeBase& tb) {
    if (!(tb.frame_rate_hz > 0.0))
        throw std::invalid_argument("timebase.frame_rate_hz must be > 0");
}

} // namespace duplexrag
