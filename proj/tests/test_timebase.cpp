#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "duplexrag/timebase.hpp"

using namespace duplexrag;

TEST_CASE("round_half_even rounds ties to the even neighbor") {
    CHECK(round_half_even(0.0) == 0);
    CHECK(round_half_even(0.5) == 0);
    CHECK(round_half_even(1.5) == 2);
    CHECK(round_half_even(2.5) == 2);
    CHECK(round_half_even(3.5) == 4);
    CHECK(round_half_even(2.4999) == 2);
    CHECK(round_half_even(2.5001) == 3);
    CHECK(round_half_even(7.0) == 7);
}

TEST_CASE("seconds_to_frames follows frames = round(d * rate)") {
    TimeBase tb; // 12.5 Hz
    CHECK(seconds_to_frames(0.0, tb) == 0);
    CHECK(seconds_to_frames(0.8, tb) == 10);
    CHECK(seconds_to_frames(2.0, tb) == 25);
    CHECK(seconds_to_frames(20.0, tb) == 250);
    CHECK(seconds_to_frames(0.5, tb) == 6);  // 6.25 -> 6
    CHECK(seconds_to_frames(0.04, tb) == 0); // 0.5 ties to 0
    CHECK(seconds_to_frames(0.12, tb) == 2); // 1.5 ties to 2
    CHECK(seconds_to_frames(0.2, tb) == 2);  // 2.5 ties to 2

    TimeBase fast{25.0};
    CHECK(seconds_to_frames(2.0, fast) == 50);

    CHECK_THROWS_AS(seconds_to_frames(-0.1, tb), std::domain_error);
}

TEST_CASE("frames_to_seconds is frames / rate") {
    TimeBase tb;
    CHECK(frames_to_seconds(0, tb) == 0.0);
    CHECK(frames_to_seconds(25, tb) == doctest::Approx(2.0));
    CHECK(frames_to_seconds(250, tb) == doctest::Approx(20.0));
    CHECK(frames_to_seconds(1, tb) == doctest::Approx(0.08));
}

TEST_CASE("quantization error is at most half a frame period") {
    TimeBase tb;
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> dur(0.0, 30.0);
    for (int k = 0; k < 2000; ++k) {
        const double d = dur(gen);
        const double back = frames_to_seconds(seconds_to_frames(d, tb), tb);
        CHECK(std::abs(back - d) <= tb.frame_period_s() / 2 + 1e-12);
    }
}

TEST_CASE("seconds_to_frames is monotone in the duration") {
    TimeBase tb;
    uint64_t prev = 0;
    for (double d = 0.0; d <= 10.0; d += 0.013) {
        const uint64_t f = seconds_to_frames(d, tb);
        CHECK(f >= prev);
        prev = f;
    }
}

TEST_CASE("timebase validation rejects non-positive rates") {
    CHECK_NOTHROW(validate(TimeBase{12.5}));
    CHECK_THROWS_AS(validate(TimeBase{0.0}), std::invalid_argument);
    CHECK_THROWS_AS(validate(TimeBase{-1.0}), std::invalid_argument);
}
