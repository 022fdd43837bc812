#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "duplexrag/engine.hpp"
#include "duplexrag/refenc.hpp"
#include "duplexrag/rng.hpp"
#include "duplexrag/script.hpp"
#include "duplexrag/timebase.hpp"

namespace duplexrag {

// ─── Training-data construction ──────────────────────────────────────────────

struct SynthConfig {
    LayoutConfig layout;
    double greeting_drop_p = 0.3;
    double gate_window_ms = 80.0;
    double gate_threshold_dbfs = -65.0;
};

// The RET slot: one frame before the first lead token. Throws
// std::domain_error for a non-RAG turn or a lead starting at frame 0.
uint64_t place_ret(const TimelineTurn& turn);

// Deterministic core of the training delay draw: p and u are the two uniform
// variates. Short leads (< 2 s) and the 0.2 fallback draw U(0, d_lead); the
// main branch draws U(1.0, d_lead - 1.0), keeping at least a second of buffer
// before the body. Throws std::domain_error for d_lead <= 0.
double training_delay_from(double d_lead_s, double p, double u);
double sample_training_delay(double d_lead_s, Rng& rng);

// With probability p, removes the leading greeting (a script-initial non-RAG
// model turn); scripts that do not open with one pass through unchanged.
ConversationScript drop_greeting(ConversationScript script, double p, Rng& rng);

// Zeroes every 80 ms window whose RMS level sits below the threshold
// (full-scale amplitude 1.0, RMS convention). A short tail window is judged
// on its actual length. Untouched windows pass through bit-exactly.
std::vector<float> gate_audio(std::span<const float> samples, int sample_rate_hz,
                              double window_ms = 80.0, double threshold_dbfs = -65.0);

struct TrainingExample {
    std::string script_id;
    size_t turn_idx = 0;
    uint64_t i_ret = 0;
    double d_lead_s = 0.0;
    double d_prime_s = 0.0;
    bool dropout = false;
    size_t ref_len_tokens = 0;
    InjectionSchedule schedule;
};

struct SynthResult {
    ScriptTimeline timeline;
    std::vector<TokenFrame> frames; // rendered conversation, RETs placed
    std::vector<TrainingExample> examples;
};

// Greeting decision, layout, rendering, and one example per RAG turn. All
// randomness derives from (seed, script id), so per-script work is order-
// independent.
SynthResult build_training_examples(const ConversationScript& script, const SynthConfig& synth,
                                    const TokenConfig& tokens, const RefEncConfig& refenc,
                                    const TimeBase& tb, uint64_t seed);

std::string training_example_to_json(const TrainingExample& ex);
void write_dataset_jsonl(std::span<const TrainingExample> examples, std::ostream& out);
void write_alignment_jsonl(const ScriptTimeline& timeline, std::ostream& out);

} // namespace duplexrag
