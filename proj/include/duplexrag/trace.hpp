#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "duplexrag/retrieval.hpp"
#include "duplexrag/tokens.hpp"

namespace duplexrag {

// ─── Engine phases ───────────────────────────────────────────────────────────

enum class Phase : uint8_t { Listening, SpeakingNormal, SpeakingPreRag, Injecting };

const char* to_string(Phase p);
Phase phase_from_string(const std::string& s);

// ─── Trace records ───────────────────────────────────────────────────────────

struct TraceEvent {
    enum class Kind : uint8_t { RetTrigger, Dispatch, Outcome, InjectStart, InjectEnd };

    Kind kind = Kind::RetTrigger;
    uint64_t frame = 0;
    double t_s = 0.0;         // precise event time, not frame-quantized
    std::string status;       // Outcome: ok | timeout | error | discarded
    double latency_s = -1.0;  // Outcome: modeled or measured back-end latency
    bool dropped = false;     // RetTrigger refused by the inflight cap
    std::string inject_kind;  // InjectStart: reference | dropout
    uint64_t inject_len = 0;  // InjectStart
};

const char* to_string(TraceEvent::Kind k);
TraceEvent::Kind event_kind_from_string(const std::string& s);

struct PhaseChange {
    Phase phase = Phase::Listening;
    uint64_t frame = 0;
    double t_s = 0.0;
};

struct TraceWord {
    std::string word;
    uint64_t frame = 0;
    double t_s = 0.0;
};

// One retrieval round trip, trigger through delivery.
struct RetrievalJob {
    uint64_t trigger_frame = 0;
    double trigger_time_s = 0.0;
    double settle_s = 0.5;
    uint64_t dispatch_frame = 0;
    double dispatched_at_s = 0.0; // trigger time + ASR settle
    RetrievalOutcome outcome;
    uint64_t completed_frame = 0;    // frame at which the outcome took effect
    double completion_time_s = 0.0;  // dispatched_at + latency
    bool delivered = false;
    bool discarded = false; // outcome arrived after its turn ended
};

struct TraceMeta {
    std::string script_id;
    double frame_rate_hz = 12.5;
    uint64_t seed = 0;
    std::string mode = "simulated";
    std::string injection = "additive";
    // Measured-turn annotations, present when the run had a scripted timeline.
    std::string question;
    std::string keyword;
    std::vector<std::string> aliases;
    std::optional<double> user_end_s;
    std::optional<uint64_t> body_onset_frame;
};

struct ConversationTrace {
    TraceMeta meta;
    std::vector<TokenFrame> frames;
    std::vector<TraceEvent> events;
    std::vector<PhaseChange> phases;
    std::vector<TraceWord> words;
    std::vector<RetrievalJob> jobs;
    // Raw h_i and post-injection h'_i per frame. Kept in memory for tests and
    // validators; not serialized.
    std::vector<StepInput> raw_inputs;
    std::vector<StepInput> effective_inputs;
};

// ─── JSONL serialization ─────────────────────────────────────────────────────
//
// One meta line, then per frame: events, phase change, the frame record, then
// word onsets. The reader rebuilds `jobs` from the event stream.

void write_trace_jsonl(const ConversationTrace& trace, std::ostream& out);
std::string trace_to_jsonl(const ConversationTrace& trace);
ConversationTrace read_trace_jsonl(std::istream& in, const std::string& name);
ConversationTrace load_trace_file(const std::string& path);
void save_trace_file(const ConversationTrace& trace, const std::string& path);

// Structural invariants: contiguous frame indices, events in frame order,
// injection windows anchored one frame after their outcome and sized to the
// announced length, phase changes deduplicated, pre-retrieval phase present
// at each accepted trigger. Throws invariant_violation.
void validate_trace(const ConversationTrace& trace);

// Last phase change at or before `frame` (Listening before any change).
Phase phase_at(const ConversationTrace& trace, uint64_t frame);

} // namespace duplexrag
