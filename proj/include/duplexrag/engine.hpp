#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "duplexrag/refenc.hpp"
#include "duplexrag/retrieval.hpp"
#include "duplexrag/script.hpp"
#include "duplexrag/timebase.hpp"
#include "duplexrag/tokens.hpp"
#include "duplexrag/trace.hpp"

namespace duplexrag {

// ─── Injection schedule ──────────────────────────────────────────────────────
//
// The reference stream occupies the half-open window just past its anchor:
// frames i with anchor < i <= anchor + length, where anchor = i_ret + D and
// D is the delay in frames. Frame anchor + k carries reference vector k
// (1-based).

enum class EngineMode : uint8_t { Simulated, Realtime };
enum class InjectionMode : uint8_t { Additive, Insertive };

const char* to_string(EngineMode m);
const char* to_string(InjectionMode m);

struct InjectionSchedule {
    uint64_t i_ret = 0;
    uint64_t delay_frames = 0; // D
    uint64_t length = 0;       // l
    InjectionMode mode = InjectionMode::Additive;

    uint64_t anchor() const { return i_ret + delay_frames; }
    uint64_t first_frame() const { return anchor() + 1; }
    uint64_t last_frame() const { return anchor() + length; } // length >= 1 only
    bool contains(uint64_t i) const { return i > anchor() && i <= anchor() + length; }
    // 1-based index into the reference stream; throws invariant_violation
    // outside the window.
    uint64_t ref_index(uint64_t i) const;
};

// D = the delay rounded onto the frame clock. Throws std::domain_error for a
// negative delay.
InjectionSchedule build_injection_schedule(uint64_t i_ret, double delay_s, size_t ref_len,
                                           const TimeBase& tb, InjectionMode mode);

// h'_i for the additive mode: inside the window the scheduled reference vector
// is added onto h_i, elsewhere h_i passes through unchanged. Throws
// invariant_violation when the window indexes past the reference length.
StepInput effective_input(const StepInput& h, const InjectionSchedule& schedule,
                          const ReferenceEmbedding& ref, uint64_t i);

// ─── Generators ──────────────────────────────────────────────────────────────

struct GeneratorStep {
    TextToken text;
    std::vector<uint16_t> audio;    // q model audio ids
    std::string word;               // surface form when text is a word token
    bool model_turn_end = false;
};

// One autoregressive step per frame: consumes the previous effective input,
// produces the model-side channels. The engine never steps a generator on
// inserted frames, so scripted content shifts under insertive injection.
class Generator {
  public:
    virtual ~Generator() = default;
    virtual GeneratorStep step(const StepInput& observed, FrameIndex frame) = 0;
};

// Replays a laid-out script; PAD and silence past the script end.
class ScriptedGenerator : public Generator {
  public:
    ScriptedGenerator(const ScriptTimeline& timeline, const TokenConfig& cfg,
                      uint64_t voice_seed);
    GeneratorStep step(const StepInput& observed, FrameIndex frame) override;

    const std::vector<TokenFrame>& rendered() const { return rendered_; }

  private:
    std::vector<TokenFrame> rendered_;
    std::vector<bool> turn_end_;
    std::vector<std::string> words_;
    int q_ = 8;
    size_t cursor_ = 0;
};

// ─── The conversation engine ─────────────────────────────────────────────────

struct EngineConfig {
    EngineMode mode = EngineMode::Simulated;
    InjectionMode injection = InjectionMode::Additive;
    double settle_s = 0.5;  // ASR settle before dispatch
    int max_inflight = 1;   // fixed; newer triggers are dropped while busy
    double tail_s = 2.0;    // run slack appended after the script by callers
};

void validate(const EngineConfig& cfg);

struct EngineContext {
    TimeBase tb;
    TokenConfig tokens;
    const EmbeddingTables* tables = nullptr;
    const Projection* proj = nullptr;
    const DropoutVector* dropout = nullptr;
    int ref_ratio = 4;
    EngineConfig cfg;
    // Optional script timeline: transcript snapshots for the back end and
    // measured-turn metadata. Without it retrieval sees an empty context.
    const ScriptTimeline* timeline = nullptr;
    uint64_t seed = 0;
};

// A generator step threw: the run aborts, but everything recorded up to the
// failing frame survives in `partial`.
struct generator_failure : std::runtime_error {
    ConversationTrace partial;

    generator_failure(const std::string& what, ConversationTrace trace)
        : std::runtime_error(what), partial(std::move(trace)) {}
};

// Runs the frame loop over the user feed (one feed entry per real frame;
// insertive injection splices extra frames). Single-threaded in simulated
// mode; realtime mode paces the loop against the wall clock and runs the
// back end on a worker thread.
ConversationTrace run_conversation(Generator& gen, std::span<const TokenFrame> user_feed,
                                   RetrievalBackend& backend, const EngineContext& ctx);

} // namespace duplexrag
