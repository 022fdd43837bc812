#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duplexrag/retrieval.hpp"
#include "duplexrag/timebase.hpp"
#include "duplexrag/tokens.hpp"

namespace duplexrag {

// ─── Conversation scripts ────────────────────────────────────────────────────
//
// A script is the text-side record of one conversation: alternating turns,
// with knowledge-grounded model turns split into lead / body / optional tail
// and carrying their reference document and answer keyword.

enum class ScriptVariant : uint8_t { V1, V2, V3, SingleTurn };

ScriptVariant variant_from_string(const std::string& s);
const char* to_string(ScriptVariant v);

struct ScriptTurn {
    Speaker speaker = Speaker::User;
    std::string text; // plain turns
    std::string lead, body, tail;     // RAG-enabled model turns
    std::string reference;            // reference document text ("" = none)
    std::string keyword;              // answer keyword ("" = none)
    std::vector<std::string> aliases; // keyword aliases; defaults to {keyword}

    bool rag_enabled() const { return !reference.empty(); }
};

struct AlignmentEntry {
    size_t turn_idx = 0;
    size_t token_idx = 0;
    uint64_t frame = 0;
};

struct ConversationScript {
    std::string script_id;
    std::string topic;
    ScriptVariant variant = ScriptVariant::V1;
    std::vector<ScriptTurn> turns;
    std::vector<AlignmentEntry> alignment; // optional explicit per-token frames
};

// Parse a script from JSON text. `name` is used in diagnostics.
ConversationScript parse_script(const std::string& json_text, const std::string& name);
ConversationScript load_script_file(const std::string& path);

// ─── Frame-aligned timeline ──────────────────────────────────────────────────
//
// Laying out a script assigns every token an absolute frame: by default from a
// tokens-per-second cadence model with a fixed inter-turn gap, overridden
// token-by-token by any explicit alignment entries.

struct LayoutConfig {
    double tokens_per_s = 3.0;
    double turn_gap_s = 0.48;
};

enum class SegmentKind : uint8_t { Plain, Lead, Body, Tail };

struct AlignedToken {
    std::string word;    // normalized (lowercase, punctuation stripped)
    uint32_t word_id = 0;
    uint64_t frame = 0;
    SegmentKind segment = SegmentKind::Plain;
};

struct TimelineTurn {
    Speaker speaker = Speaker::User;
    size_t turn_idx = 0;
    bool rag = false;
    std::vector<AlignedToken> tokens;
    uint64_t start_frame = 0; // first token frame
    uint64_t end_frame = 0;   // last token frame
    uint64_t lead_start_frame = 0; // RAG turns
    uint64_t body_onset_frame = 0; // RAG turns
    ReferenceDoc reference;
    std::string keyword;
    std::vector<std::string> aliases;

    // End of the utterance: the slot boundary after the last token.
    double end_time_s(const TimeBase& tb) const;
    std::string joined_text() const;
};

struct ScriptTimeline {
    std::string script_id;
    TimeBase tb;
    std::vector<TimelineTurn> turns;
    uint64_t total_frames = 0;

    const TimelineTurn* first_rag_turn() const;
};

// Throws std::invalid_argument with the script id and turn index on invalid
// cadence, non-monotonic alignment, or a RAG turn with an empty lead or body.
ScriptTimeline layout_script(const ConversationScript& script, const LayoutConfig& layout,
                             const TimeBase& tb, uint32_t text_vocab);

// ─── Rendering to token frames ───────────────────────────────────────────────

// Deterministic synthetic audio id, nonzero while a role is speaking.
uint16_t synthetic_audio_id(uint64_t voice_seed, Role role, uint64_t frame, int layer,
                            uint32_t audio_vocab);

// The per-script voice stream, shared by simulation and data synthesis.
uint64_t voice_seed_for(uint64_t seed, const std::string& script_id);

// Renders the whole conversation onto the frame clock: word tokens at their
// aligned frames, RET one frame before each RAG turn's first lead token,
// synthetic nonzero audio over each turn's span, silence and PAD elsewhere.
std::vector<TokenFrame> render_frames(const ScriptTimeline& timeline, const TokenConfig& cfg,
                                      uint64_t voice_seed);

// True when `frame` is the last frame of a model turn.
std::vector<bool> model_turn_end_flags(const ScriptTimeline& timeline, size_t total_frames);

// Transcript of everything spoken up to the cutoff (the ASR stand-in output).
TranscriptContext transcript_until(const ScriptTimeline& timeline, double cutoff_s);

} // namespace duplexrag
