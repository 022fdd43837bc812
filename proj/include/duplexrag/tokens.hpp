#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "duplexrag/timebase.hpp"

namespace duplexrag {

// ─── Dual-channel token frames ───────────────────────────────────────────────

struct TokenConfig {
    int dim = 16;              // embedding dimension
    int q = 8;                 // audio codebook layers per role
    uint32_t text_vocab = 1024;
    uint32_t audio_vocab = 256;
};

// Audio codebook id 0 is the silence token by convention; a frame with any
// nonzero model audio id counts as the model speaking.
constexpr uint16_t kSilenceAudioId = 0;

struct TextToken {
    enum class Kind : uint8_t { Word, Pad, Ret };

    Kind kind = Kind::Pad;
    uint32_t word_id = 0; // valid only for Kind::Word

    static TextToken pad() { return {}; }
    static TextToken ret() { return {Kind::Ret, 0}; }
    static TextToken word(uint32_t id) { return {Kind::Word, id}; }

    bool is_ret() const { return kind == Kind::Ret; }
    bool is_word() const { return kind == Kind::Word; }

    friend bool operator==(const TextToken&, const TextToken&) = default;
};

// One 80 ms step of the stream: model text token plus q-layer audio codebook
// ids for both roles. `inserted` marks virtual steps spliced in by the
// insertive injection mode.
struct TokenFrame {
    FrameIndex frame = 0;
    TextToken model_text;
    std::vector<uint16_t> model_audio; // q ids
    std::vector<uint16_t> user_audio;  // q ids
    bool inserted = false;

    friend bool operator==(const TokenFrame&, const TokenFrame&) = default;
};

bool model_is_speaking(const TokenFrame& f);

enum class Role : int { Model = 0, User = 1 };

// ─── Embedding tables ────────────────────────────────────────────────────────
//
// Toy stand-ins for the frozen embedding tables: one text table (with PAD and
// RET rows appended after the word vocabulary) and per-role, per-layer audio
// tables. Each audio table carries one extra "initial" row used for the
// step-(-1) lookups of layers >= 2 at the first frame.

struct EmbeddingTable {
    size_t rows = 0;
    int dim = 0;
    std::vector<double> data; // rows * dim, row-major

    std::span<const double> row(size_t r) const {
        return {data.data() + r * static_cast<size_t>(dim), static_cast<size_t>(dim)};
    }
    std::span<double> mutable_row(size_t r) {
        return {data.data() + r * static_cast<size_t>(dim), static_cast<size_t>(dim)};
    }
};

struct EmbeddingTables {
    TokenConfig cfg;
    EmbeddingTable text;                            // text_vocab + 2 rows (PAD, RET)
    std::vector<std::vector<EmbeddingTable>> audio; // [role][layer], audio_vocab + 1 rows

    static EmbeddingTables seeded(const TokenConfig& cfg, uint64_t seed);
    static EmbeddingTables zeros(const TokenConfig& cfg);

    size_t pad_row() const { return cfg.text_vocab; }
    size_t ret_row() const { return cfg.text_vocab + 1; }
    size_t initial_row() const { return cfg.audio_vocab; } // in audio tables
    size_t text_row_index(TextToken t) const;

    const EmbeddingTable& audio_table(Role r, int layer) const {
        return audio[static_cast<int>(r)][layer];
    }
};

// ─── Input composition ───────────────────────────────────────────────────────

struct StepInput {
    FrameIndex frame = 0;
    std::vector<double> h;

    friend bool operator==(const StepInput&, const StepInput&) = default;
};

// Temporal-Transformer input at step i: the text embedding and, per role, the
// layer-1 audio embedding at step i plus the layer-2..q audio embeddings at
// step i-1 (the initial row when i == 0). Throws std::out_of_range when i is
// past the end of `frames`.
StepInput compose_step_input(std::span<const TokenFrame> frames,
                             const EmbeddingTables& tables, FrameIndex i);

// Earliest frame at or after `from` whose model text token is RET.
std::optional<FrameIndex> find_ret(std::span<const TokenFrame> frames,
                                   FrameIndex from = 0);

} // namespace duplexrag
