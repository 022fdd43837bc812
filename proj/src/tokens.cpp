#include "duplexrag/tokens.hpp"

#include <stdexcept>

#include "duplexrag/rng.hpp"

namespace duplexrag {

bool model_is_speaking(const TokenFrame& f) {
    for (uint16_t id : f.model_audio)
        if (id != kSilenceAudioId)
            return true;
    return false;
}

namespace {

EmbeddingTable make_table(size_t rows, int dim) {
    EmbeddingTable t;
    t.rows = rows;
    t.dim = dim;
    t.data.assign(rows * static_cast<size_t>(dim), 0.0);
    return t;
}

void fill_table(EmbeddingTable& t, Rng& rng) {
    for (double& v : t.data)
        v = rng.uniform(-1.0, 1.0);
}

} // namespace

EmbeddingTables EmbeddingTables::zeros(const TokenConfig& cfg) {
    EmbeddingTables tables;
    tables.cfg = cfg;
    tables.text = make_table(cfg.text_vocab + 2, cfg.dim);
    tables.audio.resize(2);
    for (auto& role_tables : tables.audio) {
        role_tables.reserve(cfg.q);
        for (int j = 0; j < cfg.q; ++j)
            role_tables.push_back(make_table(cfg.audio_vocab + 1, cfg.dim));
    }
    return tables;
}

EmbeddingTables EmbeddingTables::seeded(const TokenConfig& cfg, uint64_t seed) {
    EmbeddingTables tables = zeros(cfg);
    Rng rng = Rng::derive(seed, "embedding_tables");
    fill_table(tables.text, rng);
    for (auto& role_tables : tables.audio)
        for (auto& t : role_tables)
            fill_table(t, rng);
    return tables;
}

size_t EmbeddingTables::text_row_index(TextToken t) const {
    switch (t.kind) {
    case TextToken::Kind::Pad:
        return pad_row();
    case TextToken::Kind::Ret:
        return ret_row();
    case TextToken::Kind::Word:
        if (t.word_id >= cfg.text_vocab)
            throw std::out_of_range("text token id outside vocabulary");
        return t.word_id;
    }
    throw std::logic_error("unreachable");
}

StepInput compose_step_input(std::span<const TokenFrame> frames,
                             const EmbeddingTables& tables, FrameIndex i) {
    if (i >= frames.size())
        throw std::out_of_range("compose_step_input: frame index out of range");

    const TokenConfig& cfg = tables.cfg;
    StepInput out;
    out.frame = i;
    out.h.assign(cfg.dim, 0.0);

    auto add = [&](std::span<const double> row) {
        for (int k = 0; k < cfg.dim; ++k)
            out.h[k] += row[k];
    };

    add(tables.text.row(tables.text_row_index(frames[i].model_text)));

    for (Role role : {Role::Model, Role::User}) {
        const auto& ids = role == Role::Model ? frames[i].model_audio : frames[i].user_audio;
        add(tables.audio_table(role, 0).row(ids[0]));
        for (int j = 1; j < cfg.q; ++j) {
            // Layers >= 2 look one step back (initial row at the boundary).
            size_t r = tables.initial_row();
            if (i > 0) {
                const auto& prev =
                    role == Role::Model ? frames[i - 1].model_audio : frames[i - 1].user_audio;
                r = prev[j];
            }
            add(tables.audio_table(role, j).row(r));
        }
    }
    return out;
}

std::optional<FrameIndex> find_ret(std::span<const TokenFrame> frames, FrameIndex from) {
    for (FrameIndex i = from; i < frames.size(); ++i)
        if (frames[i].model_text.is_ret())
            return i;
    return std::nullopt;
}

} // namespace duplexrag
