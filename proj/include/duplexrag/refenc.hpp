#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duplexrag/rng.hpp"
#include "duplexrag/timebase.hpp"
#include "duplexrag/tokens.hpp"

namespace duplexrag {

// ─── Toy reference text encoder ──────────────────────────────────────────────
//
// Stands in for the neural reference encoder: whitespace-and-lowercase
// tokenization, text-table embedding, window mean-pooling by the compression
// ratio c, and a frozen seeded linear projection. The only property the engine
// consumes is the timing footprint l = ceil(n / c).

struct RefEncConfig {
    int ratio = 4;       // compression ratio c (4 default, 8 selectable)
    double p_drop = 0.2; // per-document dropout probability (training side)
    uint64_t seed = 0;   // projection + dropout-vector seed
};

// Lowercase, strip punctuation to spaces, split on whitespace. Ids are
// hash-assigned against a fixed vocabulary of text_vocab entries; id 0 is the
// reserved out-of-vocabulary bucket (unused by the hash assignment itself).
std::vector<std::string> normalize_words(const std::string& text);
uint32_t word_token_id(const std::string& word, uint32_t text_vocab);
std::vector<uint32_t> tokenize_text(const std::string& text, uint32_t text_vocab);

struct ReferenceDoc {
    std::string text;
    std::vector<uint32_t> tokens;

    static ReferenceDoc from_text(std::string text, uint32_t text_vocab);
};

struct ReferenceEmbedding {
    std::vector<std::vector<double>> vectors; // l vectors, projection applied
    size_t source_len = 0;                    // n
    int ratio = 1;                            // c
    bool dropped = false;                     // whole-document dropout marker

    size_t length() const { return vectors.size(); }
};

// Frozen dim x dim linear map (the one-layer trainable projection, seeded).
struct Projection {
    int dim = 0;
    std::vector<double> m; // row-major

    static Projection seeded(int dim, uint64_t seed);
    static Projection identity(int dim);

    std::vector<double> apply(std::span<const double> v) const;
};

// Seeded constant standing in for the learnable dropout vector.
struct DropoutVector {
    std::vector<double> h_dropout;

    static DropoutVector seeded(int dim, uint64_t seed);
};

// vectors[k] = proj(mean of token embeddings in window [k*c, min((k+1)*c, n))),
// l = ceil(n / c). Throws std::domain_error for c < 1.
ReferenceEmbedding encode_reference(const ReferenceDoc& doc, const EmbeddingTables& tables,
                                    const Projection& proj, int ratio);

// One Bernoulli(p_drop) draw per document: either the input unchanged or the
// whole document replaced by a length-1 embedding carrying h_dropout.
ReferenceEmbedding apply_reference_dropout(const ReferenceEmbedding& emb, double p_drop,
                                           Rng& rng, const DropoutVector& dv);

// The length-1 dropout embedding on its own (the timeout/error fallback path).
ReferenceEmbedding dropout_embedding(const DropoutVector& dv);

} // namespace duplexrag
