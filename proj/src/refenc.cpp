#include "duplexrag/refenc.hpp"

#include <cctype>
#include <stdexcept>

namespace duplexrag {

std::vector<std::string> normalize_words(const std::string& text) {
    std::vector<std::string> words;
    std::string word;
    auto flush = [&] {
        if (!word.empty())
            words.push_back(std::move(word));
        word.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '\'')
            word.push_back(static_cast<char>(std::tolower(c)));
        else
            flush();
    }
    flush();
    return words;
}

uint32_t word_token_id(const std::string& word, uint32_t text_vocab) {
    if (text_vocab <= 1)
        return 0; // everything lands in the OOV bucket
    return 1 + static_cast<uint32_t>(fnv1a64(word) % (text_vocab - 1));
}

std::vector<uint32_t> tokenize_text(const std::string& text, uint32_t text_vocab) {
    std::vector<uint32_t> ids;
    for (const std::string& w : normalize_words(text))
        ids.push_back(word_token_id(w, text_vocab));
    return ids;
}

ReferenceDoc ReferenceDoc::from_text(std::string text, uint32_t text_vocab) {
    ReferenceDoc doc;
    doc.tokens = tokenize_text(text, text_vocab);
    doc.text = std::move(text);
    return doc;
}

Projection Projection::seeded(int dim, uint64_t seed) {
    Projection p;
    p.dim = dim;
    p.m.resize(static_cast<size_t>(dim) * dim);
    Rng rng = Rng::derive(seed, "refenc_projection");
    for (double& v : p.m)
        v = rng.uniform(-1.0, 1.0);
    return p;
}

Projection Projection::identity(int dim) {
    Projection p;
    p.dim = dim;
    p.m.assign(static_cast<size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i)
        p.m[static_cast<size_t>(i) * dim + i] = 1.0;
    return p;
}

std::vector<double> Projection::apply(std::span<const double> v) const {
    std::vector<double> out(dim, 0.0);
    for (int r = 0; r < dim; ++r) {
        double acc = 0.0;
        const double* row = m.data() + static_cast<size_t>(r) * dim;
        for (int c = 0; c < dim; ++c)
            acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

DropoutVector DropoutVector::seeded(int dim, uint64_t seed) {
    DropoutVector dv;
    dv.h_dropout.resize(dim);
    Rng rng = Rng::derive(seed, "refenc_dropout_vector");
    for (double& v : dv.h_dropout)
        v = rng.uniform(-1.0, 1.0);
    return dv;
}

ReferenceEmbedding encode_reference(const ReferenceDoc& doc, const EmbeddingTables& tables,
                                    const Projection& proj, int ratio) {
    if (ratio < 1)
        throw std::domain_error("refenc.ratio must be >= 1");

    const size_t n = doc.tokens.size();
    const size_t c = static_cast<size_t>(ratio);
    ReferenceEmbedding emb;
    emb.source_len = n;
    emb.ratio = ratio;

    const int dim = tables.cfg.dim;
    for (size_t start = 0; start < n; start += c) {
        size_t end = std::min(start + c, n);
        std::vector<double> mean(dim, 0.0);
        for (size_t t = start; t < end; ++t) {
            uint32_t id = doc.tokens[t];
            if (id >= tables.cfg.text_vocab)
                throw std::out_of_range("reference token id outside vocabulary");
            auto row = tables.text.row(id);
            for (int k = 0; k < dim; ++k)
                mean[k] += row[k];
        }
        double denom = static_cast<double>(end - start);
        for (double& v : mean)
            v /= denom;
        emb.vectors.push_back(proj.apply(mean));
    }
    return emb;
}

ReferenceEmbedding apply_reference_dropout(const ReferenceEmbedding& emb, double p_drop,
                                           Rng& rng, const DropoutVector& dv) {
    if (p_drop < 0.0 || p_drop > 1.0)
        throw std::domain_error("refenc.p_drop must be in [0, 1]");
    if (!rng.bernoulli(p_drop))
        return emb;
    ReferenceEmbedding out = dropout_embedding(dv);
    out.source_len = emb.source_len;
    out.ratio = emb.ratio;
    return out;
}

ReferenceEmbedding dropout_embedding(const DropoutVector& dv) {
    ReferenceEmbedding out;
    out.vectors.push_back(dv.h_dropout);
    out.source_len = 1;
    out.ratio = 1;
    out.dropped = true;
    return out;
}

} // namespace duplexrag
