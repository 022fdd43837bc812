#include "duplexrag/retrieval.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace duplexrag {

LatencyModel LatencyModel::fixed(double d_s) {
    LatencyModel m;
    m.kind = Kind::Fixed;
    m.fixed_s = d_s;
    return m;
}

LatencyModel LatencyModel::uniform(double lo_s, double hi_s) {
    LatencyModel m;
    m.kind = Kind::Uniform;
    m.lo_s = lo_s;
    m.hi_s = hi_s;
    return m;
}

LatencyModel LatencyModel::histogram(std::vector<HistogramBin> bins) {
    LatencyModel m;
    m.kind = Kind::Histogram;
    m.bins = std::move(bins);
    return m;
}

void validate(const LatencyModel& m) {
    switch (m.kind) {
    case LatencyModel::Kind::Fixed:
        if (m.fixed_s < 0.0)
            throw std::invalid_argument("backend.latency.d_s must be >= 0");
        break;
    case LatencyModel::Kind::Uniform:
        if (m.lo_s < 0.0 || m.hi_s < 0.0)
            throw std::invalid_argument("backend.latency bounds must be >= 0");
        if (m.lo_s > m.hi_s)
            throw std::invalid_argument("backend.latency.lo_s must be <= hi_s");
        break;
    case LatencyModel::Kind::Histogram: {
        if (m.bins.empty())
            throw std::invalid_argument("backend.latency.bins must be non-empty");
        double total = 0.0;
        for (const auto& b : m.bins) {
            if (b.lo_s < 0.0 || b.hi_s < b.lo_s)
                throw std::invalid_argument("backend.latency.bins edges invalid");
            if (b.mass < 0.0)
                throw std::invalid_argument("backend.latency.bins mass must be >= 0");
            total += b.mass;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw std::invalid_argument("backend.latency.bins masses must sum to 1");
        break;
    }
    }
}

double sample_latency(const LatencyModel& m, Rng& rng) {
    switch (m.kind) {
    case LatencyModel::Kind::Fixed:
        return m.fixed_s;
    case LatencyModel::Kind::Uniform:
        return rng.uniform(m.lo_s, m.hi_s);
    case LatencyModel::Kind::Histogram: {
        double u = rng.uniform();
        double cum = 0.0;
        for (const auto& b : m.bins) {
            cum += b.mass;
            if (u < cum)
                return rng.uniform(b.lo_s, b.hi_s);
        }
        const auto& last = m.bins.back();
        return rng.uniform(last.lo_s, last.hi_s);
    }
    }
    throw std::logic_error("unreachable");
}

RetrievalOutcome RetrievalOutcome::success(ReferenceDoc doc, double latency_s) {
    RetrievalOutcome o;
    o.status = Status::Ok;
    o.doc = std::move(doc);
    o.latency_s = latency_s;
    return o;
}

RetrievalOutcome RetrievalOutcome::timeout(double timeout_s) {
    RetrievalOutcome o;
    o.status = Status::Timeout;
    o.latency_s = timeout_s;
    return o;
}

RetrievalOutcome RetrievalOutcome::error(std::string message, double latency_s) {
    RetrievalOutcome o;
    o.status = Status::Error;
    o.message = std::move(message);
    o.latency_s = latency_s;
    return o;
}

const char* to_string(RetrievalOutcome::Status s) {
    switch (s) {
    case RetrievalOutcome::Status::Ok:
        return "ok";
    case RetrievalOutcome::Status::Timeout:
        return "timeout";
    case RetrievalOutcome::Status::Error:
        return "error";
    }
    return "?";
}

RetrievalOutcome finalize_with_timeout(RetrievalOutcome outcome, double timeout_s) {
    if (timeout_s > 0.0 && outcome.latency_s > timeout_s)
        return RetrievalOutcome::timeout(timeout_s);
    return outcome;
}

ScriptedOracleBackend::ScriptedOracleBackend(ReferenceDoc fixture, LatencyModel latency,
                                             double timeout_s, Rng rng)
    : fixture_(std::move(fixture)), latency_(latency), timeout_s_(timeout_s), rng_(rng) {
    validate(latency_);
}

RetrievalOutcome ScriptedOracleBackend::retrieve(const TranscriptContext& ctx) {
    double d = sample_latency(latency_, rng_);
    if (ctx.empty())
        return RetrievalOutcome::error("empty transcript context", d);
    return finalize_with_timeout(RetrievalOutcome::success(fixture_, d), timeout_s_);
}

MockBackend::MockBackend(std::string document, uint32_t text_vocab, LatencyModel latency,
                         double timeout_s, Rng rng)
    : document_(std::move(document)), text_vocab_(text_vocab), latency_(latency),
      timeout_s_(timeout_s), rng_(rng) {
    validate(latency_);
}

RetrievalOutcome MockBackend::retrieve(const TranscriptContext& ctx) {
    double d = sample_latency(latency_, rng_);
    if (ctx.empty())
        return RetrievalOutcome::error("empty transcript context", d);
    return finalize_with_timeout(
        RetrievalOutcome::success(ReferenceDoc::from_text(document_, text_vocab_), d),
        timeout_s_);
}

FaultInjector::FaultInjector(std::unique_ptr<RetrievalBackend> inner, double p_error, Rng rng)
    : inner_(std::move(inner)), p_error_(p_error), rng_(rng) {
    if (p_error_ < 0.0 || p_error_ > 1.0)
        throw std::invalid_argument("backend.p_error must be in [0, 1]");
}

RetrievalOutcome FaultInjector::retrieve(const TranscriptContext& ctx) {
    RetrievalOutcome o = inner_->retrieve(ctx);
    if (rng_.bernoulli(p_error_))
        return RetrievalOutcome::error("injected fault", o.latency_s);
    return o;
}

WallDelayBackend::WallDelayBackend(std::unique_ptr<RetrievalBackend> inner)
    : inner_(std::move(inner)) {}

RetrievalOutcome WallDelayBackend::retrieve(const TranscriptContext& ctx) {
    RetrievalOutcome o = inner_->retrieve(ctx);
    if (o.latency_s > 0.0)
        std::this_thread::sleep_for(std::chrono::duration<double>(o.latency_s));
    return o;
}

} // namespace duplexrag
