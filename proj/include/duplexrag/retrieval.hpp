#pragma once

#include <memory>
#include <string>
#include <vector>

#include "duplexrag/refenc.hpp"
#include "duplexrag/rng.hpp"

namespace duplexrag {

// ─── Transcript context ──────────────────────────────────────────────────────

enum class Speaker : uint8_t { User, Model };

struct TranscriptTurn {
    Speaker speaker = Speaker::User;
    std::string text;
    double end_time_s = 0.0;
};

// Aggregated conversational context handed to the back end at dispatch time.
// Turns are sorted by end time and all end at or before the cutoff.
struct TranscriptContext {
    std::vector<TranscriptTurn> turns;
    double cutoff_time_s = 0.0;

    bool empty() const { return turns.empty(); }
};

// ─── Latency model ───────────────────────────────────────────────────────────

struct HistogramBin {
    double lo_s = 0.0;
    double hi_s = 0.0;
    double mass = 0.0;
};

struct LatencyModel {
    enum class Kind : uint8_t { Fixed, Uniform, Histogram };

    Kind kind = Kind::Fixed;
    double fixed_s = 0.0;               // Fixed
    double lo_s = 0.0, hi_s = 0.0;      // Uniform
    std::vector<HistogramBin> bins;     // Histogram, masses sum to 1

    static LatencyModel fixed(double d_s);
    static LatencyModel uniform(double lo_s, double hi_s);
    static LatencyModel histogram(std::vector<HistogramBin> bins);
};

// Throws std::invalid_argument for negative delays, lo > hi, or histogram
// masses that do not sum to 1.
void validate(const LatencyModel& m);

// Fixed -> constant; Uniform -> U(lo, hi); Histogram -> inverse-CDF sample.
double sample_latency(const LatencyModel& m, Rng& rng);

// ─── Outcomes and the back-end contract ──────────────────────────────────────

struct RetrievalOutcome {
    enum class Status : uint8_t { Ok, Timeout, Error };

    Status status = Status::Error;
    ReferenceDoc doc;    // valid for Ok
    std::string message; // valid for Error
    double latency_s = 0.0;

    bool ok() const { return status == Status::Ok; }

    static RetrievalOutcome success(ReferenceDoc doc, double latency_s);
    static RetrievalOutcome timeout(double timeout_s);
    static RetrievalOutcome error(std::string message, double latency_s);
};

const char* to_string(RetrievalOutcome::Status s);

// Text-in-text-out back end. Simulated implementations fill latency_s from
// their LatencyModel without sleeping; live ones report wall-clock latency.
// Failures come back as outcomes, never as exceptions, so the engine's fault
// path stays exercised.
class RetrievalBackend {
  public:
    virtual ~RetrievalBackend() = default;
    virtual RetrievalOutcome retrieve(const TranscriptContext& ctx) = 0;
};

// Applies the timeout ceiling shared by all back ends: latencies at or under
// the budget pass through, anything longer becomes a timeout outcome at
// exactly timeout_s. timeout_s <= 0 disables the ceiling.
RetrievalOutcome finalize_with_timeout(RetrievalOutcome outcome, double timeout_s);

// Returns the per-conversation fixture reference, with modeled latency.
class ScriptedOracleBackend : public RetrievalBackend {
  public:
    ScriptedOracleBackend(ReferenceDoc fixture, LatencyModel latency, double timeout_s,
                          Rng rng);
    RetrievalOutcome retrieve(const TranscriptContext& ctx) override;

    void set_fixture(ReferenceDoc fixture) { fixture_ = std::move(fixture); }

  private:
    ReferenceDoc fixture_;
    LatencyModel latency_;
    double timeout_s_;
    Rng rng_;
};

// Canned document regardless of context; latency from the model.
class MockBackend : public RetrievalBackend {
  public:
    MockBackend(std::string document, uint32_t text_vocab, LatencyModel latency,
                double timeout_s, Rng rng);
    RetrievalOutcome retrieve(const TranscriptContext& ctx) override;

  private:
    std::string document_;
    uint32_t text_vocab_;
    LatencyModel latency_;
    double timeout_s_;
    Rng rng_;
};

// Wraps another back end and turns a fraction of outcomes into errors.
class FaultInjector : public RetrievalBackend {
  public:
    FaultInjector(std::unique_ptr<RetrievalBackend> inner, double p_error, Rng rng);
    RetrievalOutcome retrieve(const TranscriptContext& ctx) override;

  private:
    std::unique_ptr<RetrievalBackend> inner_;
    double p_error_;
    Rng rng_;
};

// Sleeps for the inner outcome's modeled latency before returning it, so
// simulated back ends behave like live ones under the realtime engine.
class WallDelayBackend : public RetrievalBackend {
  public:
    explicit WallDelayBackend(std::unique_ptr<RetrievalBackend> inner);
    RetrievalOutcome retrieve(const TranscriptContext& ctx) override;

  private:
    std::unique_ptr<RetrievalBackend> inner_;
};

} // namespace duplexrag
