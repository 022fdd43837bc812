#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duplexrag/timebase.hpp"
#include "duplexrag/trace.hpp"

namespace duplexrag {

// ─── Delay metrology ─────────────────────────────────────────────────────────

struct TimedWord {
    std::string word;
    double onset_s = 0.0;
};

struct DelayReport {
    std::string script_id;
    std::optional<double> ttfat_s;
    std::optional<double> kd_s;
    std::optional<double> e2ekd_s;
    std::optional<double> retrieval_delay_s;
    std::optional<bool> constraint_ok;
    bool keyword_missing = false; // a keyword was expected but never spoken
};

// Time of the first audible model frame at or after the user's turn end,
// minus that end. Absent when the model never responds. A full-duplex
// generator already speaking at the boundary yields 0.0.
std::optional<double> ttfat(std::span<const TokenFrame> frames, double user_end_s,
                            const TimeBase& tb);

// Onset of the first word run matching the keyword (case-folded,
// punctuation-stripped; multi-word keywords must match consecutive words) at
// or after `from_s`. Absent when the keyword never occurs.
std::optional<double> keyword_onset(std::span<const TimedWord> words,
                                    const std::string& keyword, double from_s);

// completion - trigger: the settle wait counts against the budget.
double retrieval_delay(const RetrievalJob& job);

// True iff the outcome landed strictly before the body was due.
bool constraint_verdict(const RetrievalJob& job, uint64_t body_onset_frame);

// ─── Keyword extraction ──────────────────────────────────────────────────────

class KeywordExtractor {
  public:
    virtual ~KeywordExtractor() = default;
    // Empty string when no keyword can be established. The result must occur
    // in the response as a token run; measure_trace re-checks this.
    virtual std::string extract(const std::string& question, const std::string& response,
                                std::span<const std::string> aliases) = 0;
};

// First alias (in given order) present in the response.
class AliasKeywordExtractor : public KeywordExtractor {
  public:
    std::string extract(const std::string& question, const std::string& response,
                        std::span<const std::string> aliases) override;
};

// ─── Per-trace measurement ───────────────────────────────────────────────────

DelayReport measure_trace(const ConversationTrace& trace, KeywordExtractor& extractor);

// Report JSONL: one object per conversation, null for absent metrics.
std::string report_to_json(const DelayReport& r);
void write_reports_jsonl(std::span<const DelayReport> reports, std::ostream& out);
std::vector<DelayReport> read_reports_jsonl(std::istream& in, const std::string& name);

// ─── Histogram export ────────────────────────────────────────────────────────
//
// CSV `metric,bin_lo,bin_hi,mass`, one uniform binning per metric over its own
// value range, masses normalized per metric. A degenerate range collapses to
// a single full-mass row. Returns the number of values used per metric.

std::map<std::string, size_t> export_histograms(
    const std::map<std::string, std::vector<double>>& series, int bins, std::ostream& out);

// Collects the present metric values out of a report collection. Throws
// std::invalid_argument when the collection is empty.
std::map<std::string, std::vector<double>> report_series(std::span<const DelayReport> reports);

} // namespace duplexrag
