#include "duplexrag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "duplexrag/refenc.hpp"

namespace duplexrag {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

std::optional<double> ttfat(std::span<const TokenFrame> frames, double user_end_s,
                            const TimeBase& tb) {
    for (const TokenFrame& f : frames) {
        const double t = frames_to_seconds(f.frame, tb);
        if (t < user_end_s)
            continue;
        if (model_is_speaking(f))
            return t - user_end_s;
    }
    return std::nullopt;
}

std::optional<double> keyword_onset(std::span<const TimedWord> words,
                                    const std::string& keyword, double from_s) {
    const std::vector<std::string> kw = normalize_words(keyword);
    if (kw.empty())
        return std::nullopt;
    for (size_t i = 0; i < words.size(); ++i) {
        if (words[i].onset_s < from_s)
            continue;
        if (i + kw.size() > words.size())
            break;
        bool match = true;
        for (size_t k = 0; k < kw.size(); ++k) {
            const std::vector<std::string> w = normalize_words(words[i + k].word);
            if (w.size() != 1 || w[0] != kw[k]) {
                match = false;
                break;
            }
        }
        if (match)
            return words[i].onset_s;
    }
    return std::nullopt;
}

double retrieval_delay(const RetrievalJob& job) {
    return job.completion_time_s - job.trigger_time_s;
}

bool constraint_verdict(const RetrievalJob& job, uint64_t body_onset_frame) {
    return job.completed_frame < body_onset_frame;
}

std::string AliasKeywordExtractor::extract(const std::string&, const std::string& response,
                                           std::span<const std::string> aliases) {
    const std::vector<std::string> words = normalize_words(response);
    for (const std::string& alias : aliases) {
        const std::vector<std::string> kw = normalize_words(alias);
        if (kw.empty() || kw.size() > words.size())
            continue;
        for (size_t i = 0; i + kw.size() <= words.size(); ++i) {
            if (std::equal(kw.begin(), kw.end(), words.begin() + i))
                return alias;
        }
    }
    return "";
}

DelayReport measure_trace(const ConversationTrace& trace, KeywordExtractor& extractor) {
    DelayReport r;
    r.script_id = trace.meta.script_id;
    const TimeBase tb{trace.meta.frame_rate_hz};

    if (trace.meta.user_end_s) {
        const double user_end = *trace.meta.user_end_s;
        r.ttfat_s = ttfat(trace.frames, user_end, tb);
        if (r.ttfat_s) {
            const double response_onset = user_end + *r.ttfat_s;
            std::vector<TimedWord> words;
            std::string response;
            for (const TraceWord& w : trace.words) {
                if (w.t_s < response_onset)
                    continue;
                words.push_back({w.word, w.t_s});
                if (!response.empty())
                    response.push_back(' ');
                response += w.word;
            }
            std::vector<std::string> aliases = trace.meta.aliases;
            if (aliases.empty() && !trace.meta.keyword.empty())
                aliases.push_back(trace.meta.keyword);
            if (!aliases.empty()) {
                const std::string kw = extractor.extract(trace.meta.question, response, aliases);
                std::optional<double> onset;
                if (!kw.empty())
                    onset = keyword_onset(words, kw, response_onset);
                if (onset) {
                    r.kd_s = *onset - response_onset;
                    r.e2ekd_s = *onset - user_end;
                } else {
                    r.keyword_missing = true;
                }
            }
        }
    }

    for (const RetrievalJob& job : trace.jobs) {
        if (!job.delivered || job.discarded)
            continue;
        r.retrieval_delay_s = retrieval_delay(job);
        if (trace.meta.body_onset_frame)
            r.constraint_ok = constraint_verdict(job, *trace.meta.body_onset_frame);
        break;
    }
    return r;
}

std::string report_to_json(const DelayReport& r) {
    ojson j;
    j["script_id"] = r.script_id;
    j["ttfat_s"] = r.ttfat_s ? ojson(*r.ttfat_s) : ojson(nullptr);
    j["kd_s"] = r.kd_s ? ojson(*r.kd_s) : ojson(nullptr);
    j["e2ekd_s"] = r.e2ekd_s ? ojson(*r.e2ekd_s) : ojson(nullptr);
    j["retrieval_delay_s"] = r.retrieval_delay_s ? ojson(*r.retrieval_delay_s) : ojson(nullptr);
    j["constraint_ok"] = r.constraint_ok ? ojson(*r.constraint_ok) : ojson(nullptr);
    if (r.keyword_missing)
        j["keyword_missing"] = true;
    return j.dump();
}

void write_reports_jsonl(std::span<const DelayReport> reports, std::ostream& out) {
    for (const DelayReport& r : reports)
        out << report_to_json(r) << '\n';
}

std::vector<DelayReport> read_reports_jsonl(std::istream& in, const std::string& name) {
    std::vector<DelayReport> reports;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::invalid_argument(name + ":" + std::to_string(lineno) +
                                        ": invalid JSON: " + e.what());
        }
        DelayReport r;
        r.script_id = j.value("script_id", std::string());
        auto opt = [&](const char* key) -> std::optional<double> {
            if (!j.contains(key) || j[key].is_null())
                return std::nullopt;
            return j[key].get<double>();
        };
        r.ttfat_s = opt("ttfat_s");
        r.kd_s = opt("kd_s");
        r.e2ekd_s = opt("e2ekd_s");
        r.retrieval_delay_s = opt("retrieval_delay_s");
        if (j.contains("constraint_ok") && !j["constraint_ok"].is_null())
            r.constraint_ok = j["constraint_ok"].get<bool>();
        r.keyword_missing = j.value("keyword_missing", false);
        reports.push_back(std::move(r));
    }
    return reports;
}

namespace {

std::string csv_number(double v) {
    return ojson(v).dump();
}

} // namespace

std::map<std::string, size_t> export_histograms(
    const std::map<std::string, std::vector<double>>& series, int bins, std::ostream& out) {
    if (bins < 1)
        throw std::invalid_argument("histogram bin count must be >= 1");
    bool any = false;
    for (const auto& [_, values] : series)
        any = any || !values.empty();
    if (!any)
        throw std::invalid_argument("histogram export needs at least one value");

    out << "metric,bin_lo,bin_hi,mass\n";
    std::map<std::string, size_t> counts;
    for (const auto& [metric, values] : series) {
        if (values.empty())
            continue;
        counts[metric] = values.size();
        const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
        const double lo = *mn, hi = *mx;
        if (lo == hi) {
            out << metric << ',' << csv_number(lo) << ',' << csv_number(hi) << ",1\n";
            continue;
        }
        std::vector<size_t> tally(bins, 0);
        for (double v : values) {
            auto idx = static_cast<size_t>((v - lo) / (hi - lo) * bins);
            if (idx >= static_cast<size_t>(bins))
                idx = bins - 1; // v == hi lands in the last bin
            ++tally[idx];
        }
        const double n = static_cast<double>(values.size());
        for (int b = 0; b < bins; ++b) {
            const double blo = lo + (hi - lo) * b / bins;
            const double bhi = lo + (hi - lo) * (b + 1) / bins;
            out << metric << ',' << csv_number(blo) << ',' << csv_number(bhi) << ','
                << csv_number(tally[b] / n) << '\n';
        }
    }
    return counts;
}

std::map<std::string, std::vector<double>> report_series(std::span<const DelayReport> reports) {
    if (reports.empty())
        throw std::invalid_argument("histogram export needs at least one report");
    std::map<std::string, std::vector<double>> series;
    for (const DelayReport& r : reports) {
        if (r.ttfat_s)
            series["ttfat_s"].push_back(*r.ttfat_s);
        if (r.kd_s)
            series["kd_s"].push_back(*r.kd_s);
        if (r.e2ekd_s)
            series["e2ekd_s"].push_back(*r.e2ekd_s);
        if (r.retrieval_delay_s)
            series["retrieval_delay_s"].push_back(*r.retrieval_delay_s);
    }
    return series;
}

} // namespace duplexrag
