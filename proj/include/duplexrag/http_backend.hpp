#pragma once

#include <string>
#include <vector>

#include "duplexrag/retrieval.hpp"

namespace duplexrag {

// ─── HTTP retrieval clients ──────────────────────────────────────────────────
//
// Wire contract (POST, JSON):
//   request:  {"transcript":[{"speaker":"user|model","text":"..."}],"template_id":"..."}
//   response: {"reference":"..."}
// Wall-clock latency is recorded; network failures, non-2xx statuses and
// malformed bodies come back as error outcomes, exceeding the budget as a
// timeout outcome at exactly timeout_s.

struct HttpEndpoint {
    std::string base;     // scheme://host:port
    std::string path;     // /retrieve

    // Accepts "http://host:port/path"; path defaults to "/".
    static HttpEndpoint parse(const std::string& url);
};

RetrievalOutcome http_retrieve(const HttpEndpoint& endpoint, const TranscriptContext& ctx,
                               const std::string& template_id, double timeout_s);

// LLM-prompted retrieval: the template is an opaque text file shipped to the
// server by id; the server owns the rendering.
RetrievalOutcome http_llm_retrieve(const HttpEndpoint& endpoint, const TranscriptContext& ctx,
                                   const std::string& template_id, double timeout_s,
                                   uint32_t text_vocab);

// Web-search retrieval: same wire contract, no prompt template.
RetrievalOutcome http_search_retrieve(const HttpEndpoint& endpoint,
                                      const TranscriptContext& ctx, double timeout_s,
                                      uint32_t text_vocab);

// Renders a transcript into a single prompt string by substituting the
// [TRANSCRIPT] placeholder (appended when the placeholder is missing).
std::string render_prompt(const std::string& prompt_template, const TranscriptContext& ctx);

// RetrievalBackend adapter around the HTTP clients (live mode).
class HttpBackend : public RetrievalBackend {
  public:
    HttpBackend(std::string endpoint_url, std::string template_id, double timeout_s,
                uint32_t text_vocab);
    RetrievalOutcome retrieve(const TranscriptContext& ctx) override;

  private:
    HttpEndpoint endpoint_;
    std::string template_id_;
    double timeout_s_;
    uint32_t text_vocab_;
};

// ─── Judge client and latency probe ──────────────────────────────────────────

// Live keyword extraction: POST {"question","response","aliases","template_id"}
// to the judge endpoint, reply {"keyword":"..."}. Returns empty on failure.
std::string http_extract_keyword(const HttpEndpoint& endpoint, const std::string& question,
                                 const std::string& response_text,
                                 const std::vector<std::string>& aliases,
                                 const std::string& template_id, double timeout_s);

struct LatencyStats {
    size_t n = 0;
    size_t failures = 0;
    double mean_s = 0.0;
    double p50_s = 0.0;
    double p90_s = 0.0;
    double p99_s = 0.0;
    std::vector<double> samples_s;
};

LatencyStats percentile_stats(std::vector<double> samples_s, size_t failures = 0);

// Fires n sequential requests at the endpoint and reports wall latencies.
LatencyStats bench_backend(const HttpEndpoint& endpoint, const std::string& template_id,
                           size_t n, double timeout_s);

} // namespace duplexrag
