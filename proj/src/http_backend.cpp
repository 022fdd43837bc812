#include "duplexrag/http_backend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

namespace duplexrag {

using nlohmann::json;

HttpEndpoint HttpEndpoint::parse(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("backend.endpoint must look like http://host:port/path");
    auto path_start = url.find('/', scheme_end + 3);
    HttpEndpoint ep;
    if (path_start == std::string::npos) {
        ep.base = url;
        ep.path = "/";
    } else {
        ep.base = url.substr(0, path_start);
        ep.path = url.substr(path_start);
    }
    return ep;
}

namespace {

json transcript_json(const TranscriptContext& ctx) {
    json turns = json::array();
    for (const auto& t : ctx.turns)
        turns.push_back({{"speaker", t.speaker == Speaker::User ? "user" : "model"},
                         {"text", t.text}});
    return turns;
}

void apply_timeouts(httplib::Client& cli, double timeout_s) {
    if (timeout_s <= 0.0)
        return;
    auto whole = static_cast<time_t>(timeout_s);
    auto usec = static_cast<time_t>((timeout_s - static_cast<double>(whole)) * 1e6);
    cli.set_connection_timeout(whole, usec);
    cli.set_read_timeout(whole, usec);
    cli.set_write_timeout(whole, usec);
}

struct TimedPost {
    httplib::Result result;
    double elapsed_s = 0.0;
};

TimedPost timed_post(const HttpEndpoint& endpoint, const std::string& body, double timeout_s) {
    httplib::Client cli(endpoint.base);
    apply_timeouts(cli, timeout_s);
    auto start = std::chrono::steady_clock::now();
    auto res = cli.Post(endpoint.path, body, "application/json");
    std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    return {std::move(res), elapsed.count()};
}

} // namespace

RetrievalOutcome http_retrieve(const HttpEndpoint& endpoint, const TranscriptContext& ctx,
                               const std::string& template_id, double timeout_s) {
    if (ctx.empty())
        return RetrievalOutcome::error("empty transcript context", 0.0);

    json request = {{"transcript", transcript_json(ctx)}};
    if (!template_id.empty())
        request["template_id"] = template_id;

    auto [res, elapsed] = timed_post(endpoint, request.dump(), timeout_s);

    if (!res) {
        if (timeout_s > 0.0 && elapsed >= timeout_s)
            return RetrievalOutcome::timeout(timeout_s);
        return RetrievalOutcome::error(httplib::to_string(res.error()), elapsed);
    }
    if (timeout_s > 0.0 && elapsed > timeout_s)
        return RetrievalOutcome::timeout(timeout_s);
    if (res->status < 200 || res->status >= 300)
        return RetrievalOutcome::error("HTTP status " + std::to_string(res->status), elapsed);

    json body = json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.contains("reference") || !body["reference"].is_string())
        return RetrievalOutcome::error("malformed response body", elapsed);

    ReferenceDoc doc;
    doc.text = body["reference"].get<std::string>();
    RetrievalOutcome out = RetrievalOutcome::success(std::move(doc), elapsed);
    return out;
}

RetrievalOutcome http_llm_retrieve(const HttpEndpoint& endpoint, const TranscriptContext& ctx,
                                   const std::string& template_id, double timeout_s,
                                   uint32_t text_vocab) {
    RetrievalOutcome out = http_retrieve(endpoint, ctx, template_id, timeout_s);
    if (out.ok())
        out.doc = ReferenceDoc::from_text(out.doc.text, text_vocab);
    return out;
}

RetrievalOutcome http_search_retrieve(const HttpEndpoint& endpoint,
                                      const TranscriptContext& ctx, double timeout_s,
                                      uint32_t text_vocab) {
    return http_llm_retrieve(endpoint, ctx, "", timeout_s, text_vocab);
}

std::string render_prompt(const std::string& prompt_template, const TranscriptContext& ctx) {
    std::string transcript;
    for (const auto& t : ctx.turns) {
        transcript += t.speaker == Speaker::User ? "User: " : "Model: ";
        transcript += t.text;
        transcript += '\n';
    }
    const std::string placeholder = "[TRANSCRIPT]";
    auto pos = prompt_template.find(placeholder);
    if (pos == std::string::npos)
        return prompt_template + "\n" + transcript;
    std::string out = prompt_template;
    out.replace(pos, placeholder.size(), transcript);
    return out;
}

HttpBackend::HttpBackend(std::string endpoint_url, std::string template_id, double timeout_s,
                         uint32_t text_vocab)
    : endpoint_(HttpEndpoint::parse(endpoint_url)), template_id_(std::move(template_id)),
      timeout_s_(timeout_s), text_vocab_(text_vocab) {}

RetrievalOutcome HttpBackend::retrieve(const TranscriptContext& ctx) {
    return http_llm_retrieve(endpoint_, ctx, template_id_, timeout_s_, text_vocab_);
}

std::string http_extract_keyword(const HttpEndpoint& endpoint, const std::string& question,
                                 const std::string& response_text,
                                 const std::vector<std::string>& aliases,
                                 const std::string& template_id, double timeout_s) {
    json request = {{"question", question},
                    {"response", response_text},
                    {"aliases", aliases}};
    if (!template_id.empty())
        request["template_id"] = template_id;

    auto [res, elapsed] = timed_post(endpoint, request.dump(), timeout_s);
    (void)elapsed;
    if (!res || res->status < 200 || res->status >= 300)
        return {};
    json body = json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.contains("keyword") || !body["keyword"].is_string())
        return {};
    return body["keyword"].get<std::string>();
}

LatencyStats percentile_stats(std::vector<double> samples_s, size_t failures) {
    LatencyStats stats;
    stats.failures = failures;
    stats.n = samples_s.size();
    if (samples_s.empty())
        return stats;
    std::sort(samples_s.begin(), samples_s.end());
    double sum = 0.0;
    for (double s : samples_s)
        sum += s;
    stats.mean_s = sum / static_cast<double>(samples_s.size());
    auto pick = [&](double q) {
        size_t idx = static_cast<size_t>(std::ceil(q * static_cast<double>(samples_s.size()))) ;
        idx = idx == 0 ? 0 : idx - 1;
        return samples_s[std::min(idx, samples_s.size() - 1)];
    };
    stats.p50_s = pick(0.50);
    stats.p90_s = pick(0.90);
    stats.p99_s = pick(0.99);
    stats.samples_s = std::move(samples_s);
    return stats;
}

LatencyStats bench_backend(const HttpEndpoint& endpoint, const std::string& template_id,
                           size_t n, double timeout_s) {
    TranscriptContext probe;
    probe.turns.push_back({Speaker::User, "latency probe", 0.0});
    probe.cutoff_time_s = 0.0;

    std::vector<double> samples;
    size_t failures = 0;
    for (size_t i = 0; i < n; ++i) {
        RetrievalOutcome out = http_retrieve(endpoint, probe, template_id, timeout_s);
        if (out.ok())
            samples.push_back(out.latency_s);
        else
            ++failures;
    }
    return percentile_stats(std::move(samples), failures);
}

} // namespace duplexrag
