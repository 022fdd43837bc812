#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "duplexrag/datasynth.hpp"
#include "duplexrag/engine.hpp"
#include "duplexrag/refenc.hpp"
#include "duplexrag/retrieval.hpp"
#include "duplexrag/timebase.hpp"
#include "duplexrag/tokens.hpp"

namespace duplexrag {

// ─── Run configuration ───────────────────────────────────────────────────────

struct BackendConfig {
    std::string kind = "scripted_oracle"; // mock | scripted_oracle | http_llm | http_search
    std::string endpoint;
    std::string template_id;
    double timeout_s = 2.0;
    LatencyModel latency = LatencyModel::fixed(0.8);
    double p_error = 0.0;
    std::string mock_document =
        "the reference service is a stand in that returns this canned passage";
};

struct MetricsConfig {
    int histogram_bins = 20;
    double budget_s = 2.0;
};

struct RunConfig {
    uint64_t seed = 0;
    TimeBase timebase;
    TokenConfig tokens;
    EngineConfig engine;
    BackendConfig backend;
    RefEncConfig refenc;
    SynthConfig datasynth;
    MetricsConfig metrics;
};

// Strict parse: unknown keys anywhere are rejected, and every diagnostic names
// the file and the dotted key. `overrides` are "section.key=value" pairs
// applied onto the document before parsing (values parsed as JSON, falling
// back to strings). The DUPLEXRAG_SEED environment variable, when set,
// replaces the seed after the file but before overrides.
RunConfig parse_config(const std::string& json_text, const std::string& name,
                       std::span<const std::string> overrides = {});
RunConfig load_config(const std::string& path, std::span<const std::string> overrides = {});

void validate(const RunConfig& cfg);

} // namespace duplexrag
