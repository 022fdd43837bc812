#include "duplexrag/config.hpp"

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace duplexrag {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& name, const std::string& what) {
    throw std::invalid_argument(name + ": " + what);
}

void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<const char*> known, const std::string& name) {
    if (!obj.is_object())
        fail(name, "\"" + (prefix.empty() ? std::string("<top>") : prefix) +
                       "\" must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            ok = ok || it.key() == k;
        if (!ok)
            fail(name, "unknown key \"" + (prefix.empty() ? "" : prefix + ".") + it.key() + "\"");
    }
}

double get_number(const json& obj, const char* key, double dflt, const std::string& prefix,
                  const std::string& name) {
    auto it = obj.find(key);
    if (it == obj.end())
        return dflt;
    if (!it->is_number())
        fail(name, "\"" + prefix + "." + key + "\" must be a number");
    return it->get<double>();
}

int64_t get_integer(const json& obj, const char* key, int64_t dflt, const std::string& prefix,
                    const std::string& name) {
    auto it = obj.find(key);
    if (it == obj.end())
        return dflt;
    if (!it->is_number_integer() && !it->is_number_unsigned())
        fail(name, "\"" + prefix + "." + key + "\" must be an integer");
    return it->get<int64_t>();
}

std::string get_string(const json& obj, const char* key, std::string dflt,
                       const std::string& prefix, const std::string& name) {
    auto it = obj.find(key);
    if (it == obj.end())
        return dflt;
    if (!it->is_string())
        fail(name, "\"" + prefix + "." + key + "\" must be a string");
    return it->get<std::string>();
}

LatencyModel parse_latency(const json& obj, const std::string& name) {
    check_keys(obj, "backend.latency", {"kind", "d_s", "lo_s", "hi_s", "bins"}, name);
    const std::string kind = get_string(obj, "kind", "fixed", "backend.latency", name);
    if (kind == "fixed")
        return LatencyModel::fixed(get_number(obj, "d_s", 0.8, "backend.latency", name));
    if (kind == "uniform")
        return LatencyModel::uniform(get_number(obj, "lo_s", 0.0, "backend.latency", name),
                                     get_number(obj, "hi_s", 0.0, "backend.latency", name));
    if (kind == "histogram") {
        auto it = obj.find("bins");
        if (it == obj.end() || !it->is_array())
            fail(name, "\"backend.latency.bins\" must be an array");
        std::vector<HistogramBin> bins;
        for (const json& jb : *it) {
            check_keys(jb, "backend.latency.bins[]", {"lo_s", "hi_s", "mass"}, name);
            HistogramBin b;
            b.lo_s = get_number(jb, "lo_s", 0.0, "backend.latency.bins[]", name);
            b.hi_s = get_number(jb, "hi_s", 0.0, "backend.latency.bins[]", name);
            b.mass = get_number(jb, "mass", 0.0, "backend.latency.bins[]", name);
            bins.push_back(b);
        }
        return LatencyModel::histogram(std::move(bins));
    }
    fail(name, "\"backend.latency.kind\" must be fixed, uniform, or histogram");
}

void apply_override(json& root, const std::string& assignment, const std::string& name) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        fail(name, "override \"" + assignment + "\" is not of the form key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw; // unquoted strings are taken verbatim
    }
    json* node = &root;
    size_t start = 0;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string part = path.substr(start, dot - start);
        if (part.empty())
            fail(name, "override \"" + assignment + "\" has an empty key segment");
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

} // namespace

RunConfig parse_config(const std::string& json_text, const std::string& name,
                       std::span<const std::string> overrides) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(name, std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object())
        fail(name, "top level must be an object");

    if (const char* env = std::getenv("DUPLEXRAG_SEED")) {
        try {
            size_t used = 0;
            root["seed"] = std::stoull(env, &used);
            if (used != std::string(env).size())
                throw std::invalid_argument("");
        } catch (const std::exception&) {
            fail(name, "DUPLEXRAG_SEED must be an unsigned integer, got \"" +
                           std::string(env) + "\"");
        }
    }
    for (const std::string& o : overrides)
        apply_override(root, o, name);

    check_keys(root,
               "", {"seed", "timebase", "tokens", "engine", "backend", "refenc", "datasynth",
                    "metrics"},
               name);

    RunConfig cfg;
    if (root.contains("seed")) {
        if (!root["seed"].is_number_integer() && !root["seed"].is_number_unsigned())
            fail(name, "\"seed\" must be an integer");
        cfg.seed = root["seed"].get<uint64_t>();
    }

    if (root.contains("timebase")) {
        const json& j = root["timebase"];
        check_keys(j, "timebase", {"frame_rate_hz"}, name);
        cfg.timebase.frame_rate_hz =
            get_number(j, "frame_rate_hz", cfg.timebase.frame_rate_hz, "timebase", name);
    }

    if (root.contains("tokens")) {
        const json& j = root["tokens"];
        check_keys(j, "tokens", {"dim", "q", "text_vocab", "audio_vocab"}, name);
        cfg.tokens.dim = static_cast<int>(get_integer(j, "dim", cfg.tokens.dim, "tokens", name));
        cfg.tokens.q = static_cast<int>(get_integer(j, "q", cfg.tokens.q, "tokens", name));
        cfg.tokens.text_vocab = static_cast<uint32_t>(
            get_integer(j, "text_vocab", cfg.tokens.text_vocab, "tokens", name));
        cfg.tokens.audio_vocab = static_cast<uint32_t>(
            get_integer(j, "audio_vocab", cfg.tokens.audio_vocab, "tokens", name));
    }

    if (root.contains("engine")) {
        const json& j = root["engine"];
        check_keys(j, "engine", {"mode", "injection", "settle_s", "max_inflight", "tail_s"},
                   name);
        const std::string mode = get_string(j, "mode", "simulated", "engine", name);
        if (mode == "simulated")
            cfg.engine.mode = EngineMode::Simulated;
        else if (mode == "realtime")
            cfg.engine.mode = EngineMode::Realtime;
        else
            fail(name, "\"engine.mode\" must be simulated or realtime");
        const std::string injection = get_string(j, "injection", "additive", "engine", name);
        if (injection == "additive")
            cfg.engine.injection = InjectionMode::Additive;
        else if (injection == "insertive")
            cfg.engine.injection = InjectionMode::Insertive;
        else
            fail(name, "\"engine.injection\" must be additive or insertive");
        cfg.engine.settle_s = get_number(j, "settle_s", cfg.engine.settle_s, "engine", name);
        cfg.engine.max_inflight = static_cast<int>(
            get_integer(j, "max_inflight", cfg.engine.max_inflight, "engine", name));
        cfg.engine.tail_s = get_number(j, "tail_s", cfg.engine.tail_s, "engine", name);
    }

    if (root.contains("backend")) {
        const json& j = root["backend"];
        check_keys(j, "backend",
                   {"kind", "endpoint", "template_id", "timeout_s", "latency", "p_error",
                    "mock_document"},
                   name);
        cfg.backend.kind = get_string(j, "kind", cfg.backend.kind, "backend", name);
        cfg.backend.endpoint = get_string(j, "endpoint", "", "backend", name);
        cfg.backend.template_id = get_string(j, "template_id", "", "backend", name);
        cfg.backend.timeout_s =
            get_number(j, "timeout_s", cfg.backend.timeout_s, "backend", name);
        if (j.contains("latency"))
            cfg.backend.latency = parse_latency(j["latency"], name);
        cfg.backend.p_error = get_number(j, "p_error", 0.0, "backend", name);
        cfg.backend.mock_document =
            get_string(j, "mock_document", cfg.backend.mock_document, "backend", name);
    }

    if (root.contains("refenc")) {
        const json& j = root["refenc"];
        check_keys(j, "refenc", {"ratio", "p_drop", "seed"}, name);
        cfg.refenc.ratio =
            static_cast<int>(get_integer(j, "ratio", cfg.refenc.ratio, "refenc", name));
        cfg.refenc.p_drop = get_number(j, "p_drop", cfg.refenc.p_drop, "refenc", name);
        cfg.refenc.seed =
            static_cast<uint64_t>(get_integer(j, "seed", 0, "refenc", name));
    }

    if (root.contains("datasynth")) {
        const json& j = root["datasynth"];
        check_keys(j, "datasynth",
                   {"tokens_per_s", "turn_gap_s", "greeting_drop_p", "gate_window_ms",
                    "gate_threshold_dbfs"},
                   name);
        cfg.datasynth.layout.tokens_per_s =
            get_number(j, "tokens_per_s", cfg.datasynth.layout.tokens_per_s, "datasynth", name);
        cfg.datasynth.layout.turn_gap_s =
            get_number(j, "turn_gap_s", cfg.datasynth.layout.turn_gap_s, "datasynth", name);
        cfg.datasynth.greeting_drop_p =
            get_number(j, "greeting_drop_p", cfg.datasynth.greeting_drop_p, "datasynth", name);
        cfg.datasynth.gate_window_ms =
            get_number(j, "gate_window_ms", cfg.datasynth.gate_window_ms, "datasynth", name);
        cfg.datasynth.gate_threshold_dbfs = get_number(
            j, "gate_threshold_dbfs", cfg.datasynth.gate_threshold_dbfs, "datasynth", name);
    }

    if (root.contains("metrics")) {
        const json& j = root["metrics"];
        check_keys(j, "metrics", {"histogram_bins", "budget_s"}, name);
        cfg.metrics.histogram_bins = static_cast<int>(
            get_integer(j, "histogram_bins", cfg.metrics.histogram_bins, "metrics", name));
        cfg.metrics.budget_s = get_number(j, "budget_s", cfg.metrics.budget_s, "metrics", name);
    }

    try {
        validate(cfg);
    } catch (const std::invalid_argument& e) {
        fail(name, e.what());
    }
    return cfg;
}

RunConfig load_config(const std::string& path, std::span<const std::string> overrides) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path, overrides);
}

void validate(const RunConfig& cfg) {
    validate(cfg.timebase);
    validate(cfg.engine);
    validate(cfg.backend.latency);

    if (cfg.tokens.dim < 1)
        throw std::invalid_argument("tokens.dim must be >= 1");
    if (cfg.tokens.q < 1)
        throw std::invalid_argument("tokens.q must be >= 1");
    if (cfg.tokens.text_vocab < 2)
        throw std::invalid_argument("tokens.text_vocab must be >= 2");
    if (cfg.tokens.audio_vocab < 2)
        throw std::invalid_argument("tokens.audio_vocab must be >= 2");

    if (cfg.backend.kind != "mock" && cfg.backend.kind != "scripted_oracle" &&
        cfg.backend.kind != "http_llm" && cfg.backend.kind != "http_search")
        throw std::invalid_argument(
            "backend.kind must be mock, scripted_oracle, http_llm, or http_search");
    if ((cfg.backend.kind == "http_llm" || cfg.backend.kind == "http_search") &&
        cfg.backend.endpoint.empty())
        throw std::invalid_argument("backend.endpoint is required for HTTP back ends");
    if (cfg.backend.p_error < 0.0 || cfg.backend.p_error > 1.0)
        throw std::invalid_argument("backend.p_error must be in [0, 1]");

    if (cfg.refenc.ratio < 1)
        throw std::invalid_argument("refenc.ratio must be >= 1");
    if (cfg.refenc.p_drop < 0.0 || cfg.refenc.p_drop > 1.0)
        throw std::invalid_argument("refenc.p_drop must be in [0, 1]");

    if (!(cfg.datasynth.layout.tokens_per_s > 0.0))
        throw std::invalid_argument("datasynth.tokens_per_s must be > 0");
    if (cfg.datasynth.layout.tokens_per_s > cfg.timebase.frame_rate_hz)
        throw std::invalid_argument("datasynth.tokens_per_s must not exceed the frame rate");
    if (cfg.datasynth.layout.turn_gap_s < 0.0)
        throw std::invalid_argument("datasynth.turn_gap_s must be >= 0");
    if (cfg.datasynth.greeting_drop_p < 0.0 || cfg.datasynth.greeting_drop_p > 1.0)
        throw std::invalid_argument("datasynth.greeting_drop_p must be in [0, 1]");
    if (!(cfg.datasynth.gate_window_ms > 0.0))
        throw std::invalid_argument("datasynth.gate_window_ms must be > 0");

    if (cfg.metrics.histogram_bins < 1)
        throw std::invalid_argument("metrics.histogram_bins must be >= 1");
    if (cfg.metrics.budget_s < 0.0)
        throw std::invalid_argument("metrics.budget_s must be >= 0");
}

} // namespace duplexrag
