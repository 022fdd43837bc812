#include "duplexrag/trace.hpp"

#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "duplexrag/errors.hpp"

namespace duplexrag {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

const char* to_string(Phase p) {
    switch (p) {
    case Phase::Listening: return "listening";
    case Phase::SpeakingNormal: return "speaking_normal";
    case Phase::SpeakingPreRag: return "speaking_preRAG";
    case Phase::Injecting: return "injecting";
    }
    return "listening";
}

Phase phase_from_string(const std::string& s) {
    if (s == "listening")
        return Phase::Listening;
    if (s == "speaking_normal")
        return Phase::SpeakingNormal;
    if (s == "speaking_preRAG")
        return Phase::SpeakingPreRag;
    if (s == "injecting")
        return Phase::Injecting;
    throw std::invalid_argument("unknown phase \"" + s + "\"");
}

const char* to_string(TraceEvent::Kind k) {
    switch (k) {
    case TraceEvent::Kind::RetTrigger: return "ret_trigger";
    case TraceEvent::Kind::Dispatch: return "dispatch";
    case TraceEvent::Kind::Outcome: return "outcome";
    case TraceEvent::Kind::InjectStart: return "inject_start";
    case TraceEvent::Kind::InjectEnd: return "inject_end";
    }
    return "ret_trigger";
}

TraceEvent::Kind event_kind_from_string(const std::string& s) {
    if (s == "ret_trigger")
        return TraceEvent::Kind::RetTrigger;
    if (s == "dispatch")
        return TraceEvent::Kind::Dispatch;
    if (s == "outcome")
        return TraceEvent::Kind::Outcome;
    if (s == "inject_start")
        return TraceEvent::Kind::InjectStart;
    if (s == "inject_end")
        return TraceEvent::Kind::InjectEnd;
    throw std::invalid_argument("unknown event kind \"" + s + "\"");
}

namespace {

ojson text_token_to_json(const TextToken& t) {
    switch (t.kind) {
    case TextToken::Kind::Pad: return "pad";
    case TextToken::Kind::Ret: return "ret";
    case TextToken::Kind::Word: return t.word_id;
    }
    return "pad";
}

TextToken text_token_from_json(const json& j, const std::string& name) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "pad")
            return TextToken::pad();
        if (s == "ret")
            return TextToken::ret();
        throw std::invalid_argument(name + ": bad model_text value \"" + s + "\"");
    }
    if (j.is_number_unsigned() || j.is_number_integer())
        return TextToken::word(j.get<uint32_t>());
    throw std::invalid_argument(name + ": bad model_text value");
}

ojson event_to_json(const TraceEvent& e) {
    ojson j;
    j["event"] = to_string(e.kind);
    j["frame"] = e.frame;
    j["t_s"] = e.t_s;
    switch (e.kind) {
    case TraceEvent::Kind::RetTrigger:
        if (e.dropped)
            j["dropped"] = true;
        break;
    case TraceEvent::Kind::Outcome:
        j["status"] = e.status;
        if (e.latency_s >= 0.0)
            j["latency_s"] = e.latency_s;
        break;
    case TraceEvent::Kind::InjectStart:
        j["kind"] = e.inject_kind;
        j["len"] = e.inject_len;
        break;
    default:
        break;
    }
    return j;
}

TraceEvent event_from_json(const json& j, const std::string& name) {
    TraceEvent e;
    e.kind = event_kind_from_string(j.at("event").get<std::string>());
    e.frame = j.at("frame").get<uint64_t>();
    e.t_s = j.at("t_s").get<double>();
    if (j.contains("dropped"))
        e.dropped = j["dropped"].get<bool>();
    if (j.contains("status"))
        e.status = j["status"].get<std::string>();
    if (j.contains("latency_s"))
        e.latency_s = j["latency_s"].get<double>();
    if (j.contains("kind"))
        e.inject_kind = j["kind"].get<std::string>();
    if (j.contains("len"))
        e.inject_len = j["len"].get<uint64_t>();
    if (e.kind == TraceEvent::Kind::Outcome && e.status.empty())
        throw std::invalid_argument(name + ": outcome event without status");
    return e;
}

} // namespace

void write_trace_jsonl(const ConversationTrace& trace, std::ostream& out) {
    ojson meta;
    meta["script_id"] = trace.meta.script_id;
    meta["frame_rate_hz"] = trace.meta.frame_rate_hz;
    meta["seed"] = trace.meta.seed;
    meta["mode"] = trace.meta.mode;
    meta["injection"] = trace.meta.injection;
    if (!trace.meta.question.empty())
        meta["question"] = trace.meta.question;
    if (!trace.meta.keyword.empty())
        meta["keyword"] = trace.meta.keyword;
    if (!trace.meta.aliases.empty())
        meta["aliases"] = trace.meta.aliases;
    if (trace.meta.user_end_s)
        meta["user_end_s"] = *trace.meta.user_end_s;
    if (trace.meta.body_onset_frame)
        meta["body_onset_frame"] = *trace.meta.body_onset_frame;
    out << ojson{{"meta", std::move(meta)}}.dump() << '\n';

    size_t ev = 0, ph = 0, wd = 0;
    for (const TokenFrame& f : trace.frames) {
        for (; ev < trace.events.size() && trace.events[ev].frame <= f.frame; ++ev)
            out << event_to_json(trace.events[ev]).dump() << '\n';
        for (; ph < trace.phases.size() && trace.phases[ph].frame <= f.frame; ++ph) {
            ojson j;
            j["phase"] = to_string(trace.phases[ph].phase);
            j["frame"] = trace.phases[ph].frame;
            j["t_s"] = trace.phases[ph].t_s;
            out << j.dump() << '\n';
        }
        ojson j;
        j["frame"] = f.frame;
        j["model_text"] = text_token_to_json(f.model_text);
        j["model_audio"] = f.model_audio;
        j["user_audio"] = f.user_audio;
        if (f.inserted)
            j["inserted"] = true;
        out << j.dump() << '\n';
        for (; wd < trace.words.size() && trace.words[wd].frame <= f.frame; ++wd) {
            ojson w;
            w["word"] = trace.words[wd].word;
            w["frame"] = trace.words[wd].frame;
            w["t_s"] = trace.words[wd].t_s;
            out << w.dump() << '\n';
        }
    }
    for (; ev < trace.events.size(); ++ev)
        out << event_to_json(trace.events[ev]).dump() << '\n';
}

std::string trace_to_jsonl(const ConversationTrace& trace) {
    std::ostringstream out;
    write_trace_jsonl(trace, out);
    return out.str();
}

namespace {

void rebuild_jobs(ConversationTrace& trace) {
    trace.jobs.clear();
    bool open = false;
    RetrievalJob job;
    for (const TraceEvent& e : trace.events) {
        switch (e.kind) {
        case TraceEvent::Kind::RetTrigger:
            if (e.dropped)
                break;
            if (open)
                trace.jobs.push_back(job);
            job = RetrievalJob{};
            job.trigger_frame = e.frame;
            job.trigger_time_s = e.t_s;
            open = true;
            break;
        case TraceEvent::Kind::Dispatch:
            if (open) {
                job.dispatch_frame = e.frame;
                job.dispatched_at_s = e.t_s;
                job.settle_s = e.t_s - job.trigger_time_s;
            }
            break;
        case TraceEvent::Kind::Outcome:
            if (!open)
                break;
            job.completed_frame = e.frame;
            job.completion_time_s = e.t_s;
            job.delivered = true;
            if (e.status == "discarded") {
                job.discarded = true;
            } else if (e.status == "ok") {
                job.outcome.status = RetrievalOutcome::Status::Ok;
            } else if (e.status == "timeout") {
                job.outcome.status = RetrievalOutcome::Status::Timeout;
            } else {
                job.outcome.status = RetrievalOutcome::Status::Error;
            }
            job.outcome.latency_s = e.latency_s >= 0.0 ? e.latency_s : 0.0;
            trace.jobs.push_back(job);
            open = false;
            break;
        default:
            break;
        }
    }
    if (open)
        trace.jobs.push_back(job);
}

} // namespace

ConversationTrace read_trace_jsonl(std::istream& in, const std::string& name) {
    ConversationTrace trace;
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
        try {
            if (j.contains("meta")) {
                const json& m = j["meta"];
                trace.meta.script_id = m.value("script_id", std::string());
                trace.meta.frame_rate_hz = m.value("frame_rate_hz", 12.5);
                trace.meta.seed = m.value("seed", uint64_t{0});
                trace.meta.mode = m.value("mode", std::string("simulated"));
                trace.meta.injection = m.value("injection", std::string("additive"));
                trace.meta.question = m.value("question", std::string());
                trace.meta.keyword = m.value("keyword", std::string());
                if (m.contains("aliases"))
                    trace.meta.aliases = m["aliases"].get<std::vector<std::string>>();
                if (m.contains("user_end_s"))
                    trace.meta.user_end_s = m["user_end_s"].get<double>();
                if (m.contains("body_onset_frame"))
                    trace.meta.body_onset_frame = m["body_onset_frame"].get<uint64_t>();
            } else if (j.contains("event")) {
                trace.events.push_back(event_from_json(j, name));
            } else if (j.contains("phase")) {
                PhaseChange p;
                p.phase = phase_from_string(j.at("phase").get<std::string>());
                p.frame = j.at("frame").get<uint64_t>();
                p.t_s = j.at("t_s").get<double>();
                trace.phases.push_back(p);
            } else if (j.contains("word")) {
                TraceWord w;
                w.word = j.at("word").get<std::string>();
                w.frame = j.at("frame").get<uint64_t>();
                w.t_s = j.at("t_s").get<double>();
                trace.words.push_back(w);
            } else if (j.contains("frame")) {
                TokenFrame f;
                f.frame = j.at("frame").get<uint64_t>();
                f.model_text = text_token_from_json(j.at("model_text"), name);
                f.model_audio = j.at("model_audio").get<std::vector<uint16_t>>();
                f.user_audio = j.at("user_audio").get<std::vector<uint16_t>>();
                if (j.contains("inserted"))
                    f.inserted = j["inserted"].get<bool>();
                trace.frames.push_back(std::move(f));
            } else {
                throw std::invalid_argument("unrecognized record");
            }
        } catch (const json::exception& e) {
            throw std::invalid_argument(name + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(name + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    rebuild_jobs(trace);
    return trace;
}

ConversationTrace load_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open trace file " + path);
    return read_trace_jsonl(in, path);
}

void save_trace_file(const ConversationTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open output file " + path);
    write_trace_jsonl(trace, out);
    if (!out.flush())
        throw std::runtime_error("short write to " + path);
}

Phase phase_at(const ConversationTrace& trace, uint64_t frame) {
    Phase p = Phase::Listening;
    for (const PhaseChange& c : trace.phases) {
        if (c.frame > frame)
            break;
        p = c.phase;
    }
    return p;
}

void validate_trace(const ConversationTrace& trace) {
    for (size_t i = 0; i < trace.frames.size(); ++i)
        if (trace.frames[i].frame != i)
            throw invariant_violation("trace frames are not contiguous at index " +
                                      std::to_string(i));

    for (size_t i = 1; i < trace.events.size(); ++i)
        if (trace.events[i].frame < trace.events[i - 1].frame)
            throw invariant_violation("trace events out of frame order at index " +
                                      std::to_string(i));

    for (size_t i = 1; i < trace.phases.size(); ++i) {
        if (trace.phases[i].frame <= trace.phases[i - 1].frame)
            throw invariant_violation("phase changes out of frame order");
        if (trace.phases[i].phase == trace.phases[i - 1].phase)
            throw invariant_violation("duplicate consecutive phase change at frame " +
                                      std::to_string(trace.phases[i].frame));
    }

    // Injection windows: anchored one frame past the delivery, announced
    // length honored, and the injecting phase active across the window.
    const TraceEvent* outcome = nullptr;
    for (size_t i = 0; i < trace.events.size(); ++i) {
        const TraceEvent& e = trace.events[i];
        if (e.kind == TraceEvent::Kind::Outcome) {
            outcome = e.status == "discarded" ? nullptr : &e;
        } else if (e.kind == TraceEvent::Kind::InjectStart) {
            if (outcome == nullptr)
                throw invariant_violation("inject_start without a preceding outcome at frame " +
                                          std::to_string(e.frame));
            if (e.frame != outcome->frame + 1)
                throw invariant_violation("injection not anchored at completion + 1 (frame " +
                                          std::to_string(e.frame) + ")");
            if (e.inject_len == 0)
                throw invariant_violation("inject_start with zero length at frame " +
                                          std::to_string(e.frame));
            const uint64_t last = e.frame + e.inject_len - 1;
            for (uint64_t f = e.frame; f <= last && f < trace.frames.size(); ++f)
                if (phase_at(trace, f) != Phase::Injecting)
                    throw invariant_violation("injecting phase missing at frame " +
                                              std::to_string(f));
            bool closed = false;
            for (size_t k = i + 1; k < trace.events.size(); ++k) {
                if (trace.events[k].kind == TraceEvent::Kind::InjectEnd) {
                    if (trace.events[k].frame != last)
                        throw invariant_violation("inject_end at frame " +
                                                  std::to_string(trace.events[k].frame) +
                                                  ", window ends at " + std::to_string(last));
                    closed = true;
                    break;
                }
                if (trace.events[k].kind == TraceEvent::Kind::InjectStart)
                    break;
            }
            if (!closed && last < trace.frames.size())
                throw invariant_violation("injection window not closed (start frame " +
                                          std::to_string(e.frame) + ")");
            outcome = nullptr;
        }
    }

    // Accepted triggers enter the pre-retrieval phase at the trigger frame
    // (unless an earlier window is still being injected there).
    for (const TraceEvent& e : trace.events) {
        if (e.kind != TraceEvent::Kind::RetTrigger || e.dropped)
            continue;
        Phase p = phase_at(trace, e.frame);
        if (p != Phase::SpeakingPreRag && p != Phase::Injecting)
            throw invariant_violation("pre-retrieval phase missing at trigger frame " +
                                      std::to_string(e.frame));
    }
}

} // namespace duplexrag
