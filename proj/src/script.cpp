#include "duplexrag/script.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "duplexrag/refenc.hpp"
#include "duplexrag/rng.hpp"

namespace duplexrag {

using nlohmann::json;

ScriptVariant variant_from_string(const std::string& s) {
    if (s == "v1")
        return ScriptVariant::V1;
    if (s == "v2")
        return ScriptVariant::V2;
    if (s == "v3")
        return ScriptVariant::V3;
    if (s == "single_turn")
        return ScriptVariant::SingleTurn;
    throw std::invalid_argument("unknown script variant \"" + s + "\"");
}

const char* to_string(ScriptVariant v) {
    switch (v) {
    case ScriptVariant::V1: return "v1";
    case ScriptVariant::V2: return "v2";
    case ScriptVariant::V3: return "v3";
    case ScriptVariant::SingleTurn: return "single_turn";
    }
    return "v1";
}

namespace {

[[noreturn]] void fail(const std::string& name, const std::string& what) {
    throw std::invalid_argument(name + ": " + what);
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const std::string& name, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return it.key() == k; }) == known.end())
            fail(name, "unknown key \"" + where + it.key() + "\"");
    }
}

std::string get_string(const json& obj, const char* key, const std::string& name,
                       const std::string& where, const std::string& dflt = "") {
    auto it = obj.find(key);
    if (it == obj.end())
        return dflt;
    if (!it->is_string())
        fail(name, "\"" + where + key + "\" must be a string");
    return it->get<std::string>();
}

} // namespace

ConversationScript parse_script(const std::string& json_text, const std::string& name) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(name, std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object())
        fail(name, "top level must be an object");
    reject_unknown_keys(root, {"script_id", "topic", "variant", "turns", "alignment"}, name, "");

    ConversationScript script;
    script.script_id = get_string(root, "script_id", name, "");
    script.topic = get_string(root, "topic", name, "");
    if (root.contains("variant")) {
        try {
            script.variant = variant_from_string(get_string(root, "variant", name, ""));
        } catch (const std::invalid_argument& e) {
            fail(name, std::string("\"variant\": ") + e.what());
        }
    }

    if (!root.contains("turns") || !root["turns"].is_array() || root["turns"].empty())
        fail(name, "\"turns\" must be a non-empty array");

    size_t idx = 0;
    for (const json& jt : root["turns"]) {
        const std::string where = "turns[" + std::to_string(idx) + "].";
        if (!jt.is_object())
            fail(name, "\"turns[" + std::to_string(idx) + "]\" must be an object");
        reject_unknown_keys(
            jt, {"speaker", "text", "lead", "body", "tail", "reference", "keyword", "aliases"},
            name, where);

        ScriptTurn turn;
        std::string speaker = get_string(jt, "speaker", name, where);
        if (speaker == "user")
            turn.speaker = Speaker::User;
        else if (speaker == "model")
            turn.speaker = Speaker::Model;
        else
            fail(name, "\"" + where + "speaker\" must be \"user\" or \"model\"");

        turn.text = get_string(jt, "text", name, where);
        turn.lead = get_string(jt, "lead", name, where);
        turn.body = get_string(jt, "body", name, where);
        turn.tail = get_string(jt, "tail", name, where);
        turn.reference = get_string(jt, "reference", name, where);
        turn.keyword = get_string(jt, "keyword", name, where);
        if (jt.contains("aliases")) {
            if (!jt["aliases"].is_array())
                fail(name, "\"" + where + "aliases\" must be an array of strings");
            for (const json& a : jt["aliases"]) {
                if (!a.is_string())
                    fail(name, "\"" + where + "aliases\" must be an array of strings");
                turn.aliases.push_back(a.get<std::string>());
            }
        }
        if (turn.aliases.empty() && !turn.keyword.empty())
            turn.aliases.push_back(turn.keyword);

        if (!turn.reference.empty()) {
            if (turn.speaker != Speaker::Model)
                fail(name, "\"" + where + "reference\" is only valid on model turns");
            if (turn.lead.empty() || turn.body.empty())
                fail(name, "\"" + where + "lead\" and \"" + where +
                               "body\" are required with a reference");
        } else {
            if (!turn.lead.empty() || !turn.body.empty() || !turn.tail.empty())
                fail(name, "\"" + where + "lead/body/tail\" require a reference");
            if (turn.text.empty())
                fail(name, "\"" + where + "text\" must be non-empty");
        }
        script.turns.push_back(std::move(turn));
        ++idx;
    }

    if (root.contains("alignment")) {
        if (!root["alignment"].is_array())
            fail(name, "\"alignment\" must be an array");
        size_t aidx = 0;
        for (const json& ja : root["alignment"]) {
            const std::string where = "alignment[" + std::to_string(aidx) + "]";
            if (!ja.is_object() || !ja.contains("turn_idx") || !ja.contains("token_idx") ||
                !ja.contains("frame"))
                fail(name, "\"" + where + "\" needs turn_idx, token_idx, frame");
            reject_unknown_keys(ja, {"turn_idx", "token_idx", "frame"}, name, where + ".");
            AlignmentEntry e;
            e.turn_idx = ja["turn_idx"].get<size_t>();
            e.token_idx = ja["token_idx"].get<size_t>();
            e.frame = ja["frame"].get<uint64_t>();
            script.alignment.push_back(e);
            ++aidx;
        }
    }

    if (script.script_id.empty())
        script.script_id = name;
    return script;
}

ConversationScript load_script_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open script file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_script(buf.str(), path);
}

double TimelineTurn::end_time_s(const TimeBase& tb) const {
    return frames_to_seconds(end_frame + 1, tb);
}

std::string TimelineTurn::joined_text() const {
    std::string out;
    for (const AlignedToken& t : tokens) {
        if (!out.empty())
            out.push_back(' ');
        out += t.word;
    }
    return out;
}

const TimelineTurn* ScriptTimeline::first_rag_turn() const {
    for (const TimelineTurn& t : turns)
        if (t.rag)
            return &t;
    return nullptr;
}

namespace {

void append_words(std::vector<AlignedToken>& out, const std::string& text, SegmentKind seg,
                  uint32_t text_vocab) {
    for (std::string& w : normalize_words(text)) {
        AlignedToken t;
        t.word_id = word_token_id(w, text_vocab);
        t.word = std::move(w);
        t.segment = seg;
        out.push_back(std::move(t));
    }
}

} // namespace

ScriptTimeline layout_script(const ConversationScript& script, const LayoutConfig& layout,
                             const TimeBase& tb, uint32_t text_vocab) {
    validate(tb);
    if (!(layout.tokens_per_s > 0.0))
        throw std::invalid_argument(script.script_id + ": tokens_per_s must be > 0");
    const double frames_per_token = tb.frame_rate_hz / layout.tokens_per_s;
    if (frames_per_token < 1.0)
        throw std::invalid_argument(script.script_id +
                                    ": tokens_per_s must not exceed the frame rate");
    if (layout.turn_gap_s < 0.0)
        throw std::invalid_argument(script.script_id + ": turn_gap_s must be >= 0");
    const uint64_t gap = seconds_to_frames(layout.turn_gap_s, tb);

    ScriptTimeline tl;
    tl.script_id = script.script_id;
    tl.tb = tb;

    uint64_t cursor = gap;
    size_t idx = 0;
    for (const ScriptTurn& st : script.turns) {
        TimelineTurn turn;
        turn.speaker = st.speaker;
        turn.turn_idx = idx;
        turn.rag = st.rag_enabled();
        if (turn.rag) {
            append_words(turn.tokens, st.lead, SegmentKind::Lead, text_vocab);
            append_words(turn.tokens, st.body, SegmentKind::Body, text_vocab);
            append_words(turn.tokens, st.tail, SegmentKind::Tail, text_vocab);
            turn.reference = ReferenceDoc::from_text(st.reference, text_vocab);
            turn.keyword = st.keyword;
            turn.aliases = st.aliases;
        } else {
            append_words(turn.tokens, st.text, SegmentKind::Plain, text_vocab);
        }
        if (turn.tokens.empty())
            throw std::invalid_argument(script.script_id + ": turns[" + std::to_string(idx) +
                                        "] has no tokens");
        for (size_t k = 0; k < turn.tokens.size(); ++k)
            turn.tokens[k].frame =
                cursor + round_half_even(static_cast<double>(k) * frames_per_token);
        tl.turns.push_back(std::move(turn));
        cursor = tl.turns.back().tokens.back().frame + 1 + gap;
        ++idx;
    }

    for (const AlignmentEntry& e : script.alignment) {
        if (e.turn_idx >= tl.turns.size())
            throw std::invalid_argument(script.script_id + ": alignment turn_idx " +
                                        std::to_string(e.turn_idx) + " out of range");
        auto& tokens = tl.turns[e.turn_idx].tokens;
        if (e.token_idx >= tokens.size())
            throw std::invalid_argument(script.script_id + ": alignment token_idx " +
                                        std::to_string(e.token_idx) + " out of range in turns[" +
                                        std::to_string(e.turn_idx) + "]");
        tokens[e.token_idx].frame = e.frame;
    }

    uint64_t last = 0;
    for (TimelineTurn& turn : tl.turns) {
        for (size_t k = 1; k < turn.tokens.size(); ++k)
            if (turn.tokens[k].frame <= turn.tokens[k - 1].frame)
                throw std::invalid_argument(
                    script.script_id + ": turns[" + std::to_string(turn.turn_idx) +
                    "] token frames must be strictly increasing");
        turn.start_frame = turn.tokens.front().frame;
        turn.end_frame = turn.tokens.back().frame;
        if (turn.rag) {
            turn.lead_start_frame = turn.start_frame;
            for (const AlignedToken& t : turn.tokens)
                if (t.segment == SegmentKind::Body) {
                    turn.body_onset_frame = t.frame;
                    break;
                }
        }
        last = std::max(last, turn.end_frame);
    }
    tl.total_frames = last + 1 + gap;
    return tl;
}

uint64_t voice_seed_for(uint64_t seed, const std::string& script_id) {
    return splitmix64(seed ^ fnv1a64(script_id + "/voice"));
}

uint16_t synthetic_audio_id(uint64_t voice_seed, Role role, uint64_t frame, int layer,
                            uint32_t audio_vocab) {
    if (audio_vocab <= 1)
        return kSilenceAudioId;
    uint64_t key = splitmix64((frame << 9) ^ (static_cast<uint64_t>(layer) << 1) ^
                              static_cast<uint64_t>(role));
    key = splitmix64(voice_seed + key);
    return static_cast<uint16_t>(1 + key % (audio_vocab - 1));
}

std::vector<TokenFrame> render_frames(const ScriptTimeline& timeline, const TokenConfig& cfg,
                                      uint64_t voice_seed) {
    std::vector<TokenFrame> out(timeline.total_frames);
    for (uint64_t i = 0; i < timeline.total_frames; ++i) {
        out[i].frame = i;
        out[i].model_audio.assign(cfg.q, kSilenceAudioId);
        out[i].user_audio.assign(cfg.q, kSilenceAudioId);
    }
    for (const TimelineTurn& turn : timeline.turns) {
        const Role role = turn.speaker == Speaker::Model ? Role::Model : Role::User;
        for (uint64_t f = turn.start_frame; f <= turn.end_frame && f < out.size(); ++f) {
            auto& ids = role == Role::Model ? out[f].model_audio : out[f].user_audio;
            for (int layer = 0; layer < cfg.q; ++layer)
                ids[layer] = synthetic_audio_id(voice_seed, role, f, layer, cfg.audio_vocab);
        }
        if (turn.speaker == Speaker::Model) {
            for (const AlignedToken& t : turn.tokens)
                if (t.frame < out.size())
                    out[t.frame].model_text = TextToken::word(t.word_id);
            if (turn.rag) {
                if (turn.lead_start_frame == 0)
                    throw std::domain_error(timeline.script_id +
                                            ": RET slot would fall before frame 0");
                // Replaces whatever text token precedes the lead (normally PAD).
                out[turn.lead_start_frame - 1].model_text = TextToken::ret();
            }
        }
    }
    return out;
}

std::vector<bool> model_turn_end_flags(const ScriptTimeline& timeline, size_t total_frames) {
    std::vector<bool> flags(total_frames, false);
    for (const TimelineTurn& turn : timeline.turns)
        if (turn.speaker == Speaker::Model && turn.end_frame < total_frames)
            flags[turn.end_frame] = true;
    return flags;
}

TranscriptContext transcript_until(const ScriptTimeline& timeline, double cutoff_s) {
    TranscriptContext ctx;
    ctx.cutoff_time_s = cutoff_s;
    for (const TimelineTurn& turn : timeline.turns) {
        TranscriptTurn tt;
        tt.speaker = turn.speaker;
        uint64_t last = 0;
        for (const AlignedToken& t : turn.tokens) {
            if (frames_to_seconds(t.frame, timeline.tb) > cutoff_s)
                break;
            if (!tt.text.empty())
                tt.text.push_back(' ');
            tt.text += t.word;
            last = t.frame;
        }
        if (tt.text.empty())
            continue;
        tt.end_time_s = frames_to_seconds(last + 1, timeline.tb);
        ctx.turns.push_back(std::move(tt));
    }
    return ctx;
}

} // namespace duplexrag
