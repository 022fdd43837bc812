#include "duplexrag/datasynth.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace duplexrag {

using ojson = nlohmann::ordered_json;

uint64_t place_ret(const TimelineTurn& turn) {
    if (!turn.rag)
        throw std::domain_error("turns[" + std::to_string(turn.turn_idx) +
                                "] is not RAG-enabled");
    if (turn.lead_start_frame == 0)
        throw std::domain_error("turns[" + std::to_string(turn.turn_idx) +
                                "]: RET slot would fall before frame 0");
    return turn.lead_start_frame - 1;
}

double training_delay_from(double d_lead_s, double p, double u) {
    if (!(d_lead_s > 0.0))
        throw std::domain_error("d_lead must be > 0");
    if (d_lead_s < 2.0 || p < 0.2)
        return u * d_lead_s; // U(0, d_lead)
    if (d_lead_s == 2.0)
        return 1.0; // the buffered band collapses to a point
    return 1.0 + u * (d_lead_s - 2.0); // U(1.0, d_lead - 1.0)
}

double sample_training_delay(double d_lead_s, Rng& rng) {
    const double p = rng.uniform();
    const double u = rng.uniform();
    return training_delay_from(d_lead_s, p, u);
}

ConversationScript drop_greeting(ConversationScript script, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("datasynth.greeting_drop_p must be in [0, 1]");
    if (script.turns.empty() || script.turns.front().speaker != Speaker::Model ||
        script.turns.front().rag_enabled())
        return script;
    if (!rng.bernoulli(p))
        return script;
    script.turns.erase(script.turns.begin());
    // Explicit alignment indexes turns by position: shift it with the removal.
    std::vector<AlignmentEntry> kept;
    for (AlignmentEntry e : script.alignment) {
        if (e.turn_idx == 0)
            continue;
        --e.turn_idx;
        kept.push_back(e);
    }
    script.alignment = std::move(kept);
    return script;
}

std::vector<float> gate_audio(std::span<const float> samples, int sample_rate_hz,
                              double window_ms, double threshold_dbfs) {
    if (sample_rate_hz <= 0)
        throw std::invalid_argument("sample rate must be > 0");
    if (!(window_ms > 0.0))
        throw std::invalid_argument("gate window must be > 0");

    std::vector<float> out(samples.begin(), samples.end());
    const size_t window =
        std::max<size_t>(1, static_cast<size_t>(sample_rate_hz * window_ms / 1000.0));
    for (size_t start = 0; start < out.size(); start += window) {
        const size_t end = std::min(start + window, out.size());
        double acc = 0.0;
        for (size_t i = start; i < end; ++i)
            acc += static_cast<double>(out[i]) * out[i];
        const double rms = std::sqrt(acc / static_cast<double>(end - start));
        // rms == 0 gives -inf dBFS, which gates.
        if (20.0 * std::log10(rms) < threshold_dbfs)
            std::fill(out.begin() + start, out.begin() + end, 0.0f);
    }
    return out;
}

SynthResult build_training_examples(const ConversationScript& script, const SynthConfig& synth,
                                    const TokenConfig& tokens, const RefEncConfig& refenc,
                                    const TimeBase& tb, uint64_t seed) {
    if (refenc.ratio < 1)
        throw std::domain_error("refenc.ratio must be >= 1");
    if (refenc.p_drop < 0.0 || refenc.p_drop > 1.0)
        throw std::domain_error("refenc.p_drop must be in [0, 1]");

    Rng greet_rng = Rng::derive(seed, script.script_id + "/greeting");
    Rng delay_rng = Rng::derive(seed, script.script_id + "/delay");
    Rng drop_rng = Rng::derive(seed, script.script_id + "/dropout");

    const ConversationScript prepared =
        drop_greeting(script, synth.greeting_drop_p, greet_rng);

    SynthResult result;
    result.timeline = layout_script(prepared, synth.layout, tb, tokens.text_vocab);

    for (const TimelineTurn& turn : result.timeline.turns) {
        if (!turn.rag)
            continue;
        try {
            TrainingExample ex;
            ex.script_id = result.timeline.script_id;
            ex.turn_idx = turn.turn_idx;
            ex.i_ret = place_ret(turn);
            ex.d_lead_s =
                frames_to_seconds(turn.body_onset_frame - turn.lead_start_frame, tb);
            ex.d_prime_s = sample_training_delay(ex.d_lead_s, delay_rng);
            ex.dropout = drop_rng.bernoulli(refenc.p_drop);
            ex.ref_len_tokens = turn.reference.tokens.size();
            const size_t c = static_cast<size_t>(refenc.ratio);
            const size_t l = ex.dropout ? 1 : (ex.ref_len_tokens + c - 1) / c;
            ex.schedule =
                build_injection_schedule(ex.i_ret, ex.d_prime_s, l, tb, InjectionMode::Additive);
            result.examples.push_back(std::move(ex));
        } catch (const std::domain_error& e) {
            const std::string what = e.what();
            if (what.rfind("turns[", 0) == 0)
                throw;
            throw std::domain_error("turns[" + std::to_string(turn.turn_idx) + "]: " + what);
        }
    }

    result.frames =
        render_frames(result.timeline, tokens, voice_seed_for(seed, prepared.script_id));
    return result;
}

std::string training_example_to_json(const TrainingExample& ex) {
    ojson j;
    j["script_id"] = ex.script_id;
    j["turn_idx"] = ex.turn_idx;
    j["i_ret"] = ex.i_ret;
    j["d_lead_s"] = ex.d_lead_s;
    j["d_prime_s"] = ex.d_prime_s;
    j["dropout"] = ex.dropout;
    j["ref_len_tokens"] = ex.ref_len_tokens;
    j["schedule"] = ojson{{"start", ex.schedule.first_frame()}, {"len", ex.schedule.length}};
    return j.dump();
}

void write_dataset_jsonl(std::span<const TrainingExample> examples, std::ostream& out) {
    for (const TrainingExample& ex : examples)
        out << training_example_to_json(ex) << '\n';
}

void write_alignment_jsonl(const ScriptTimeline& timeline, std::ostream& out) {
    for (const TimelineTurn& turn : timeline.turns)
        for (size_t k = 0; k < turn.tokens.size(); ++k)
            out << ojson{{"turn_idx", turn.turn_idx},
                         {"token_idx", k},
                         {"frame", turn.tokens[k].frame}}
                       .dump()
                << '\n';
}

} // namespace duplexrag
