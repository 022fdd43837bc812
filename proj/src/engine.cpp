#include "duplexrag/engine.hpp"

#include <chrono>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>

#include "duplexrag/errors.hpp"

namespace duplexrag {

const char* to_string(EngineMode m) {
    return m == EngineMode::Realtime ? "realtime" : "simulated";
}

const char* to_string(InjectionMode m) {
    return m == InjectionMode::Insertive ? "insertive" : "additive";
}

uint64_t InjectionSchedule::ref_index(uint64_t i) const {
    if (!contains(i))
        throw invariant_violation("frame " + std::to_string(i) +
                                  " is outside the injection window");
    return i - anchor();
}

InjectionSchedule build_injection_schedule(uint64_t i_ret, double delay_s, size_t ref_len,
                                           const TimeBase& tb, InjectionMode mode) {
    if (delay_s < 0.0)
        throw std::domain_error("injection delay must be >= 0");
    InjectionSchedule s;
    s.i_ret = i_ret;
    s.delay_frames = seconds_to_frames(delay_s, tb);
    s.length = ref_len;
    s.mode = mode;
    return s;
}

StepInput effective_input(const StepInput& h, const InjectionSchedule& schedule,
                          const ReferenceEmbedding& ref, uint64_t i) {
    if (!schedule.contains(i))
        return h;
    const uint64_t k = schedule.ref_index(i);
    if (k > ref.length())
        throw invariant_violation("injection window indexes past the reference (k=" +
                                  std::to_string(k) + ", l=" + std::to_string(ref.length()) +
                                  ")");
    const auto& v = ref.vectors[k - 1];
    if (h.h.size() != v.size())
        throw invariant_violation("reference vector dimension mismatch");
    StepInput out = h;
    for (size_t d = 0; d < v.size(); ++d)
        out.h[d] += v[d];
    return out;
}

ScriptedGenerator::ScriptedGenerator(const ScriptTimeline& timeline, const TokenConfig& cfg,
                                     uint64_t voice_seed)
    : rendered_(render_frames(timeline, cfg, voice_seed)),
      turn_end_(model_turn_end_flags(timeline, rendered_.size())), q_(cfg.q) {
    words_.resize(rendered_.size());
    for (const TimelineTurn& t : timeline.turns)
        if (t.speaker == Speaker::Model)
            for (const AlignedToken& tok : t.tokens)
                if (tok.frame < words_.size())
                    words_[tok.frame] = tok.word;
}

GeneratorStep ScriptedGenerator::step(const StepInput&, FrameIndex) {
    GeneratorStep out;
    if (cursor_ < rendered_.size()) {
        out.text = rendered_[cursor_].model_text;
        out.audio = rendered_[cursor_].model_audio;
        out.word = words_[cursor_];
        out.model_turn_end = turn_end_[cursor_];
    } else {
        out.audio.assign(q_, kSilenceAudioId);
    }
    ++cursor_;
    return out;
}

void validate(const EngineConfig& cfg) {
    if (cfg.settle_s < 0.0)
        throw std::invalid_argument("engine.settle_s must be >= 0");
    if (cfg.max_inflight != 1)
        throw std::invalid_argument("engine.max_inflight must be 1");
    if (cfg.tail_s < 0.0)
        throw std::invalid_argument("engine.tail_s must be >= 0");
}

namespace {

using Clock = std::chrono::steady_clock;

Clock::time_point wall_at(Clock::time_point t0, double seconds) {
    return t0 + std::chrono::duration_cast<Clock::duration>(
                    std::chrono::duration<double>(seconds));
}

struct ActiveJob {
    size_t index = 0;           // into trace.jobs
    uint64_t deliver_frame = 0; // simulated mode
    RetrievalOutcome outcome;   // simulated mode: precomputed at trigger
    size_t epoch = 0;
    bool dispatch_logged = false;
};

struct Worker {
    std::thread th;
    std::mutex mu;
    bool done = false;
    RetrievalOutcome outcome;
};

} // namespace

ConversationTrace run_conversation(Generator& gen, std::span<const TokenFrame> user_feed,
                                   RetrievalBackend& backend, const EngineContext& ctx) {
    validate(ctx.tb);
    validate(ctx.cfg);
    if (ctx.tables == nullptr || ctx.proj == nullptr || ctx.dropout == nullptr)
        throw std::invalid_argument("engine context is missing tables, projection, or dropout");
    if (ctx.ref_ratio < 1)
        throw std::invalid_argument("refenc.ratio must be >= 1");
    const int q = ctx.tokens.q;
    for (const TokenFrame& f : user_feed)
        if (static_cast<int>(f.user_audio.size()) != q)
            throw std::invalid_argument("user feed entry has wrong audio layer count");

    const bool realtime = ctx.cfg.mode == EngineMode::Realtime;
    const double period = ctx.tb.frame_period_s();

    ConversationTrace trace;
    trace.meta.frame_rate_hz = ctx.tb.frame_rate_hz;
    trace.meta.seed = ctx.seed;
    trace.meta.mode = to_string(ctx.cfg.mode);
    trace.meta.injection = to_string(ctx.cfg.injection);
    if (ctx.timeline != nullptr) {
        trace.meta.script_id = ctx.timeline->script_id;
        const TimelineTurn* measured = ctx.timeline->first_rag_turn();
        if (measured == nullptr) {
            bool seen_user = false;
            for (const TimelineTurn& t : ctx.timeline->turns) {
                if (t.speaker == Speaker::User) {
                    seen_user = true;
                } else if (seen_user) {
                    measured = &t;
                    break;
                }
            }
        }
        if (measured != nullptr) {
            const TimelineTurn* before = nullptr;
            for (const TimelineTurn& t : ctx.timeline->turns) {
                if (t.turn_idx >= measured->turn_idx)
                    break;
                if (t.speaker == Speaker::User)
                    before = &t;
            }
            if (before != nullptr) {
                trace.meta.user_end_s = before->end_time_s(ctx.tb);
                trace.meta.question = before->joined_text();
            }
            if (measured->rag) {
                trace.meta.keyword = measured->keyword;
                trace.meta.aliases = measured->aliases;
                trace.meta.body_onset_frame = measured->body_onset_frame;
            }
        }
    }

    std::optional<ActiveJob> job;
    std::unique_ptr<Worker> worker;
    std::optional<InjectionSchedule> schedule;
    ReferenceEmbedding encoded;
    uint64_t insert_pending = 0;
    size_t epoch = 0;
    bool preRAG = false; // RET accepted, injection not started, turn still live
    bool any_phase = false;
    Phase last_phase = Phase::Listening;
    StepInput prev_effective;

    const Clock::time_point t0 = Clock::now();

    auto log_phase = [&](Phase p, uint64_t frame) {
        if (any_phase && p == last_phase)
            return;
        trace.phases.push_back({p, frame, frames_to_seconds(frame, ctx.tb)});
        last_phase = p;
        any_phase = true;
    };

    auto deliver = [&](uint64_t frame, RetrievalOutcome outcome) {
        RetrievalJob& rec = trace.jobs[job->index];
        rec.outcome = std::move(outcome);
        rec.delivered = true;
        rec.completed_frame = frame;
        rec.completion_time_s = rec.dispatched_at_s + rec.outcome.latency_s;

        TraceEvent ev;
        ev.kind = TraceEvent::Kind::Outcome;
        ev.frame = frame;
        ev.t_s = rec.completion_time_s;
        ev.latency_s = rec.outcome.latency_s;

        if (epoch != job->epoch) {
            // The turn that asked for this reference is over: keep the record,
            // inject nothing.
            rec.discarded = true;
            ev.status = "discarded";
            trace.events.push_back(std::move(ev));
            job.reset();
            return;
        }

        ev.status = to_string(rec.outcome.status);
        trace.events.push_back(std::move(ev));
        encoded = rec.outcome.ok()
                      ? encode_reference(rec.outcome.doc, *ctx.tables, *ctx.proj, ctx.ref_ratio)
                      : dropout_embedding(*ctx.dropout);
        InjectionSchedule s;
        s.i_ret = rec.trigger_frame;
        s.delay_frames = frame - rec.trigger_frame;
        s.length = encoded.length();
        s.mode = ctx.cfg.injection;
        if (s.length > 0) {
            schedule = s;
            if (ctx.cfg.injection == InjectionMode::Insertive)
                insert_pending = s.length;
        } else {
            preRAG = false;
        }
        job.reset();
    };

    auto log_inject_boundaries = [&](uint64_t frame, bool at_tick_start) {
        if (!schedule)
            return;
        if (at_tick_start && frame == schedule->first_frame()) {
            TraceEvent ev;
            ev.kind = TraceEvent::Kind::InjectStart;
            ev.frame = frame;
            ev.t_s = frames_to_seconds(frame, ctx.tb);
            ev.inject_kind = encoded.dropped ? "dropout" : "reference";
            ev.inject_len = schedule->length;
            trace.events.push_back(std::move(ev));
            preRAG = false;
        }
        if (!at_tick_start && frame == schedule->last_frame()) {
            TraceEvent ev;
            ev.kind = TraceEvent::Kind::InjectEnd;
            ev.frame = frame;
            ev.t_s = frames_to_seconds(frame, ctx.tb);
            trace.events.push_back(std::move(ev));
            schedule.reset();
        }
    };

    const uint64_t n_feed = user_feed.size();
    uint64_t engine_frame = 0;
    uint64_t feed_pos = 0;

    while (feed_pos < n_feed) {
        if (realtime)
            std::this_thread::sleep_until(
                wall_at(t0, static_cast<double>(engine_frame) * period));

        if (insert_pending > 0) {
            // Virtual step: the reference vector is the input itself; the
            // generator is not stepped, so the script shifts by the window.
            log_inject_boundaries(engine_frame, true);
            TokenFrame f;
            f.frame = engine_frame;
            f.model_audio.assign(q, kSilenceAudioId);
            f.user_audio.assign(q, kSilenceAudioId);
            f.inserted = true;
            log_phase(Phase::Injecting, engine_frame);
            trace.frames.push_back(std::move(f));
            trace.raw_inputs.push_back(
                compose_step_input(trace.frames, *ctx.tables, engine_frame));
            StepInput eff;
            eff.frame = engine_frame;
            eff.h = encoded.vectors[schedule->ref_index(engine_frame) - 1];
            trace.effective_inputs.push_back(eff);
            prev_effective = std::move(eff);
            --insert_pending;
            log_inject_boundaries(engine_frame, false);
            ++engine_frame;
            continue;
        }

        // Dispatch marker for the inflight job.
        if (job && !job->dispatch_logged && trace.jobs[job->index].dispatch_frame == engine_frame) {
            TraceEvent ev;
            ev.kind = TraceEvent::Kind::Dispatch;
            ev.frame = engine_frame;
            ev.t_s = trace.jobs[job->index].dispatched_at_s;
            trace.events.push_back(std::move(ev));
            job->dispatch_logged = true;
        }

        // Outcomes take effect only at frame boundaries: drain here.
        if (job) {
            if (realtime) {
                bool done = false;
                if (worker != nullptr) {
                    std::lock_guard<std::mutex> lk(worker->mu);
                    done = worker->done;
                }
                if (done) {
                    worker->th.join();
                    RetrievalOutcome o = std::move(worker->outcome);
                    worker.reset();
                    deliver(engine_frame, std::move(o));
                }
            } else if (job->deliver_frame == engine_frame) {
                deliver(engine_frame, std::move(job->outcome));
            }
        }

        log_inject_boundaries(engine_frame, true);

        GeneratorStep step;
        try {
            step = gen.step(prev_effective, engine_frame);
        } catch (const std::exception& e) {
            if (worker != nullptr)
                worker->th.join();
            throw generator_failure(std::string("generator failed at frame ") +
                                        std::to_string(engine_frame) + ": " + e.what(),
                                    std::move(trace));
        }
        if (static_cast<int>(step.audio.size()) != q)
            throw invariant_violation("generator produced wrong audio layer count");

        TokenFrame frame;
        frame.frame = engine_frame;
        frame.model_text = step.text;
        frame.model_audio = std::move(step.audio);
        frame.user_audio = user_feed[feed_pos].user_audio;

        if (frame.model_text.is_ret()) {
            TraceEvent ev;
            ev.kind = TraceEvent::Kind::RetTrigger;
            ev.frame = engine_frame;
            ev.t_s = frames_to_seconds(engine_frame, ctx.tb);
            if (job) {
                ev.dropped = true; // inflight cap: newest trigger loses
                trace.events.push_back(std::move(ev));
            } else {
                trace.events.push_back(std::move(ev));
                RetrievalJob rec;
                rec.trigger_frame = engine_frame;
                rec.trigger_time_s = frames_to_seconds(engine_frame, ctx.tb);
                rec.settle_s = ctx.cfg.settle_s;
                rec.dispatch_frame = engine_frame + seconds_to_frames(ctx.cfg.settle_s, ctx.tb);
                rec.dispatched_at_s = rec.trigger_time_s + ctx.cfg.settle_s;
                trace.jobs.push_back(rec);

                // The transcript snapshot is what was audible by dispatch
                // time, measured on the script clock (which lags the engine
                // clock by any inserted frames).
                TranscriptContext snapshot;
                if (ctx.timeline != nullptr) {
                    snapshot = transcript_until(*ctx.timeline,
                                                frames_to_seconds(feed_pos, ctx.tb) +
                                                    ctx.cfg.settle_s);
                } else {
                    snapshot.cutoff_time_s = rec.dispatched_at_s;
                }

                ActiveJob a;
                a.index = trace.jobs.size() - 1;
                a.epoch = epoch;
                if (realtime) {
                    worker = std::make_unique<Worker>();
                    Worker* w = worker.get();
                    const double dispatch_wall = rec.dispatched_at_s;
                    w->th = std::thread([w, &backend, t0, dispatch_wall,
                                         snap = std::move(snapshot)] {
                        std::this_thread::sleep_until(wall_at(t0, dispatch_wall));
                        RetrievalOutcome o = backend.retrieve(snap);
                        std::lock_guard<std::mutex> lk(w->mu);
                        w->outcome = std::move(o);
                        w->done = true;
                    });
                } else {
                    a.outcome = backend.retrieve(snapshot);
                    uint64_t due = engine_frame +
                                   seconds_to_frames(ctx.cfg.settle_s + a.outcome.latency_s,
                                                     ctx.tb);
                    a.deliver_frame = std::max(due, engine_frame + 1);
                }
                job = std::move(a);
                preRAG = true;
            }
        }

        Phase phase;
        if (schedule && schedule->contains(engine_frame))
            phase = Phase::Injecting;
        else if (preRAG)
            phase = Phase::SpeakingPreRag;
        else if (model_is_speaking(frame))
            phase = Phase::SpeakingNormal;
        else
            phase = Phase::Listening;
        log_phase(phase, engine_frame);

        if (frame.model_text.is_word() && !step.word.empty())
            trace.words.push_back(
                {step.word, engine_frame, frames_to_seconds(engine_frame, ctx.tb)});

        trace.frames.push_back(std::move(frame));
        StepInput raw = compose_step_input(trace.frames, *ctx.tables, engine_frame);
        StepInput eff = schedule ? effective_input(raw, *schedule, encoded, engine_frame) : raw;
        trace.raw_inputs.push_back(std::move(raw));
        trace.effective_inputs.push_back(eff);
        prev_effective = std::move(eff);

        if (step.model_turn_end) {
            ++epoch;
            preRAG = false; // a pending outcome now belongs to a dead turn
        }

        log_inject_boundaries(engine_frame, false);
        ++engine_frame;
        ++feed_pos;
    }

    // A job still open at the end of the run never takes effect.
    if (job) {
        RetrievalJob& rec = trace.jobs[job->index];
        if (realtime && worker != nullptr) {
            worker->th.join();
            rec.outcome = std::move(worker->outcome);
            worker.reset();
        } else if (!realtime) {
            rec.outcome = std::move(job->outcome);
        }
        rec.completed_frame = engine_frame;
        rec.completion_time_s = rec.dispatched_at_s + rec.outcome.latency_s;
        rec.discarded = true;
        job.reset();
    }

    return trace;
}

} // namespace duplexrag
