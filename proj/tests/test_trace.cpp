#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <string>

#include <json.hpp>

#include "duplexrag/errors.hpp"
#include "duplexrag/trace.hpp"

using namespace duplexrag;

namespace {

TokenFrame silent_frame(uint64_t i, int q = 2) {
    TokenFrame f;
    f.frame = i;
    f.model_audio.assign(q, kSilenceAudioId);
    f.user_audio.assign(q, kSilenceAudioId);
    return f;
}

// A ten-frame run with one retrieval: RET at 2, dispatch 3, outcome landing at
// 5, injection window {6, 7}.
ConversationTrace sample_trace() {
    ConversationTrace t;
    t.meta.script_id = "sample";
    t.meta.seed = 42;
    t.meta.question = "what is it";
    t.meta.keyword = "tower";
    t.meta.aliases = {"tower"};
    t.meta.user_end_s = 0.16;
    t.meta.body_onset_frame = 8;

    for (uint64_t i = 0; i < 10; ++i)
        t.frames.push_back(silent_frame(i));
    t.frames[2].model_text = TextToken::ret();
    t.frames[3].model_text = TextToken::word(17);
    t.frames[3].model_audio[0] = 9;
    t.frames[8].model_text = TextToken::word(23);

    t.events.push_back({TraceEvent::Kind::RetTrigger, 2, 0.16});
    t.events.push_back({TraceEvent::Kind::Dispatch, 3, 0.26});
    TraceEvent outcome{TraceEvent::Kind::Outcome, 5, 0.36};
    outcome.status = "ok";
    outcome.latency_s = 0.1;
    t.events.push_back(outcome);
    TraceEvent start{TraceEvent::Kind::InjectStart, 6, 0.48};
    start.inject_kind = "reference";
    start.inject_len = 2;
    t.events.push_back(start);
    t.events.push_back({TraceEvent::Kind::InjectEnd, 7, 0.56});

    t.phases.push_back({Phase::SpeakingPreRag, 2, 0.16});
    t.phases.push_back({Phase::SpeakingNormal, 4, 0.32});
    t.phases.push_back({Phase::Injecting, 6, 0.48});
    t.phases.push_back({Phase::SpeakingNormal, 8, 0.64});

    t.words.push_back({"let", 3, 0.24});
    t.words.push_back({"tower", 8, 0.64});

    RetrievalJob job;
    job.trigger_frame = 2;
    job.trigger_time_s = 0.16;
    job.settle_s = 0.1;
    job.dispatch_frame = 3;
    job.dispatched_at_s = 0.26;
    job.outcome = RetrievalOutcome::success(ReferenceDoc::from_text("doc words", 64), 0.1);
    job.completed_frame = 5;
    job.completion_time_s = 0.36;
    job.delivered = true;
    t.jobs.push_back(job);
    return t;
}

} // namespace

TEST_CASE("phase and event names round-trip") {
    for (Phase p : {Phase::Listening, Phase::SpeakingNormal, Phase::SpeakingPreRag,
                    Phase::Injecting})
        CHECK(phase_from_string(to_string(p)) == p);
    CHECK(std::string(to_string(Phase::SpeakingPreRag)) == "speaking_preRAG");
    CHECK(std::string(to_string(Phase::Injecting)) == "injecting");
    CHECK_THROWS_AS(phase_from_string("bogus"), std::invalid_argument);

    for (TraceEvent::Kind k :
         {TraceEvent::Kind::RetTrigger, TraceEvent::Kind::Dispatch, TraceEvent::Kind::Outcome,
          TraceEvent::Kind::InjectStart, TraceEvent::Kind::InjectEnd})
        CHECK(event_kind_from_string(to_string(k)) == k);
    CHECK(std::string(to_string(TraceEvent::Kind::RetTrigger)) == "ret_trigger");
}

TEST_CASE("a well-formed trace validates") {
    CHECK_NOTHROW(validate_trace(sample_trace()));
}

TEST_CASE("serialization round-trips every record") {
    ConversationTrace t = sample_trace();
    std::string text = trace_to_jsonl(t);

    std::istringstream in(text);
    ConversationTrace r = read_trace_jsonl(in, "roundtrip");

    CHECK(r.meta.script_id == t.meta.script_id);
    CHECK(r.meta.seed == t.meta.seed);
    CHECK(r.meta.frame_rate_hz == t.meta.frame_rate_hz);
    CHECK(r.meta.question == t.meta.question);
    CHECK(r.meta.keyword == t.meta.keyword);
    CHECK(r.meta.aliases == t.meta.aliases);
    REQUIRE(r.meta.user_end_s.has_value());
    CHECK(*r.meta.user_end_s == *t.meta.user_end_s);
    REQUIRE(r.meta.body_onset_frame.has_value());
    CHECK(*r.meta.body_onset_frame == 8);

    CHECK(r.frames == t.frames);
    REQUIRE(r.events.size() == t.events.size());
    for (size_t k = 0; k < t.events.size(); ++k) {
        CHECK(r.events[k].kind == t.events[k].kind);
        CHECK(r.events[k].frame == t.events[k].frame);
        CHECK(r.events[k].t_s == t.events[k].t_s);
        CHECK(r.events[k].status == t.events[k].status);
        CHECK(r.events[k].latency_s == t.events[k].latency_s);
        CHECK(r.events[k].inject_kind == t.events[k].inject_kind);
        CHECK(r.events[k].inject_len == t.events[k].inject_len);
    }
    REQUIRE(r.phases.size() == t.phases.size());
    for (size_t k = 0; k < t.phases.size(); ++k) {
        CHECK(r.phases[k].phase == t.phases[k].phase);
        CHECK(r.phases[k].frame == t.phases[k].frame);
    }
    REQUIRE(r.words.size() == 2);
    CHECK(r.words[1].word == "tower");
    CHECK(r.words[1].frame == 8);

    // Jobs are rebuilt from the event stream.
    REQUIRE(r.jobs.size() == 1);
    CHECK(r.jobs[0].trigger_frame == 2);
    CHECK(r.jobs[0].trigger_time_s == 0.16);
    CHECK(r.jobs[0].settle_s == doctest::Approx(0.1));
    CHECK(r.jobs[0].dispatch_frame == 3);
    CHECK(r.jobs[0].dispatched_at_s == 0.26);
    CHECK(r.jobs[0].completed_frame == 5);
    CHECK(r.jobs[0].completion_time_s == 0.36);
    CHECK(r.jobs[0].outcome.ok());
    CHECK(r.jobs[0].outcome.latency_s == 0.1);
    CHECK(r.jobs[0].delivered);
    CHECK_FALSE(r.jobs[0].discarded);

    // Serializing the reread trace reproduces the bytes.
    CHECK(trace_to_jsonl(r) == text);
}

TEST_CASE("the writer leads with a meta line and orders frame records") {
    ConversationTrace t = sample_trace();
    std::istringstream in(trace_to_jsonl(t));
    std::string line;

    REQUIRE(std::getline(in, line));
    auto meta = nlohmann::json::parse(line);
    CHECK(meta.contains("meta"));
    CHECK(meta["meta"]["script_id"] == "sample");

    // Events for frame f appear before the frame record for f; the trigger at
    // frame 2 precedes frame 2's record.
    uint64_t last_frame_record = 0;
    bool seen_trigger = false;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        if (j.contains("event") && j["event"] == "ret_trigger") {
            CHECK_FALSE(seen_trigger);
            CHECK(last_frame_record <= 2);
            seen_trigger = true;
        }
        if (j.contains("frame") && j.contains("model_text"))
            last_frame_record = j["frame"].get<uint64_t>();
    }
    CHECK(seen_trigger);
    CHECK(last_frame_record == 9);
}

TEST_CASE("inserted frames keep their marker through serialization") {
    ConversationTrace t = sample_trace();
    t.frames[6].inserted = true;
    std::istringstream in(trace_to_jsonl(t));
    ConversationTrace r = read_trace_jsonl(in, "ins");
    CHECK(r.frames[6].inserted);
    CHECK_FALSE(r.frames[5].inserted);
}

TEST_CASE("reader rejects malformed lines with file and line diagnostics") {
    std::istringstream bad1("this is not json\n");
    CHECK_THROWS_WITH_AS(read_trace_jsonl(bad1, "t.jsonl"), doctest::Contains("t.jsonl:1"),
                         std::invalid_argument);

    std::istringstream bad2(R"({"meta":{"script_id":"x"}}
{"unknown_record":1}
)");
    CHECK_THROWS_WITH_AS(read_trace_jsonl(bad2, "t.jsonl"), doctest::Contains("t.jsonl:2"),
                         std::invalid_argument);
}

TEST_CASE("validate_trace rejects broken frame sequences and windows") {
    SUBCASE("gap in frame indices") {
        ConversationTrace t = sample_trace();
        t.frames[7].frame = 12;
        CHECK_THROWS_AS(validate_trace(t), invariant_violation);
    }
    SUBCASE("events out of frame order") {
        ConversationTrace t = sample_trace();
        std::swap(t.events[0], t.events[2]);
        CHECK_THROWS_AS(validate_trace(t), invariant_violation);
    }
    SUBCASE("injection window must start one frame after the outcome") {
        ConversationTrace t = sample_trace();
        t.events[3].frame = 7; // inject_start drifted
        t.events[4].frame = 8;
        CHECK_THROWS_AS(validate_trace(t), invariant_violation);
    }
    SUBCASE("injection end must match the announced length") {
        ConversationTrace t = sample_trace();
        t.events[4].frame = 9;
        CHECK_THROWS_AS(validate_trace(t), invariant_violation);
    }
    SUBCASE("duplicate phase changes are rejected") {
        ConversationTrace t = sample_trace();
        t.phases.push_back({Phase::SpeakingNormal, 9, 0.72});
        CHECK_THROWS_AS(validate_trace(t), invariant_violation);
    }
    SUBCASE("accepted trigger outside a pre-retrieval phase") {
        ConversationTrace t = sample_trace();
        t.phases[0].phase = Phase::SpeakingNormal;
        CHECK_THROWS_AS(validate_trace(t), invariant_violation);
    }
}

TEST_CASE("a discarded outcome needs no injection window") {
    ConversationTrace t = sample_trace();
    t.events.erase(t.events.begin() + 3, t.events.end()); // drop inject events
    t.events[2].status = "discarded";
    t.phases.erase(t.phases.begin() + 2, t.phases.end());
    CHECK_NOTHROW(validate_trace(t));
}

TEST_CASE("phase_at reports the phase in force at each frame") {
    ConversationTrace t = sample_trace();
    CHECK(phase_at(t, 0) == Phase::Listening);
    CHECK(phase_at(t, 1) == Phase::Listening);
    CHECK(phase_at(t, 2) == Phase::SpeakingPreRag);
    CHECK(phase_at(t, 3) == Phase::SpeakingPreRag);
    CHECK(phase_at(t, 4) == Phase::SpeakingNormal);
    CHECK(phase_at(t, 6) == Phase::Injecting);
    CHECK(phase_at(t, 7) == Phase::Injecting);
    CHECK(phase_at(t, 8) == Phase::SpeakingNormal);
    CHECK(phase_at(t, 9) == Phase::SpeakingNormal);
}

TEST_CASE("file save and load round-trip") {
    ConversationTrace t = sample_trace();
    const std::string path = "trace_roundtrip_tmp.jsonl";
    save_trace_file(t, path);
    ConversationTrace r = load_trace_file(path);
    CHECK(r.frames == t.frames);
    CHECK(trace_to_jsonl(r) == trace_to_jsonl(t));
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_trace_file("/nonexistent/zzz.jsonl"), std::runtime_error);
}
