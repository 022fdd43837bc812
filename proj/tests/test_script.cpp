#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "duplexrag/script.hpp"

using namespace duplexrag;

namespace {

const char* kTwoTurn = R"({
  "script_id": "demo",
  "turns": [
    { "speaker": "user", "text": "what is the tallest structure in paris" },
    {
      "speaker": "model",
      "lead": "well let me recall what i know about that city",
      "body": "the eiffel tower stands three hundred thirty meters tall",
      "tail": "quite impressive",
      "reference": "the eiffel tower is three hundred thirty meters tall",
      "keyword": "eiffel tower"
    }
  ]
})";

} // namespace

TEST_CASE("parse_script fills turns, defaults and aliases") {
    ConversationScript s = parse_script(kTwoTurn, "inline");
    CHECK(s.script_id == "demo");
    REQUIRE(s.turns.size() == 2);
    CHECK(s.turns[0].speaker == Speaker::User);
    CHECK_FALSE(s.turns[0].rag_enabled());
    CHECK(s.turns[1].rag_enabled());
    CHECK(s.turns[1].aliases == std::vector<std::string>{"eiffel tower"});

    ConversationScript unnamed =
        parse_script(R"({"turns":[{"speaker":"user","text":"hi"}]})", "fallback");
    CHECK(unnamed.script_id == "fallback");
}

TEST_CASE("parse_script rejects malformed scripts with located diagnostics") {
    auto parse = [](const char* text) { return parse_script(text, "s"); };

    CHECK_THROWS_WITH_AS(parse(R"({"turns":[{"speaker":"user","text":"hi"}],"bogus":1})"),
                         doctest::Contains("unknown key \"bogus\""), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse(R"({"turns":[{"speaker":"user","text":"hi","reference":"r"}]})"),
                         doctest::Contains("only valid on model turns"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse(R"({"turns":[{"speaker":"model","lead":"x"}]})"),
                         doctest::Contains("require a reference"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        parse(R"({"turns":[{"speaker":"model","reference":"r","body":"b"}]})"),
        doctest::Contains("lead"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse(R"({"turns":[{"speaker":"model"}]})"),
                         doctest::Contains("text"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse(R"({"turns":[{"speaker":"alien","text":"hi"}]})"),
                         doctest::Contains("speaker"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse(R"({"turns":[]})"), doctest::Contains("non-empty"),
                         std::invalid_argument);
    CHECK_THROWS_AS(parse("not json"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        parse(R"({"turns":[{"speaker":"user","text":"hi","typo_key":"x"}]})"),
        doctest::Contains("turns[0].typo_key"), std::invalid_argument);
}

TEST_CASE("cadence layout places token k at round(k * frames_per_token)") {
    // 12.5 Hz, 3 tokens/s -> 25/6 frames per token; 0.48 s gap -> 6 frames.
    ConversationScript s = parse_script(kTwoTurn, "inline");
    ScriptTimeline tl = layout_script(s, LayoutConfig{}, TimeBase{}, 1024);

    REQUIRE(tl.turns.size() == 2);
    const TimelineTurn& user = tl.turns[0];
    REQUIRE(user.tokens.size() == 7);
    CHECK(user.tokens[0].frame == 6);
    CHECK(user.tokens[1].frame == 10);  // 4.1667 -> 4
    CHECK(user.tokens[2].frame == 14);  // 8.3333 -> 8
    CHECK(user.tokens[3].frame == 18);  // 12.5 ties to 12
    CHECK(user.tokens[4].frame == 23);  // 16.667 -> 17
    CHECK(user.tokens[5].frame == 27);  // 20.833 -> 21
    CHECK(user.tokens[6].frame == 31);  // 25 -> 25
    CHECK(user.start_frame == 6);
    CHECK(user.end_frame == 31);
    CHECK(user.end_time_s(tl.tb) == doctest::Approx(2.56)); // slot after frame 31

    const TimelineTurn& model = tl.turns[1];
    CHECK(model.rag);
    CHECK(model.start_frame == 38); // 31 + 1 + 6
    CHECK(model.lead_start_frame == 38);
    REQUIRE(model.tokens.size() == 10 + 9 + 2);
    CHECK(model.tokens[10].segment == SegmentKind::Body);
    CHECK(model.body_onset_frame == model.tokens[10].frame);
    CHECK(model.body_onset_frame == 80); // 38 + round(10 * 25/6) = 38 + 42
    CHECK(model.tokens[19].segment == SegmentKind::Tail);
    CHECK(model.keyword == "eiffel tower");
    CHECK(model.reference.tokens.size() == 9);

    CHECK(tl.total_frames == model.end_frame + 1 + 6);
    CHECK(tl.first_rag_turn() == &tl.turns[1]);
}

TEST_CASE("explicit alignment entries override the cadence model") {
    std::string text = R"({
      "script_id": "aligned",
      "turns": [{ "speaker": "user", "text": "one two three" }],
      "alignment": [
        { "turn_idx": 0, "token_idx": 0, "frame": 4 },
        { "turn_idx": 0, "token_idx": 1, "frame": 9 },
        { "turn_idx": 0, "token_idx": 2, "frame": 10 }
      ]
    })";
    ConversationScript s = parse_script(text, "aligned");
    ScriptTimeline tl = layout_script(s, LayoutConfig{}, TimeBase{}, 64);
    CHECK(tl.turns[0].tokens[0].frame == 4);
    CHECK(tl.turns[0].tokens[1].frame == 9);
    CHECK(tl.turns[0].tokens[2].frame == 10);
    CHECK(tl.turns[0].start_frame == 4);
    CHECK(tl.turns[0].end_frame == 10);
}

TEST_CASE("layout validation rejects bad cadence and non-monotone alignment") {
    ConversationScript s = parse_script(kTwoTurn, "inline");
    LayoutConfig too_fast;
    too_fast.tokens_per_s = 20.0; // above 12.5 Hz
    CHECK_THROWS_WITH_AS(layout_script(s, too_fast, TimeBase{}, 64),
                         doctest::Contains("frame rate"), std::invalid_argument);

    std::string decreasing = R"({
      "script_id": "bad",
      "turns": [{ "speaker": "user", "text": "one two" }],
      "alignment": [
        { "turn_idx": 0, "token_idx": 0, "frame": 9 },
        { "turn_idx": 0, "token_idx": 1, "frame": 9 }
      ]
    })";
    CHECK_THROWS_WITH_AS(
        layout_script(parse_script(decreasing, "bad"), LayoutConfig{}, TimeBase{}, 64),
        doctest::Contains("strictly increasing"), std::invalid_argument);

    std::string oob = R"({
      "script_id": "oob",
      "turns": [{ "speaker": "user", "text": "one" }],
      "alignment": [{ "turn_idx": 3, "token_idx": 0, "frame": 2 }]
    })";
    CHECK_THROWS_WITH_AS(
        layout_script(parse_script(oob, "oob"), LayoutConfig{}, TimeBase{}, 64),
        doctest::Contains("turn_idx 3"), std::invalid_argument);
}

TEST_CASE("rendered frames carry words, RET, and per-role audio spans") {
    ConversationScript s = parse_script(kTwoTurn, "inline");
    ScriptTimeline tl = layout_script(s, LayoutConfig{}, TimeBase{}, 1024);
    TokenConfig cfg;
    const uint64_t voice = voice_seed_for(7, tl.script_id);
    std::vector<TokenFrame> frames = render_frames(tl, cfg, voice);

    REQUIRE(frames.size() == tl.total_frames);
    for (uint64_t i = 0; i < frames.size(); ++i)
        CHECK(frames[i].frame == i);

    // RET sits one frame before the first lead token.
    const TimelineTurn& model = tl.turns[1];
    CHECK(frames[model.lead_start_frame - 1].model_text.is_ret());
    CHECK(frames[model.lead_start_frame].model_text ==
          TextToken::word(model.tokens[0].word_id));

    // User words are not placed on the model text channel.
    CHECK(frames[tl.turns[0].tokens[0].frame].model_text == TextToken::pad());

    // Audio spans: user audible over the user turn, silent elsewhere; model
    // audible over the model turn.
    auto audible = [](const std::vector<uint16_t>& ids) {
        for (uint16_t v : ids)
            if (v != kSilenceAudioId)
                return true;
        return false;
    };
    const TimelineTurn& user = tl.turns[0];
    for (uint64_t f = user.start_frame; f <= user.end_frame; ++f) {
        CHECK(audible(frames[f].user_audio));
        CHECK_FALSE(audible(frames[f].model_audio));
    }
    CHECK_FALSE(audible(frames[user.end_frame + 1].user_audio));
    for (uint64_t f = model.start_frame; f <= model.end_frame; ++f)
        CHECK(model_is_speaking(frames[f]));
    for (uint64_t f = 0; f < user.start_frame; ++f)
        CHECK_FALSE(model_is_speaking(frames[f]));

    // Same seed, same render; different voice seed changes audio only.
    CHECK(render_frames(tl, cfg, voice) == frames);
    std::vector<TokenFrame> other = render_frames(tl, cfg, voice + 1);
    CHECK(other != frames);
    for (uint64_t i = 0; i < frames.size(); ++i)
        CHECK(other[i].model_text == frames[i].model_text);
}

TEST_CASE("synthetic audio ids are nonzero and inside the codebook") {
    for (uint64_t f = 0; f < 200; ++f)
        for (int layer = 0; layer < 8; ++layer) {
            const uint16_t id = synthetic_audio_id(99, Role::User, f, layer, 256);
            CHECK(id >= 1);
            CHECK(id < 256);
        }
    CHECK(synthetic_audio_id(99, Role::User, 0, 0, 1) == kSilenceAudioId);
}

TEST_CASE("a RAG turn whose lead starts at frame 0 cannot host RET") {
    std::string text = R"({
      "script_id": "early",
      "turns": [{
        "speaker": "model", "lead": "um", "body": "answer",
        "reference": "doc", "keyword": "answer"
      }],
      "alignment": [
        { "turn_idx": 0, "token_idx": 0, "frame": 0 },
        { "turn_idx": 0, "token_idx": 1, "frame": 5 }
      ]
    })";
    ScriptTimeline tl =
        layout_script(parse_script(text, "early"), LayoutConfig{}, TimeBase{}, 64);
    CHECK_THROWS_AS(render_frames(tl, TokenConfig{}, 1), std::domain_error);
}

TEST_CASE("model_turn_end_flags marks exactly the model turn ends") {
    ConversationScript s = parse_script(kTwoTurn, "inline");
    ScriptTimeline tl = layout_script(s, LayoutConfig{}, TimeBase{}, 1024);
    std::vector<bool> flags = model_turn_end_flags(tl, tl.total_frames);
    size_t count = 0;
    for (size_t i = 0; i < flags.size(); ++i)
        if (flags[i]) {
            ++count;
            CHECK(i == tl.turns[1].end_frame);
        }
    CHECK(count == 1);
}

TEST_CASE("transcript_until cuts at the time budget") {
    ConversationScript s = parse_script(kTwoTurn, "inline");
    ScriptTimeline tl = layout_script(s, LayoutConfig{}, TimeBase{}, 1024);

    TranscriptContext none = transcript_until(tl, 0.3);
    CHECK(none.empty());

    // Cut midway through the user turn: tokens at 6, 10, 14 have onsets
    // 0.48, 0.8, 1.12 <= 1.2; "tallest" at frame 18 onsets at 1.44.
    TranscriptContext part = transcript_until(tl, 1.2);
    REQUIRE(part.turns.size() == 1);
    CHECK(part.turns[0].speaker == Speaker::User);
    CHECK(part.turns[0].text == "what is the");
    CHECK(part.turns[0].end_time_s == doctest::Approx(1.2)); // slot after frame 14
    CHECK(part.cutoff_time_s == 1.2);

    // Everything.
    TranscriptContext all = transcript_until(tl, 1e9);
    REQUIRE(all.turns.size() == 2);
    CHECK(all.turns[0].text == "what is the tallest structure in paris");
    CHECK(all.turns[1].speaker == Speaker::Model);
    CHECK(all.turns[1].text.find("eiffel tower") != std::string::npos);
}

TEST_CASE("fixture scripts load from disk") {
    ConversationScript s = load_script_file(std::string(DUPLEXRAG_FIXTURE_DIR) + "/paris.json");
    CHECK(s.script_id == "paris");
    REQUIRE(s.turns.size() == 2);
    CHECK(s.turns[1].rag_enabled());
    CHECK_THROWS_AS(load_script_file("/nonexistent/nope.json"), std::runtime_error);
}

TEST_CASE("voice seeds differ per script and are stable") {
    CHECK(voice_seed_for(1, "a") == voice_seed_for(1, "a"));
    CHECK(voice_seed_for(1, "a") != voice_seed_for(1, "b"));
    CHECK(voice_seed_for(1, "a") != voice_seed_for(2, "a"));
}
