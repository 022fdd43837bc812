// duplexrag: frame-synchronous conversation runs with asynchronous retrieval.
//
// Commands: simulate, synth-data, measure, bench-backend, replay.
// Exit codes: 0 ok, 1 validation error, 2 invariant violation, 3 I/O error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "duplexrag/config.hpp"
#include "duplexrag/datasynth.hpp"
#include "duplexrag/engine.hpp"
#include "duplexrag/errors.hpp"
#include "duplexrag/http_backend.hpp"
#include "duplexrag/metrics.hpp"
#include "duplexrag/script.hpp"
#include "duplexrag/trace.hpp"

namespace fs = std::filesystem;
using namespace duplexrag;
using ojson = nlohmann::ordered_json;

namespace {

// Lexicographic order keeps multi-file commands deterministic.
std::vector<fs::path> collect_files(const std::string& input, const std::string& ext) {
    std::vector<fs::path> files;
    fs::path p(input);
    if (fs::is_directory(p)) {
        for (const auto& entry : fs::directory_iterator(p))
            if (entry.is_regular_file() && entry.path().extension() == ext)
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(p)) {
        files.push_back(p);
    } else {
        throw std::runtime_error("no such file or directory: " + input);
    }
    if (files.empty())
        throw std::invalid_argument("no " + ext + " files under " + input);
    return files;
}

std::unique_ptr<RetrievalBackend> make_backend(const RunConfig& cfg,
                                               const ScriptTimeline* timeline,
                                               const std::string& label) {
    const BackendConfig& b = cfg.backend;
    std::unique_ptr<RetrievalBackend> be;
    bool simulated_latency = false;
    if (b.kind == "scripted_oracle") {
        ReferenceDoc fixture;
        if (timeline != nullptr)
            if (const TimelineTurn* rag = timeline->first_rag_turn())
                fixture = rag->reference;
        be = std::make_unique<ScriptedOracleBackend>(std::move(fixture), b.latency, b.timeout_s,
                                                     Rng::derive(cfg.seed, label + "/backend"));
        simulated_latency = true;
    } else if (b.kind == "mock") {
        be = std::make_unique<MockBackend>(b.mock_document, cfg.tokens.text_vocab, b.latency,
                                           b.timeout_s,
                                           Rng::derive(cfg.seed, label + "/backend"));
        simulated_latency = true;
    } else {
        be = std::make_unique<HttpBackend>(b.endpoint, b.template_id, b.timeout_s,
                                           cfg.tokens.text_vocab);
    }
    if (b.p_error > 0.0)
        be = std::make_unique<FaultInjector>(std::move(be), b.p_error,
                                             Rng::derive(cfg.seed, label + "/faults"));
    if (cfg.engine.mode == EngineMode::Realtime && simulated_latency)
        be = std::make_unique<WallDelayBackend>(std::move(be));
    return be;
}

struct ScriptRun {
    ScriptTimeline timeline;
    ConversationTrace trace;
};

ScriptRun run_script(const RunConfig& cfg, const ConversationScript& script,
                     const EmbeddingTables& tables, const Projection& proj,
                     const DropoutVector& dropout) {
    ScriptRun run;
    run.timeline =
        layout_script(script, cfg.datasynth.layout, cfg.timebase, cfg.tokens.text_vocab);

    ScriptedGenerator gen(run.timeline, cfg.tokens,
                          voice_seed_for(cfg.seed, run.timeline.script_id));
    std::vector<TokenFrame> feed = gen.rendered();
    // Slack after the script end so late windows still land inside the run.
    const uint64_t extra =
        seconds_to_frames(cfg.engine.tail_s + std::max(cfg.backend.timeout_s, 0.0),
                          cfg.timebase);
    for (uint64_t k = 0; k < extra; ++k) {
        TokenFrame f;
        f.frame = feed.size();
        f.model_audio.assign(cfg.tokens.q, kSilenceAudioId);
        f.user_audio.assign(cfg.tokens.q, kSilenceAudioId);
        feed.push_back(std::move(f));
    }

    auto backend = make_backend(cfg, &run.timeline, run.timeline.script_id);

    EngineContext ectx;
    ectx.tb = cfg.timebase;
    ectx.tokens = cfg.tokens;
    ectx.tables = &tables;
    ectx.proj = &proj;
    ectx.dropout = &dropout;
    ectx.ref_ratio = cfg.refenc.ratio;
    ectx.cfg = cfg.engine;
    ectx.timeline = &run.timeline;
    ectx.seed = cfg.seed;

    run.trace = run_conversation(gen, feed, *backend, ectx);
    return run;
}

int cmd_simulate(const RunConfig& cfg, const std::string& scripts_in,
                 const std::string& out_dir) {
    const auto files = collect_files(scripts_in, ".json");
    fs::create_directories(out_dir);

    const EmbeddingTables tables = EmbeddingTables::seeded(cfg.tokens, cfg.seed);
    const Projection proj = Projection::seeded(cfg.tokens.dim, cfg.refenc.seed);
    const DropoutVector dropout = DropoutVector::seeded(cfg.tokens.dim, cfg.refenc.seed);
    AliasKeywordExtractor extractor;

    for (const fs::path& file : files) {
        const ConversationScript script = load_script_file(file.string());
        ScriptRun run;
        try {
            run = run_script(cfg, script, tables, proj, dropout);
        } catch (generator_failure& e) {
            save_trace_file(e.partial,
                            (fs::path(out_dir) / (script.script_id + ".trace.jsonl")).string());
            throw std::invalid_argument(e.what());
        }
        validate_trace(run.trace);

        const fs::path trace_path = fs::path(out_dir) / (run.trace.meta.script_id +
                                                          ".trace.jsonl");
        save_trace_file(run.trace, trace_path.string());

        const DelayReport report = measure_trace(run.trace, extractor);
        const fs::path report_path = fs::path(out_dir) / (run.trace.meta.script_id +
                                                           ".report.jsonl");
        std::ofstream rout(report_path, std::ios::binary);
        if (!rout)
            throw std::runtime_error("cannot open output file " + report_path.string());
        rout << report_to_json(report) << '\n';

        std::cout << run.trace.meta.script_id << ": " << run.trace.frames.size()
                  << " frames, " << run.trace.jobs.size() << " retrievals -> " << trace_path
                  << std::endl;
    }
    return 0;
}

int cmd_synth_data(const RunConfig& cfg, const std::string& scripts_in, const std::string& out,
                   const std::string& alignment_out) {
    const auto files = collect_files(scripts_in, ".json");
    std::ofstream dataset(out, std::ios::binary);
    if (!dataset)
        throw std::runtime_error("cannot open output file " + out);
    std::ofstream alignment;
    if (!alignment_out.empty()) {
        alignment.open(alignment_out, std::ios::binary);
        if (!alignment)
            throw std::runtime_error("cannot open output file " + alignment_out);
    }

    size_t examples = 0;
    for (const fs::path& file : files) {
        const ConversationScript script = load_script_file(file.string());
        const SynthResult result = build_training_examples(
            script, cfg.datasynth, cfg.tokens, cfg.refenc, cfg.timebase, cfg.seed);
        write_dataset_jsonl(result.examples, dataset);
        if (alignment.is_open())
            write_alignment_jsonl(result.timeline, alignment);
        examples += result.examples.size();
    }
    std::cout << examples << " examples from " << files.size() << " scripts -> " << out
              << std::endl;
    return 0;
}

int cmd_measure(const RunConfig& cfg, const std::string& traces_in, const std::string& out,
                const std::string& hist_out, const std::string& judge_endpoint,
                const std::string& judge_template) {
    const auto files = collect_files(traces_in, ".jsonl");

    class JudgeExtractor : public KeywordExtractor {
      public:
        JudgeExtractor(HttpEndpoint ep, std::string template_id, double timeout_s)
            : ep_(std::move(ep)), template_id_(std::move(template_id)), timeout_s_(timeout_s) {}
        std::string extract(const std::string& question, const std::string& response,
                            std::span<const std::string> aliases) override {
            return http_extract_keyword(ep_, question, response,
                                        {aliases.begin(), aliases.end()}, template_id_,
                                        timeout_s_);
        }

      private:
        HttpEndpoint ep_;
        std::string template_id_;
        double timeout_s_;
    };

    AliasKeywordExtractor alias_extractor;
    std::unique_ptr<JudgeExtractor> judge;
    if (!judge_endpoint.empty())
        judge = std::make_unique<JudgeExtractor>(HttpEndpoint::parse(judge_endpoint),
                                                 judge_template, cfg.backend.timeout_s);
    KeywordExtractor& extractor =
        judge ? static_cast<KeywordExtractor&>(*judge) : alias_extractor;

    std::vector<DelayReport> reports;
    for (const fs::path& file : files) {
        // Report files are skipped when measuring a whole simulate output dir.
        if (file.string().ends_with(".report.jsonl"))
            continue;
        const ConversationTrace trace = load_trace_file(file.string());
        validate_trace(trace);
        DelayReport r = measure_trace(trace, extractor);
        if (r.e2ekd_s && r.ttfat_s && r.kd_s &&
            std::abs(*r.e2ekd_s - (*r.ttfat_s + *r.kd_s)) >
                TimeBase{trace.meta.frame_rate_hz}.frame_period_s())
            throw invariant_violation(file.string() +
                                      ": e2ekd does not decompose into ttfat + kd");
        reports.push_back(std::move(r));
    }
    if (reports.empty())
        throw std::invalid_argument("no traces under " + traces_in);

    std::ofstream rout(out, std::ios::binary);
    if (!rout)
        throw std::runtime_error("cannot open output file " + out);
    write_reports_jsonl(reports, rout);

    if (!hist_out.empty()) {
        std::ofstream hout(hist_out, std::ios::binary);
        if (!hout)
            throw std::runtime_error("cannot open output file " + hist_out);
        export_histograms(report_series(reports), cfg.metrics.histogram_bins, hout);
    }
    std::cout << reports.size() << " reports -> " << out << std::endl;
    return 0;
}

int cmd_bench_backend(const RunConfig& cfg, const std::string& endpoint,
                      const std::string& template_id, size_t n) {
    if (n == 0)
        throw std::invalid_argument("bench-backend needs --n >= 1");
    const std::string url = endpoint.empty() ? cfg.backend.endpoint : endpoint;
    if (url.empty())
        throw std::invalid_argument("bench-backend needs an HTTP endpoint");
    const LatencyStats stats = bench_backend(
        HttpEndpoint::parse(url),
        template_id.empty() ? cfg.backend.template_id : template_id, n,
        cfg.backend.timeout_s);

    ojson j;
    j["n"] = stats.n;
    j["failures"] = stats.failures;
    j["mean_s"] = stats.mean_s;
    j["p50_s"] = stats.p50_s;
    j["p90_s"] = stats.p90_s;
    j["p99_s"] = stats.p99_s;
    std::cout << j.dump() << std::endl;
    return 0;
}

int cmd_replay(const std::string& trace_in, const std::string& out) {
    const ConversationTrace trace = load_trace_file(trace_in);
    validate_trace(trace);
    if (!out.empty())
        save_trace_file(trace, out);
    ojson j;
    j["script_id"] = trace.meta.script_id;
    j["frames"] = trace.frames.size();
    j["events"] = trace.events.size();
    j["words"] = trace.words.size();
    j["retrievals"] = trace.jobs.size();
    j["ok"] = true;
    std::cout << j.dump() << std::endl;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"frame-synchronous conversation engine with asynchronous retrieval"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    bool seed_set = false;
    uint64_t seed_flag = 0;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration (JSON)");
        cmd->add_option("--set", overrides, "override a config key, e.g. --set engine.settle_s=0.4");
        cmd->add_option("--seed", seed_flag, "override the global seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    auto* sim = app.add_subcommand("simulate", "run scripts through the engine");
    std::string sim_scripts, sim_out_dir = "out";
    add_common(sim);
    sim->add_option("--scripts", sim_scripts, "script file or directory")->required();
    sim->add_option("--out-dir", sim_out_dir, "output directory for traces and reports");

    auto* synth = app.add_subcommand("synth-data", "build training examples from scripts");
    std::string synth_in, synth_out = "data.jsonl", synth_align;
    add_common(synth);
    synth->add_option("--in", synth_in, "script file or directory")->required();
    synth->add_option("--out", synth_out, "dataset JSONL path");
    synth->add_option("--alignment-out", synth_align, "token alignment JSONL path");

    auto* meas = app.add_subcommand("measure", "compute delay reports from traces");
    std::string meas_traces, meas_out = "report.jsonl", meas_hist, judge_ep, judge_tpl;
    add_common(meas);
    meas->add_option("--traces", meas_traces, "trace file or directory")->required();
    meas->add_option("--out", meas_out, "report JSONL path");
    meas->add_option("--hist", meas_hist, "histogram CSV path");
    meas->add_option("--judge-endpoint", judge_ep, "HTTP keyword judge endpoint");
    meas->add_option("--judge-template", judge_tpl, "judge prompt template id");

    auto* bench = app.add_subcommand("bench-backend", "probe an HTTP back end");
    std::string bench_ep, bench_tpl;
    size_t bench_n = 50;
    add_common(bench);
    bench->add_option("--endpoint", bench_ep, "endpoint URL (defaults to backend.endpoint)");
    bench->add_option("--template", bench_tpl, "template id");
    bench->add_option("--n", bench_n, "number of probe requests");

    auto* replay = app.add_subcommand("replay", "validate and summarize a recorded trace");
    std::string replay_trace, replay_out;
    replay->add_option("--trace", replay_trace, "trace JSONL path")->required();
    replay->add_option("--out", replay_out, "re-serialize the trace here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (replay->parsed())
            return cmd_replay(replay_trace, replay_out);

        if (seed_set)
            overrides.push_back("seed=" + std::to_string(seed_flag));
        RunConfig cfg;
        if (!config_path.empty()) {
            cfg = load_config(config_path, overrides);
        } else {
            ojson empty = ojson::object();
            cfg = parse_config(empty.dump(), "<defaults>", overrides);
        }

        if (sim->parsed())
            return cmd_simulate(cfg, sim_scripts, sim_out_dir);
        if (synth->parsed())
            return cmd_synth_data(cfg, synth_in, synth_out, synth_align);
        if (meas->parsed())
            return cmd_measure(cfg, meas_traces, meas_out, meas_hist, judge_ep, judge_tpl);
        if (bench->parsed())
            return cmd_bench_backend(cfg, bench_ep, bench_tpl, bench_n);
    } catch (const invariant_violation& e) {
        std::cerr << "invariant violation: " << e.what() << std::endl;
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "i/o error: " << e.what() << std::endl;
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << std::endl;
        return 3;
    } catch (const std::runtime_error& e) {
        std::cerr << "i/o error: " << e.what() << std::endl;
        return 3;
    }
    return 0;
}
