// mmt: one binary for the whole pipeline (convert/encode/decode/train/
// generate/evaluate/benchmark/attention/gradcheck).
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmt/attention.hpp"
#include "mmt/codec.hpp"
#include "mmt/errors.hpp"
#include "mmt/event_csv.hpp"
#include "mmt/events.hpp"
#include "mmt/instruments.hpp"
#include "mmt/metrics.hpp"
#include "mmt/midi_io.hpp"
#include "mmt/model.hpp"
#include "mmt/sampler.hpp"
#include "mmt/score.hpp"
#include "mmt/train.hpp"
#include "mmt/util.hpp"

namespace fs = std::filesystem;
using namespace mmt;

namespace {

std::uint64_t default_seed() {
    const char* env = std::getenv("MMT_SEED");
    if (env == nullptr || *env == '\0') return 0;
    return std::strtoull(env, nullptr, 10);
}

// Resolved settings recorded next to the outputs; deterministic content so
// reruns stay byte-identical.
void write_run_config(const std::string& dir, const std::string& subcommand,
                      const std::map<std::string, std::string>& kv) {
    std::string text = "subcommand " + subcommand + "\n";
    for (const auto& [k, v] : kv) text += k + " " + v + "\n";
    fs::create_directories(dir);
    write_file((fs::path(dir) / "run.config").string(), text);
}

InstrumentMap load_map(const std::string& path) {
    if (path.empty()) return InstrumentMap::standard();
    return InstrumentMap::load_csv(path);
}

std::string sample_name(int i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "sample%04d", i);
    return buf;
}

std::vector<int> parse_instruments(const std::string& csv, const InstrumentMap& map) {
    std::vector<int> codes;
    for (const std::string& tok : split(csv, ',')) {
        if (tok.empty()) continue;
        if (auto idx = map.index_of_name(tok)) {
            codes.push_back(*idx + 1);
            continue;
        }
        char* end = nullptr;
        const long v = std::strtol(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0' || v < 1 || v > kMaxInstruments)
            throw ConfigError("unknown instrument '" + tok + "'");
        codes.push_back(static_cast<int>(v));
    }
    if (codes.empty()) throw ConfigError("no instruments given");
    return codes;
}

int run_convert(const std::string& in, const std::string& out) {
    const MusicScore score = load_midi(in);
    save_midi(score, out);
    write_run_config(fs::path(out).parent_path().string(), "convert", {{"in", in}});
    std::printf("convert: %zu notes -> %s\n", score.notes.size(), out.c_str());
    return 0;
}

int run_encode(const std::string& in, const std::string& out, const std::string& map_path) {
    const InstrumentMap map = load_map(map_path);
    const EventSequence seq = encode(load_midi(in), map);
    save_event_csv(seq, out);
    write_run_config(fs::path(out).parent_path().string(), "encode",
                     {{"in", in}, {"instrument_map", map_path.empty() ? "standard" : map_path}});
    std::printf("encode: %zu events -> %s\n", seq.size(), out.c_str());
    return 0;
}

int run_decode(const std::string& in, const std::string& out, const std::string& map_path) {
    const InstrumentMap map = load_map(map_path);
    const MusicScore score = decode(load_event_csv(in), map);
    save_midi(score, out);
    write_run_config(fs::path(out).parent_path().string(), "decode",
                     {{"in", in}, {"instrument_map", map_path.empty() ? "standard" : map_path}});
    std::printf("decode: %zu notes -> %s\n", score.notes.size(), out.c_str());
    return 0;
}

int run_train(const TrainConfig& tc) {
    fs::create_directories(tc.out_dir);
    write_run_config(
        tc.out_dir, "train",
        {{"data", tc.data_dir},
         {"train_frac", format_double(tc.train_frac, 4)},
         {"valid_frac", format_double(tc.valid_frac, 4)},
         {"test_frac", format_double(tc.test_frac, 4)},
         {"max_len", std::to_string(tc.max_len)},
         {"max_beat", std::to_string(tc.max_beat)},
         {"batch_size", std::to_string(tc.batch_size)},
         {"learning_rate", format_double(tc.learning_rate, 9)},
         {"warmup_steps", std::to_string(tc.warmup_steps)},
         {"validate_every", std::to_string(tc.validate_every)},
         {"max_steps", std::to_string(tc.max_steps)},
         {"patience", std::to_string(tc.patience)},
         {"seed", std::to_string(tc.seed)},
         {"augment", tc.augment_enabled ? "on" : "off"},
         {"layers", std::to_string(tc.model.layers)},
         {"model_dim", std::to_string(tc.model.model_dim)},
         {"heads", std::to_string(tc.model.heads)},
         {"feedforward_dim", std::to_string(tc.model.ff_dim())},
         {"dropout", format_double(tc.model.dropout, 4)}});
    const TrainResult r = train(tc);
    std::printf("train: %ld steps, final loss %.6f (per field %.6f), best valid %.6f%s\n",
                r.steps_run, r.final_train_loss, r.final_train_loss / kNumFields,
                r.best_val_loss, r.stopped_early ? ", stopped early" : "");
    std::printf("train: best checkpoint %s\n", r.best_checkpoint.c_str());
    return 0;
}

struct GenCli {
    std::string checkpoint, out_dir, mode = "unconditioned";
    std::string instruments, prompt_path, map_path;
    int n_beats = 16;
    int samples = 1;
    int max_len = 1024;
    int max_beat = 256;
    std::uint64_t seed = default_seed();
    bool restrict_instruments = false;
    bool greedy = false;
};

int run_generate(const GenCli& cli) {
    const InstrumentMap map = load_map(cli.map_path);
    const Model<float> model = load_checkpoint(cli.checkpoint);

    GenSpec spec;
    spec.max_len = std::min(cli.max_len, model.config().max_len);
    spec.max_beat = cli.max_beat;
    spec.restrict_to_declared_instruments = cli.restrict_instruments;
    spec.greedy = cli.greedy;
    if (cli.mode == "unconditioned") {
        spec.mode = GenMode::kUnconditioned;
    } else if (cli.mode == "instruments") {
        spec.mode = GenMode::kInstrumentInformed;
        spec.prompt = instrument_prompt(parse_instruments(cli.instruments, map));
    } else if (cli.mode == "continuation") {
        spec.mode = GenMode::kNBeatContinuation;
        if (cli.prompt_path.empty()) throw ConfigError("continuation mode needs --prompt");
        spec.prompt = continuation_prompt(load_event_csv(cli.prompt_path), cli.n_beats);
    } else {
        throw ConfigError("unknown mode '" + cli.mode + "'");
    }

    fs::create_directories(cli.out_dir);
    write_run_config(cli.out_dir, "generate",
                     {{"checkpoint", cli.checkpoint},
                      {"mode", cli.mode},
                      {"instruments", cli.instruments},
                      {"prompt", cli.prompt_path},
                      {"n_beats", std::to_string(cli.n_beats)},
                      {"samples", std::to_string(cli.samples)},
                      {"max_len", std::to_string(spec.max_len)},
                      {"max_beat", std::to_string(spec.max_beat)},
                      {"seed", std::to_string(cli.seed)},
                      {"restrict_instruments", cli.restrict_instruments ? "on" : "off"},
                      {"greedy", cli.greedy ? "on" : "off"}});

    long notes = 0;
    for (int i = 0; i < cli.samples; ++i) {
        spec.seed = cli.seed + static_cast<std::uint64_t>(i);
        const EventSequence seq = generate(model, spec);
        const fs::path base = fs::path(cli.out_dir) / sample_name(i);
        save_event_csv(seq, base.string() + ".csv");
        const MusicScore score = decode(seq, map);
        notes += static_cast<long>(score.notes.size());
        save_midi(score, base.string() + ".mid");
    }
    std::printf("generate: %d samples, %ld notes -> %s\n", cli.samples, notes,
                cli.out_dir.c_str());
    return 0;
}

int run_evaluate(const std::string& data_dir, const std::string& out_dir,
                 const std::string& map_path) {
    const InstrumentMap map = load_map(map_path);
    const Dataset ds = Dataset::load(data_dir);
    std::vector<MusicScore> scores;
    scores.reserve(ds.sequences.size());
    for (const EventSequence& seq : ds.sequences) scores.push_back(decode(seq, map));

    const MetricReport report = evaluate_scores(scores);
    long mmt = 0, mmm = 0, remi = 0, total_notes = 0;
    for (const MusicScore& s : scores) {
        mmt += count_tokens(s, TokenRepr::kMMT, map);
        mmm += count_tokens(s, TokenRepr::kMMMLike, map);
        remi += count_tokens(s, TokenRepr::kREMIPlusLike, map);
        total_notes += static_cast<long>(s.notes.size());
    }

    fs::create_directories(out_dir);
    write_run_config(out_dir, "evaluate",
                     {{"data", data_dir},
                      {"instrument_map", map_path.empty() ? "standard" : map_path}});
    write_file((fs::path(out_dir) / "metrics.csv").string(), metric_report_csv(report));
    write_file((fs::path(out_dir) / "metrics.txt").string(), metric_report_text(report));
    std::string tokens = "representation,total_tokens,ratio_to_event\n";
    const auto ratio = [&](long n) {
        return format_double(static_cast<double>(n) / static_cast<double>(mmt), 6);
    };
    tokens += "event," + std::to_string(mmt) + "," + ratio(mmt) + "\n";
    tokens += "mmm_like," + std::to_string(mmm) + "," + ratio(mmm) + "\n";
    tokens += "remi_plus_like," + std::to_string(remi) + "," + ratio(remi) + "\n";
    write_file((fs::path(out_dir) / "token_counts.csv").string(), tokens);
    std::printf("evaluate: %ld scores, %ld notes -> %s\n", report.scores_total, total_notes,
                out_dir.c_str());
    std::printf("%s", metric_report_text(report).c_str());
    return 0;
}

int run_benchmark(const std::string& checkpoint, const std::string& out_dir, int samples,
                  int max_len, std::uint64_t seed, const std::string& map_path) {
    const InstrumentMap map = load_map(map_path);
    const Model<float> model = load_checkpoint(checkpoint);
    const BenchReport report =
        benchmark_generation(model, samples, std::min(max_len, model.config().max_len), seed, map);
    fs::create_directories(out_dir);
    write_run_config(out_dir, "benchmark",
                     {{"checkpoint", checkpoint},
                      {"samples", std::to_string(samples)},
                      {"max_len", std::to_string(max_len)},
                      {"seed", std::to_string(seed)}});
    write_file((fs::path(out_dir) / "benchmark.csv").string(), bench_report_csv(report));
    write_file((fs::path(out_dir) / "benchmark.txt").string(), bench_report_text(report));
    std::printf("%s", bench_report_text(report).c_str());
    return 0;
}

int run_attention(const std::string& checkpoint, const std::string& data_dir,
                  const std::string& out_dir, int samples, std::uint64_t seed) {
    const Model<float> model = load_checkpoint(checkpoint);
    const Dataset ds = Dataset::load(data_dir);
    if (ds.sequences.empty()) throw DomainError("no sequences in " + data_dir);

    AttentionTrace trace;
    const int n = std::min<int>(samples, static_cast<int>(ds.sequences.size()));
    for (int i = 0; i < n; ++i) {
        EventSequence seq = ds.sequences[static_cast<std::size_t>(i)];
        if (static_cast<int>(seq.size()) > model.config().max_len)
            seq.resize(static_cast<std::size_t>(model.config().max_len));
        const Batch batch = Batch::from_sequences({seq});
        ForwardOptions opts;
        opts.record_attention = true;
        model.forward(batch, opts, &trace);
    }
    trace.validate();

    fs::create_directories(out_dir);
    write_run_config(out_dir, "attention",
                     {{"checkpoint", checkpoint},
                      {"data", data_dir},
                      {"samples", std::to_string(n)},
                      {"seed", std::to_string(seed)}});
    trace.save((fs::path(out_dir) / "attention_trace.mmt").string());
    std::vector<RelAttnProfile> profiles;
    for (const Field f : {kFieldBeat, kFieldPosition, kFieldPitch})
        profiles.push_back(make_profile(trace, f));
    export_profile(profiles, out_dir);
    std::printf("attention: %d samples, %d heads -> %s\n", n, trace.num_heads, out_dir.c_str());
    return 0;
}

int run_gradcheck(int layers, int model_dim, int heads, int ff_dim, double tolerance,
                  std::uint64_t seed, const std::string& out_dir) {
    ModelConfig cfg;
    cfg.layers = layers;
    cfg.model_dim = model_dim;
    cfg.heads = heads;
    cfg.feedforward_dim = ff_dim;
    cfg.max_len = 16;
    const GradCheckReport report = grad_check(cfg, tolerance, seed);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_run_config(out_dir, "gradcheck",
                         {{"layers", std::to_string(layers)},
                          {"model_dim", std::to_string(model_dim)},
                          {"heads", std::to_string(heads)},
                          {"tolerance", format_double(tolerance, 9)},
                          {"seed", std::to_string(seed)}});
        std::string csv = "array,max_rel_err\n";
        for (const auto& [name, err] : report.per_array)
            csv += name + "," + format_double(err, 12) + "\n";
        write_file((fs::path(out_dir) / "gradcheck.csv").string(), csv);
    }
    std::printf("gradcheck: %ld parameters, max rel err %.3e (%s) -> %s\n", report.checked,
                report.max_rel_err, report.worst_array.c_str(), report.pass ? "pass" : "FAIL");
    return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multitrack music transformer pipeline"};
    app.require_subcommand(1);

    std::string in, out, map_path;
    auto* convert = app.add_subcommand("convert", "normalize a MIDI file (12 steps/quarter)");
    convert->add_option("--in", in, "input MIDI file")->required();
    convert->add_option("--out", out, "output MIDI file")->required();

    auto* encode_cmd = app.add_subcommand("encode", "MIDI file to event CSV");
    encode_cmd->add_option("--in", in, "input MIDI file")->required();
    encode_cmd->add_option("--out", out, "output event CSV")->required();
    encode_cmd->add_option("--instrument-map", map_path, "instrument map CSV");

    auto* decode_cmd = app.add_subcommand("decode", "event CSV to MIDI file");
    decode_cmd->add_option("--in", in, "input event CSV")->required();
    decode_cmd->add_option("--out", out, "output MIDI file")->required();
    decode_cmd->add_option("--instrument-map", map_path, "instrument map CSV");

    TrainConfig tc;
    tc.seed = default_seed();
    auto* train_cmd = app.add_subcommand("train", "train a model on an event CSV corpus");
    train_cmd->add_option("--data", tc.data_dir, "corpus directory (manifest.txt)")->required();
    train_cmd->add_option("--out", tc.out_dir, "output directory")->required();
    train_cmd->add_option("--train-frac", tc.train_frac);
    train_cmd->add_option("--valid-frac", tc.valid_frac);
    train_cmd->add_option("--test-frac", tc.test_frac);
    train_cmd->add_option("--max-len", tc.max_len);
    train_cmd->add_option("--max-beat", tc.max_beat);
    train_cmd->add_option("--batch-size", tc.batch_size);
    train_cmd->add_option("--learning-rate", tc.learning_rate);
    train_cmd->add_option("--warmup-steps", tc.warmup_steps);
    train_cmd->add_option("--validate-every", tc.validate_every);
    train_cmd->add_option("--max-steps", tc.max_steps);
    train_cmd->add_option("--patience", tc.patience);
    train_cmd->add_option("--seed", tc.seed);
    train_cmd->add_flag("--no-augment", "disable data augmentation");
    train_cmd->add_option("--layers", tc.model.layers);
    train_cmd->add_option("--model-dim", tc.model.model_dim);
    train_cmd->add_option("--heads", tc.model.heads);
    train_cmd->add_option("--feedforward-dim", tc.model.feedforward_dim);
    train_cmd->add_option("--dropout", tc.model.dropout);

    GenCli gen;
    auto* gen_cmd = app.add_subcommand("generate", "sample sequences from a checkpoint");
    gen_cmd->add_option("--checkpoint", gen.checkpoint)->required();
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
    gen_cmd->add_option("--mode", gen.mode, "unconditioned | instruments | continuation");
    gen_cmd->add_option("--instruments", gen.instruments, "comma-separated names or codes");
    gen_cmd->add_option("--prompt", gen.prompt_path, "event CSV for continuation mode");
    gen_cmd->add_option("--n-beats", gen.n_beats, "prompt beats kept in continuation mode");
    gen_cmd->add_option("--samples", gen.samples);
    gen_cmd->add_option("--max-len", gen.max_len);
    gen_cmd->add_option("--max-beat", gen.max_beat);
    gen_cmd->add_option("--seed", gen.seed);
    gen_cmd->add_option("--instrument-map", gen.map_path);
    gen_cmd->add_flag("--restrict-instruments", gen.restrict_instruments,
                      "mask note instruments to the declared set");
    gen_cmd->add_flag("--greedy", gen.greedy, "argmax decoding instead of sampling");

    std::string data_dir;
    auto* eval_cmd = app.add_subcommand("evaluate", "objective metrics over an event corpus");
    eval_cmd->add_option("--data", data_dir, "corpus directory (manifest.txt)")->required();
    eval_cmd->add_option("--out", out, "output directory")->required();
    eval_cmd->add_option("--instrument-map", map_path);

    std::string checkpoint;
    int samples = 20;
    int bench_max_len = 1024;
    std::uint64_t seed = default_seed();
    auto* bench_cmd = app.add_subcommand("benchmark", "generation throughput report");
    bench_cmd->add_option("--checkpoint", checkpoint)->required();
    bench_cmd->add_option("--out", out, "output directory")->required();
    bench_cmd->add_option("--samples", samples);
    bench_cmd->add_option("--max-len", bench_max_len);
    bench_cmd->add_option("--seed", seed);
    bench_cmd->add_option("--instrument-map", map_path);

    int attn_samples = 100;
    auto* attn_cmd = app.add_subcommand("attention", "mean relative attention analysis");
    attn_cmd->add_option("--checkpoint", checkpoint)->required();
    attn_cmd->add_option("--data", data_dir, "corpus directory (manifest.txt)")->required();
    attn_cmd->add_option("--out", out, "output directory")->required();
    attn_cmd->add_option("--samples", attn_samples);
    attn_cmd->add_option("--seed", seed);

    int gc_layers = 2, gc_dim = 16, gc_heads = 4, gc_ff = 0;
    double gc_tol = 1e-4;
    std::uint64_t gc_seed = 7;
    std::string gc_out;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    gc_cmd->add_option("--layers", gc_layers);
    gc_cmd->add_option("--model-dim", gc_dim);
    gc_cmd->add_option("--heads", gc_heads);
    gc_cmd->add_option("--feedforward-dim", gc_ff);
    gc_cmd->add_option("--tolerance", gc_tol);
    gc_cmd->add_option("--seed", gc_seed);
    gc_cmd->add_option("--out", gc_out, "optional report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*convert) return run_convert(in, out);
        if (*encode_cmd) return run_encode(in, out, map_path);
        if (*decode_cmd) return run_decode(in, out, map_path);
        if (*train_cmd) {
            tc.augment_enabled = train_cmd->count("--no-augment") == 0;
            tc.model.max_len = tc.max_len;
            return run_train(tc);
        }
        if (*gen_cmd) return run_generate(gen);
        if (*eval_cmd) return run_evaluate(data_dir, out, map_path);
        if (*bench_cmd)
            return run_benchmark(checkpoint, out, samples, bench_max_len, seed, map_path);
        if (*attn_cmd) return run_attention(checkpoint, data_dir, out, attn_samples, seed);
        if (*gc_cmd)
            return run_gradcheck(gc_layers, gc_dim, gc_heads, gc_ff, gc_tol, gc_seed, gc_out);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
