#include "mmt/metrics.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>

#include "mmt/codec.hpp"
#include "mmt/errors.hpp"
#include "mmt/sampler.hpp"
#include "mmt/util.hpp"

namespace mmt {

namespace {

constexpr int kPitchClasses = 12;
// Interval sets relative to the root.
constexpr std::array<int, 7> kMajor = {0, 2, 4, 5, 7, 9, 11};
constexpr std::array<int, 7> kNaturalMinor = {0, 2, 3, 5, 7, 8, 10};

MetricStats stats_of(const std::vector<double>& xs) {
    MetricStats s;
    s.n = static_cast<long>(xs.size());
    if (xs.empty()) return s;
    KahanSum sum;
    for (double x : xs) sum.add(x);
    s.mean = sum.value() / static_cast<double>(xs.size());
    if (xs.size() >= 2) {
        KahanSum sq;
        for (double x : xs) sq.add((x - s.mean) * (x - s.mean));
        const double var = sq.value() / static_cast<double>(xs.size() - 1);
        s.ci95 = 1.96 * std::sqrt(var / static_cast<double>(xs.size()));
    }
    return s;
}

std::string stats_row(const char* name, const MetricStats& s) {
    return std::string(name) + "," + format_double(s.mean, 9) + "," + format_double(s.ci95, 9) +
           "," + std::to_string(s.n) + "\n";
}

}  // namespace

double pitch_class_entropy(const MusicScore& score) {
    if (score.notes.empty()) throw UndefinedMetricError("pitch_class_entropy of an empty score");
    std::array<long, kPitchClasses> hist{};
    for (const Note& n : score.notes) ++hist[static_cast<std::size_t>(n.pitch % kPitchClasses)];
    const double total = static_cast<double>(score.notes.size());
    KahanSum h;
    for (long c : hist) {
        if (c == 0) continue;  // 0 * log 0 = 0
        const double p = static_cast<double>(c) / total;
        h.add(-p * std::log2(p));
    }
    return h.value();
}

double scale_consistency(const MusicScore& score) {
    if (score.notes.empty()) throw UndefinedMetricError("scale_consistency of an empty score");
    std::array<long, kPitchClasses> hist{};
    for (const Note& n : score.notes) ++hist[static_cast<std::size_t>(n.pitch % kPitchClasses)];
    long best = 0;
    for (int root = 0; root < kPitchClasses; ++root) {
        for (const auto& intervals : {kMajor, kNaturalMinor}) {
            long hit = 0;
            for (int iv : intervals) hit += hist[static_cast<std::size_t>((root + iv) % 12)];
            best = std::max(best, hit);
        }
    }
    return static_cast<double>(best) / static_cast<double>(score.notes.size());
}

double groove_consistency(const MusicScore& score, int bar_steps) {
    if (bar_steps < 1 || bar_steps > 64) throw DomainError("bar_steps out of range");
    if (score.notes.empty()) throw UndefinedMetricError("groove_consistency of an empty score");
    int max_onset = 0;
    for (const Note& n : score.notes) max_onset = std::max(max_onset, n.onset);
    const int bars = max_onset / bar_steps + 1;
    if (bars < 2)
        throw UndefinedMetricError("groove_consistency needs a score spanning at least 2 bars");

    std::vector<std::uint64_t> groove(static_cast<std::size_t>(bars), 0);
    for (const Note& n : score.notes)
        groove[static_cast<std::size_t>(n.onset / bar_steps)] |=
            std::uint64_t{1} << (n.onset % bar_steps);

    KahanSum hamming;
    for (int i = 0; i + 1 < bars; ++i)
        hamming.add(static_cast<double>(std::popcount(groove[static_cast<std::size_t>(i)] ^
                                                      groove[static_cast<std::size_t>(i + 1)])));
    const double mean = hamming.value() / static_cast<double>(bars - 1);
    return 1.0 - mean / static_cast<double>(bar_steps);
}

long count_tokens(const MusicScore& score, TokenRepr repr, const InstrumentMap& map) {
    validate(score);
    switch (repr) {
        case TokenRepr::kMMT: {
            std::set<int> instruments;
            for (const Note& n : score.notes) instruments.insert(map.index_of_program(n.program));
            return static_cast<long>(score.notes.size()) +
                   static_cast<long>(instruments.size()) + 3;
        }
        case TokenRepr::kMMMLike: {
            // Per track: 2 delimiters + 1 instrument + 2 per note + 1 per
            // elapsed beat across the track's onset span; + 2 global.
            std::map<int, std::vector<int>> beats_by_program;
            for (const Note& n : score.notes)
                beats_by_program[n.program].push_back(n.onset / kResolution);
            long total = 2;
            for (const auto& [program, beats] : beats_by_program) {
                (void)program;
                const auto [lo, hi] = std::minmax_element(beats.begin(), beats.end());
                total += 2 + 1 + 2 * static_cast<long>(beats.size()) + (*hi - *lo + 1);
            }
            return total;
        }
        case TokenRepr::kREMIPlusLike: {
            // 1 per bar + 1 position per distinct onset + 3 per note; + 2.
            std::set<int> onsets;
            int max_onset = -1;
            for (const Note& n : score.notes) {
                onsets.insert(n.onset);
                max_onset = std::max(max_onset, n.onset);
            }
            const long bars = score.notes.empty() ? 0 : max_onset / (4 * kResolution) + 1;
            return bars + static_cast<long>(onsets.size()) +
                   3 * static_cast<long>(score.notes.size()) + 2;
        }
    }
    throw DomainError("unknown token representation");
}

MetricReport evaluate_scores(const std::vector<MusicScore>& scores) {
    MetricReport report;
    report.scores_total = static_cast<long>(scores.size());
    std::vector<double> entropy, scale, groove;
    for (const MusicScore& s : scores) {
        try {
            entropy.push_back(pitch_class_entropy(s));
        } catch (const UndefinedMetricError&) {
        }
        try {
            scale.push_back(scale_consistency(s));
        } catch (const UndefinedMetricError&) {
        }
        try {
            groove.push_back(groove_consistency(s));
        } catch (const UndefinedMetricError&) {
        }
    }
    if (entropy.empty() && scale.empty() && groove.empty())
        throw UndefinedMetricError("no score defines any metric");
    report.pitch_class_entropy = stats_of(entropy);
    report.scale_consistency = stats_of(scale);
    report.groove_consistency = stats_of(groove);
    return report;
}

std::string metric_report_csv(const MetricReport& r) {
    std::string out = "metric,mean,ci95,n\n";
    out += stats_row("pitch_class_entropy", r.pitch_class_entropy);
    out += stats_row("scale_consistency", r.scale_consistency);
    out += stats_row("groove_consistency", r.groove_consistency);
    return out;
}

std::string metric_report_text(const MetricReport& r) {
    auto line = [](const char* name, const MetricStats& s) {
        return std::string(name) + ": " + format_double(s.mean, 4) + " +/- " +
               format_double(s.ci95, 4) + " (n=" + std::to_string(s.n) + ")\n";
    };
    std::string out = "evaluated scores: " + std::to_string(r.scores_total) + "\n";
    out += line("pitch class entropy", r.pitch_class_entropy);
    out += line("scale consistency", r.scale_consistency);
    out += line("groove consistency", r.groove_consistency);
    return out;
}

BenchReport benchmark_generation(const Model<float>& model, int n_samples, int max_len,
                                 std::uint64_t seed, const InstrumentMap& map) {
    if (n_samples <= 0) throw DomainError("benchmark needs n_samples >= 1");

    auto run = [&](std::uint64_t s) {
        GenSpec spec;
        spec.mode = GenMode::kUnconditioned;
        spec.max_len = max_len;
        spec.seed = s;
        return generate(model, spec);
    };
    run(seed);  // warmup, excluded from timing

    BenchReport report;
    report.n_samples = n_samples;
    KahanSum length_sec;
    const auto start = std::chrono::steady_clock::now();
    std::vector<EventSequence> samples;
    for (int i = 0; i < n_samples; ++i) samples.push_back(run(seed + static_cast<std::uint64_t>(i)));
    const auto stop = std::chrono::steady_clock::now();
    report.elapsed_seconds = std::chrono::duration<double>(stop - start).count();

    for (const EventSequence& seq : samples) {
        report.total_events += static_cast<long>(seq.size());
        int max_beat_code = 0;
        for (const Event& e : seq) {
            if (!e.is_note()) continue;
            ++report.total_note_events;
            max_beat_code = std::max(max_beat_code, e.beat());
        }
        length_sec.add(0.5 * max_beat_code);  // 120 BPM: half a second per beat
        report.total_notes += static_cast<long>(decode(seq, map).notes.size());
    }
    report.avg_sample_length_sec = length_sec.value() / static_cast<double>(n_samples);
    report.events_per_note =
        report.total_notes == 0
            ? 1.0
            : static_cast<double>(report.total_note_events) /
                  static_cast<double>(report.total_notes);
    report.notes_per_second =
        report.elapsed_seconds > 0.0
            ? static_cast<double>(report.total_notes) / report.elapsed_seconds
            : 0.0;
    report.hardware = hardware_descriptor();
    return report;
}

std::string bench_report_csv(const BenchReport& r) {
    std::string out = "n_samples,total_events,total_note_events,total_notes,"
                      "avg_sample_length_sec,events_per_note\n";
    out += std::to_string(r.n_samples) + "," + std::to_string(r.total_events) + "," +
           std::to_string(r.total_note_events) + "," + std::to_string(r.total_notes) + "," +
           format_double(r.avg_sample_length_sec, 9) + "," +
           format_double(r.events_per_note, 9) + "\n";
    return out;
}

std::string bench_report_text(const BenchReport& r) {
    std::string out;
    out += "samples: " + std::to_string(r.n_samples) + "\n";
    out += "events: " + std::to_string(r.total_events) + " (" +
           std::to_string(r.total_note_events) + " note events, " +
           std::to_string(r.total_notes) + " decoded notes)\n";
    out += "events per note: " + format_double(r.events_per_note, 6) + "\n";
    out += "average sample length: " + format_double(r.avg_sample_length_sec, 3) +
           " s at 120 BPM\n";
    out += "generation time: " + format_double(r.elapsed_seconds, 3) + " s\n";
    out += "notes per second: " + format_double(r.notes_per_second, 3) + "\n";
    out += "hardware: " + r.hardware + "\n";
    return out;
}

std::string hardware_descriptor() {
    std::string info;
    try {
        info = read_file("/proc/cpuinfo");
    } catch (const IoError&) {
        return "unknown cpu";
    }
    std::string model = "unknown cpu";
    int processors = 0;
    for (const std::string& line : split(info, '\n')) {
        if (line.rfind("processor", 0) == 0) ++processors;
        if (model == "unknown cpu" && line.rfind("model name", 0) == 0) {
            const std::size_t colon = line.find(':');
            if (colon != std::string::npos) {
                std::size_t at = colon + 1;
                while (at < line.size() && line[at] == ' ') ++at;
                model = line.substr(at);
            }
        }
    }
    if (processors > 0) model += " (" + std::to_string(processors) + " threads)";
    return model;
}

}  // namespace mmt
