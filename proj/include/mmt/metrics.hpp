#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmt/instruments.hpp"
#include "mmt/model.hpp"
#include "mmt/score.hpp"

namespace mmt {

// Shannon entropy (base 2) of the 12-bin pitch-class histogram.
double pitch_class_entropy(const MusicScore& score);

// Max over 24 scales (12 roots x natural major/minor) of the fraction of
// notes whose pitch class lies in the scale.
double scale_consistency(const MusicScore& score);

// 1 - mean Hamming distance between consecutive 48-step bar onset vectors,
// normalized by the bar length.  Throws UndefinedMetricError below 2 bars.
double groove_consistency(const MusicScore& score, int bar_steps = 48);

enum class TokenRepr { kMMT, kMMMLike, kREMIPlusLike };

long count_tokens(const MusicScore& score, TokenRepr repr, const InstrumentMap& map);

struct MetricStats {
    double mean = 0.0;
    double ci95 = 0.0;  // 1.96 * standard error
    long n = 0;
};

struct MetricReport {
    MetricStats pitch_class_entropy;
    MetricStats scale_consistency;
    MetricStats groove_consistency;
    long scores_total = 0;
};

// Skips scores on which a metric is undefined; throws UndefinedMetricError
// when no score defines any metric.
MetricReport evaluate_scores(const std::vector<MusicScore>& scores);

std::string metric_report_csv(const MetricReport& report);
std::string metric_report_text(const MetricReport& report);

struct BenchReport {
    long n_samples = 0;
    long total_events = 0;
    long total_note_events = 0;
    long total_notes = 0;  // decoded
    double avg_sample_length_sec = 0.0;
    double events_per_note = 0.0;
    double elapsed_seconds = 0.0;
    double notes_per_second = 0.0;
    std::string hardware;
};

// Unconditioned sampling with one untimed warmup run; sample i uses seed + i.
BenchReport benchmark_generation(const Model<float>& model, int n_samples, int max_len,
                                 std::uint64_t seed, const InstrumentMap& map);

// Seed-deterministic fields only; wall-clock figures live in the text report.
std::string bench_report_csv(const BenchReport& report);
std::string bench_report_text(const BenchReport& report);

std::string hardware_descriptor();

}  // namespace mmt
