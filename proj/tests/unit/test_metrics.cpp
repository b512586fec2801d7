#include <cmath>
#include <set>

#include "doctest.h"
#include "mmt/errors.hpp"
#include "mmt/metrics.hpp"
#include "synthetic.hpp"

using namespace mmt;

namespace {

MusicScore from_pitches(const std::vector<int>& pitches, int step = 12) {
    MusicScore s;
    for (std::size_t i = 0; i < pitches.size(); ++i)
        s.notes.push_back(Note{static_cast<int>(i) * step, pitches[i], 12, 0});
    return s;
}

constexpr double kLog2Of12 = 3.584962500721156;

}  // namespace

TEST_CASE("pitch class entropy oracles") {
    CHECK(pitch_class_entropy(from_pitches({60, 60, 72, 48})) == 0.0);  // all C
    std::vector<int> chromatic;
    for (int p = 60; p < 72; ++p) chromatic.push_back(p);
    CHECK(pitch_class_entropy(from_pitches(chromatic)) ==
          doctest::Approx(kLog2Of12).epsilon(1e-12));
    // 3 C's and 1 G
    CHECK(pitch_class_entropy(from_pitches({60, 60, 60, 67})) ==
          doctest::Approx(0.8112781244591328).epsilon(1e-12));
    CHECK_THROWS_AS(pitch_class_entropy(MusicScore{}), UndefinedMetricError);
}

TEST_CASE("entropy is transposition invariant") {
    const std::vector<int> pitches{60, 62, 64, 67, 69};
    std::vector<int> up;
    for (int p : pitches) up.push_back(p + 12);
    CHECK(pitch_class_entropy(from_pitches(pitches)) ==
          doctest::Approx(pitch_class_entropy(from_pitches(up))).epsilon(1e-15));
}

TEST_CASE("scale consistency oracles") {
    // C major scale: fully consistent
    CHECK(scale_consistency(from_pitches({60, 62, 64, 65, 67, 69, 71})) == 1.0);
    // C major + F#: best cover is 7 of 8 (the F spoils G major too)
    CHECK(scale_consistency(from_pitches({60, 62, 64, 65, 67, 69, 71, 66})) ==
          doctest::Approx(0.875).epsilon(1e-12));
    // C lydian = G major scale content: fully consistent
    CHECK(scale_consistency(from_pitches({60, 62, 64, 66, 67, 69, 71})) == 1.0);
    // chromatic: any 7-note scale covers 7/12
    std::vector<int> chromatic;
    for (int p = 60; p < 72; ++p) chromatic.push_back(p);
    CHECK(scale_consistency(from_pitches(chromatic)) ==
          doctest::Approx(7.0 / 12.0).epsilon(1e-12));
    // A natural minor = C major pitch content
    CHECK(scale_consistency(from_pitches({57, 59, 60, 62, 64, 65, 67})) == 1.0);
    CHECK_THROWS_AS(scale_consistency(MusicScore{}), UndefinedMetricError);
}

TEST_CASE("groove consistency oracles") {
    // identical bars: onsets at steps 0 and 24 of each 48-step bar
    MusicScore periodic;
    for (int bar = 0; bar < 4; ++bar) {
        periodic.notes.push_back(Note{bar * 48, 60, 12, 0});
        periodic.notes.push_back(Note{bar * 48 + 24, 64, 12, 0});
    }
    CHECK(groove_consistency(periodic) == 1.0);

    // bar A fully onset-filled, bar B empty except one forced note
    MusicScore ab;
    for (int i = 0; i < 48; ++i) ab.notes.push_back(Note{i, 60, 1, 0});
    ab.notes.push_back(Note{95, 60, 1, 0});  // lone onset late in bar 2
    // hamming = 47 mismatches + 1 mismatch at step 47 vs 95? positions differ:
    // bar 1 has all 48, bar 2 has step 47 only -> distance 47.
    CHECK(groove_consistency(ab) == doctest::Approx(1.0 - 47.0 / 48.0).epsilon(1e-12));

    // 3 bars with hamming distances 4 then 8
    MusicScore three;
    auto add_bar = [&](int bar, const std::vector<int>& steps) {
        for (int st : steps) three.notes.push_back(Note{bar * 48 + st, 60, 1, 0});
    };
    add_bar(0, {0, 12, 24, 36});
    add_bar(1, {0, 12, 25, 37});  // distance 4 from bar 0
    add_bar(2, {1, 13, 24, 36});  // distance 8 from bar 1
    CHECK(groove_consistency(three) == doctest::Approx(0.875).epsilon(1e-12));

    CHECK_THROWS_AS(groove_consistency(from_pitches({60})), UndefinedMetricError);
    CHECK_THROWS_AS(groove_consistency(MusicScore{}), UndefinedMetricError);
}

TEST_CASE("token count oracles") {
    const InstrumentMap map = InstrumentMap::standard();
    CHECK(count_tokens(MusicScore{}, TokenRepr::kMMT, map) == 3);

    MusicScore one;
    one.notes.push_back(Note{0, 60, 12, 0});
    CHECK(count_tokens(one, TokenRepr::kMMT, map) == 5);
    CHECK(count_tokens(one, TokenRepr::kREMIPlusLike, map) == 7);
    // one track: 2 delimiters + 1 instrument + 2 note on/off + 1 beat + 2
    CHECK(count_tokens(one, TokenRepr::kMMMLike, map) == 8);

    // MMT counts stay notes + instruments + 3
    Rng rng(15);
    for (int trial = 0; trial < 10; ++trial) {
        const MusicScore s = test::random_canonical_score(rng, 50, map);
        std::set<int> instruments;
        for (const Note& n : s.notes) instruments.insert(map.index_of_program(n.program));
        CHECK(count_tokens(s, TokenRepr::kMMT, map) ==
              50 + static_cast<long>(instruments.size()) + 3);
    }
}

TEST_CASE("compactness corpus ratios clear 2x") {
    const InstrumentMap map = InstrumentMap::standard();
    const MusicScore s = test::compactness_score(map);
    const auto mmt = static_cast<double>(count_tokens(s, TokenRepr::kMMT, map));
    CHECK(count_tokens(s, TokenRepr::kMMT, map) == 1000 + 4 + 3);
    CHECK(static_cast<double>(count_tokens(s, TokenRepr::kREMIPlusLike, map)) / mmt >= 2.0);
    CHECK(static_cast<double>(count_tokens(s, TokenRepr::kMMMLike, map)) / mmt >= 2.0);
}

TEST_CASE("evaluate_scores aggregates and skips undefined entries") {
    MusicScore periodic;
    for (int bar = 0; bar < 3; ++bar) periodic.notes.push_back(Note{bar * 48, 60, 12, 0});
    MusicScore shorty;  // too short for groove, fine for the rest
    shorty.notes.push_back(Note{0, 64, 12, 0});

    const MetricReport report = evaluate_scores({periodic, shorty});
    CHECK(report.scores_total == 2);
    CHECK(report.pitch_class_entropy.n == 2);
    CHECK(report.groove_consistency.n == 1);
    CHECK(report.groove_consistency.mean == 1.0);
    CHECK(report.groove_consistency.ci95 == 0.0);  // n < 2
    CHECK(report.scale_consistency.mean == 1.0);

    CHECK_THROWS_AS(evaluate_scores({}), UndefinedMetricError);
    CHECK_THROWS_AS(evaluate_scores({MusicScore{}}), UndefinedMetricError);
}

TEST_CASE("confidence intervals use 1.96 standard errors") {
    MusicScore a = from_pitches({60});       // entropy 0
    MusicScore b = from_pitches({60, 67});   // entropy 1
    const MetricReport report = evaluate_scores({a, b});
    CHECK(report.pitch_class_entropy.mean == doctest::Approx(0.5));
    // sample sd = sqrt(0.5), stderr = 0.5 -> ci = 0.98
    CHECK(report.pitch_class_entropy.ci95 == doctest::Approx(0.98).epsilon(1e-12));
}

TEST_CASE("report formats") {
    MusicScore periodic;
    for (int bar = 0; bar < 3; ++bar) periodic.notes.push_back(Note{bar * 48, 60, 12, 0});
    const MetricReport report = evaluate_scores({periodic});
    const std::string csv = metric_report_csv(report);
    CHECK(csv.rfind("metric,mean,ci95,n\n", 0) == 0);
    CHECK(csv.find("pitch_class_entropy,") != std::string::npos);
    CHECK(csv.find("scale_consistency,") != std::string::npos);
    CHECK(csv.find("groove_consistency,") != std::string::npos);
    CHECK(metric_report_text(report).find("groove") != std::string::npos);
}

TEST_CASE("benchmark rejects empty sample requests") {
    Model<float> model{[] {
        ModelConfig cfg;
        cfg.layers = 1;
        cfg.model_dim = 16;
        cfg.heads = 2;
        cfg.max_len = 16;
        return cfg;
    }()};
    Rng rng(4);
    model.init_params(rng);
    CHECK_THROWS_AS(benchmark_generation(model, 0, 16, 1, InstrumentMap::standard()),
                    DomainError);
}

TEST_CASE("benchmark fields are consistent") {
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.model_dim = 16;
    cfg.heads = 2;
    cfg.max_len = 24;
    cfg.dropout = 0.0;
    Model<float> model(cfg);
    Rng rng(12);
    model.init_params(rng);
    const BenchReport r = benchmark_generation(model, 3, 24, 5, InstrumentMap::standard());
    CHECK(r.n_samples == 3);
    CHECK(r.total_events >= 3);
    CHECK(r.elapsed_seconds > 0.0);
    CHECK(r.avg_sample_length_sec >= 0.0);
    if (r.total_notes > 0)
        CHECK(r.events_per_note == doctest::Approx(static_cast<double>(r.total_note_events) /
                                                   static_cast<double>(r.total_notes)));
    const std::string csv = bench_report_csv(r);
    CHECK(csv.rfind("n_samples,total_events,total_note_events,total_notes,"
                    "avg_sample_length_sec,events_per_note\n", 0) == 0);
    CHECK(csv.find("notes_per_second") == std::string::npos);  // wall clock stays out
    const std::string text = bench_report_text(r);
    CHECK(text.find("notes per second") != std::string::npos);
    CHECK(text.find("hardware") != std::string::npos);
}
