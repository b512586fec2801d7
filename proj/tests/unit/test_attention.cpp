#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mmt/attention.hpp"
#include "mmt/errors.hpp"
#include "mmt/util.hpp"
#include "synthetic.hpp"

using namespace mmt;

namespace {

// Three note events, beats decoded (0, 0, 1); a(1,0)=1, a(2,0)=0.25,
// a(2,1)=0.75.
AttentionTrace three_note_trace() {
    AttentionTrace trace;
    trace.num_heads = 1;
    AttentionSample sample;
    for (const int beat_code : {1, 1, 2})
        sample.events.push_back(Event::note(beat_code, 1, 61, 1, 1));
    MatX<double> w = MatX<double>::Zero(3, 3);
    w(0, 0) = 1.0;
    w(1, 0) = 1.0;
    w(2, 0) = 0.25;
    w(2, 1) = 0.75;
    sample.heads.push_back(w);
    trace.samples.push_back(sample);
    return trace;
}

// Every strictly-lower-triangle weight is the same constant; the diagonal
// absorbs the rest of the row. n = 9 keeps all sums exact in binary.
AttentionTrace constant_trace(Rng& rng, int n_samples, int n_heads) {
    constexpr int n = 9;
    constexpr double c = 0.125;
    AttentionTrace trace;
    trace.num_heads = n_heads;
    for (int i = 0; i < n_samples; ++i) {
        AttentionSample sample;
        for (int e = 0; e < n; ++e) {
            if (e >= 2 && rng.uniform01() < 0.3) {
                sample.events.push_back(Event::instrument_decl(1 + static_cast<int>(rng.bounded(64))));
            } else {
                sample.events.push_back(Event::note(
                    1 + static_cast<int>(rng.bounded(256)), 1 + static_cast<int>(rng.bounded(12)),
                    1 + static_cast<int>(rng.bounded(128)), 1 + static_cast<int>(rng.bounded(23)),
                    1 + static_cast<int>(rng.bounded(64))));
            }
        }
        for (int h = 0; h < n_heads; ++h) {
            MatX<double> w = MatX<double>::Zero(n, n);
            for (int r = 0; r < n; ++r) {
                for (int t = 0; t < r; ++t) w(r, t) = c;
                w(r, r) = 1.0 - c * static_cast<double>(r);
            }
            sample.heads.push_back(std::move(w));
        }
        trace.samples.push_back(std::move(sample));
    }
    return trace;
}

}  // namespace

TEST_CASE("trace validation") {
    AttentionTrace trace = three_note_trace();
    CHECK_NOTHROW(trace.validate());

    trace.samples[0].heads[0](0, 1) = 0.5;  // above the diagonal
    CHECK_THROWS_AS(trace.validate(), DomainError);

    trace = three_note_trace();
    trace.samples[0].heads[0](2, 0) = 0.5;  // row no longer sums to 1
    CHECK_THROWS_AS(trace.validate(), DomainError);

    trace = three_note_trace();
    trace.num_heads = 2;  // head count mismatch
    CHECK_THROWS_AS(trace.validate(), DomainError);

    trace = three_note_trace();
    trace.samples[0].heads[0](1, 0) = -0.2;
    trace.samples[0].heads[0](1, 1) = 1.2;
    CHECK_THROWS_AS(trace.validate(), DomainError);
}

TEST_CASE("worked example gamma and gain") {
    const AttentionTrace trace = three_note_trace();
    const auto gamma = mean_relative_attention(trace, kFieldBeat);
    REQUIRE(gamma.size() == 1);
    REQUIRE(gamma[0].size() == 2);
    CHECK(gamma[0].at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gamma[0].at(-1) == doctest::Approx(0.5).epsilon(1e-12));

    const auto gain = relative_attention_gain(gamma, trace, kFieldBeat);
    CHECK(gain[0].at(0) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(gain[0].at(-1) == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("single pair concentrates all mass") {
    AttentionTrace trace;
    trace.num_heads = 1;
    AttentionSample sample;
    sample.events.push_back(Event::note(1, 1, 61, 1, 1));
    sample.events.push_back(Event::note(4, 1, 61, 1, 1));
    MatX<double> w = MatX<double>::Zero(2, 2);
    w(0, 0) = 1.0;
    w(1, 0) = 1.0;
    sample.heads.push_back(w);
    trace.samples.push_back(sample);
    const auto gamma = mean_relative_attention(trace, kFieldBeat);
    REQUIRE(gamma[0].size() == 1);
    CHECK(gamma[0].at(-3) == 1.0);
}

TEST_CASE("constant attention has zero gain") {
    Rng rng(51);
    const AttentionTrace trace = constant_trace(rng, 20, 3);
    for (const Field f : {kFieldBeat, kFieldPosition, kFieldPitch}) {
        const auto gamma = mean_relative_attention(trace, f);
        const auto gain = relative_attention_gain(gamma, trace, f);
        for (const auto& head : gain)
            for (const auto& [k, g] : head) CHECK(std::abs(g) <= 1e-12);
    }
}

TEST_CASE("gamma sums to one and gain sums to zero") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const AttentionTrace trace = test::random_trace(rng, 5, 2, 10);
        for (const Field f : {kFieldBeat, kFieldPosition, kFieldPitch}) {
            const auto gamma = mean_relative_attention(trace, f);
            const auto gain = relative_attention_gain(gamma, trace, f);
            for (std::size_t h = 0; h < gamma.size(); ++h) {
                KahanSum gsum, gainsum;
                for (const auto& [k, v] : gamma[h]) gsum.add(v);
                for (const auto& [k, v] : gain[h]) gainsum.add(v);
                CHECK(std::abs(gsum.value() - 1.0) <= 1e-6);
                CHECK(std::abs(gainsum.value()) <= 1e-9);
            }
        }
    }
}

TEST_CASE("matches the brute force reference on small traces") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const AttentionTrace trace = test::random_trace(rng, 3, 2, 5);
        for (const Field f : {kFieldBeat, kFieldPosition, kFieldPitch}) {
            const auto gamma = mean_relative_attention(trace, f);
            const auto ref_gamma = test::brute_force_gamma(trace, f);
            const auto gain = relative_attention_gain(gamma, trace, f);
            const auto ref_gain = test::brute_force_gain(trace, f);
            REQUIRE(gamma.size() == ref_gamma.size());
            for (std::size_t h = 0; h < gamma.size(); ++h) {
                REQUIRE(gamma[h].size() == ref_gamma[h].size());
                for (const auto& [k, v] : gamma[h]) {
                    CHECK(std::abs(v - ref_gamma[h].at(k)) <= 1e-12);
                    CHECK(std::abs(gain[h].at(k) - ref_gain[h].at(k)) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("non note events never enter the pair sums") {
    AttentionTrace trace = three_note_trace();
    // declare an instrument event between the notes; attention on it must
    // be ignored
    trace.samples[0].events[1] = Event::instrument_decl(5);
    const auto gamma = mean_relative_attention(trace, kFieldBeat);
    REQUIRE(gamma[0].size() == 1);  // only the (2,0) pair remains
    CHECK(gamma[0].at(-1) == 1.0);
}

TEST_CASE("undefined and mismatched inputs raise") {
    AttentionTrace trace;
    trace.num_heads = 1;
    AttentionSample sample;
    sample.events.push_back(Event::structural(EventType::kStartOfSong));
    MatX<double> w = MatX<double>::Zero(1, 1);
    w(0, 0) = 1.0;
    sample.heads.push_back(w);
    trace.samples.push_back(sample);
    CHECK_THROWS_AS(mean_relative_attention(trace, kFieldBeat), UndefinedMetricError);

    const AttentionTrace good = three_note_trace();
    CHECK_THROWS_AS(mean_relative_attention(good, kFieldType), DomainError);
    CHECK_THROWS_AS(mean_relative_attention(good, kFieldDuration), DomainError);

    auto gamma = mean_relative_attention(good, kFieldBeat);
    gamma.push_back({});  // head count mismatch
    CHECK_THROWS_AS(relative_attention_gain(gamma, good, kFieldBeat), DomainError);
    gamma.pop_back();
    gamma[0][17] = 0.0;  // key not present in the traces
    CHECK_THROWS_AS(relative_attention_gain(gamma, good, kFieldBeat), DomainError);
}

TEST_CASE("trace container round trip") {
    Rng rng(13);
    const AttentionTrace trace = test::random_trace(rng, 4, 2, 9);
    const std::string path =
        (std::filesystem::temp_directory_path() / "mmt_trace.mmt").string();
    trace.save(path);
    const AttentionTrace back = AttentionTrace::load(path);
    CHECK_NOTHROW(back.validate());
    REQUIRE(back.samples.size() == trace.samples.size());
    CHECK(back.num_heads == trace.num_heads);
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        CHECK(back.samples[i].events == trace.samples[i].events);
        for (std::size_t h = 0; h < trace.samples[i].heads.size(); ++h) {
            const auto diff = (back.samples[i].heads[h] - trace.samples[i].heads[h])
                                  .cwiseAbs()
                                  .maxCoeff();
            CHECK(diff < 1e-6);  // float32 storage
        }
    }
    // analysis agrees before and after the round trip
    const auto a = mean_relative_attention(trace, kFieldPitch);
    const auto b = mean_relative_attention(back, kFieldPitch);
    for (std::size_t h = 0; h < a.size(); ++h)
        for (const auto& [k, v] : a[h]) CHECK(b[h].at(k) == doctest::Approx(v).epsilon(1e-5));
}

TEST_CASE("export writes csv rows and svg heatmaps") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "mmt_attn_export";
    fs::remove_all(dir);
    fs::create_directories(dir);

    RelAttnProfile p;
    p.field = kFieldBeat;
    p.gamma = {{{-1, 0.75}, {0, 0.25}}};
    p.gain = {{{-1, 0.25}, {0, -0.25}}};
    export_profile({p}, dir.string());

    const std::string csv = read_file((dir / "relative_attention.csv").string());
    CHECK(csv == "field,head,k,gamma,gain\n"
                 "beat,0,-1,0.750000000,0.250000000\n"
                 "beat,0,0,0.250000000,-0.250000000\n");
    const std::string svg = read_file((dir / "attention_gain_beat.svg").string());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("class=\"pos\"") != std::string::npos);
    CHECK(svg.find("class=\"neg\"") != std::string::npos);

    // empty profile set: header-only csv
    export_profile({}, dir.string());
    CHECK(read_file((dir / "relative_attention.csv").string()) == "field,head,k,gamma,gain\n");
}
