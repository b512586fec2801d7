#include "synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <tuple>

#include "mmt/codec.hpp"
#include "mmt/event_csv.hpp"

namespace mmt::test {

namespace {

Event make_event(int type, int beat, int position, int pitch, int duration, int instrument) {
    Event e{};
    e.codes = {type, beat, position, pitch, duration, instrument};
    return e;
}

}  // namespace

std::vector<EventSequence> memorization_corpus() {
    // C-major scale as pitch codes (midi + 1).
    const int scale[8] = {61, 63, 65, 66, 68, 70, 72, 73};
    std::vector<EventSequence> out;
    for (int i = 0; i < 8; ++i) {
        EventSequence seq;
        seq.push_back(make_event(0, 0, 0, 0, 0, 0));
        seq.push_back(make_event(1, 0, 0, 0, 0, 1));
        seq.push_back(make_event(1, 0, 0, 0, 0, 9));
        seq.push_back(make_event(2, 0, 0, 0, 0, 0));
        for (int j = 0; j < 12; ++j)
            seq.push_back(make_event(3, j + 1, 1, scale[(i + j) % 8], 4, j % 2 == 0 ? 1 : 9));
        seq.push_back(make_event(4, 0, 0, 0, 0, 0));
        out.push_back(std::move(seq));
    }
    return out;
}

void write_corpus(const std::string& dir, const std::vector<EventSequence>& seqs) {
    std::filesystem::create_directories(dir);
    std::string manifest;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const std::string name = "seq" + std::to_string(i) + ".csv";
        save_event_csv(seqs[i], dir + "/" + name);
        manifest += name + "\n";
    }
    write_file(dir + "/manifest.txt", manifest);
}

MusicScore random_canonical_score(Rng& rng, int n_notes, const InstrumentMap& map) {
    MusicScore s;
    for (int i = 0; i < n_notes; ++i) {
        Note n;
        n.onset = static_cast<int>(rng.bounded(kMaxOnsetSteps));
        n.pitch = static_cast<int>(rng.bounded(128));
        n.duration = DurationTable::steps[rng.bounded(DurationTable::steps.size())];
        n.program = map.representative_program(
            static_cast<int>(rng.bounded(static_cast<std::uint64_t>(map.num_instruments()))));
        s.notes.push_back(n);
    }
    return s;
}

std::vector<Note> canonical_notes(const MusicScore& score, const InstrumentMap& map) {
    std::vector<Note> notes = score.notes;
    std::stable_sort(notes.begin(), notes.end(), [&](const Note& a, const Note& b) {
        return std::make_tuple(a.onset, a.pitch, a.duration, map.index_of_program(a.program)) <
               std::make_tuple(b.onset, b.pitch, b.duration, map.index_of_program(b.program));
    });
    return notes;
}

MusicScore compactness_score(const InstrumentMap& map) {
    Rng rng(424242);
    MusicScore s;
    const int programs[4] = {map.representative_program(0), map.representative_program(6),
                             map.representative_program(16), map.representative_program(24)};
    for (int i = 0; i < 1000; ++i) {
        Note n;
        n.onset = static_cast<int>(rng.bounded(64 * kResolution));
        n.pitch = 24 + static_cast<int>(rng.bounded(72));
        n.duration = DurationTable::steps[rng.bounded(DurationTable::steps.size())];
        n.program = programs[i % 4];
        s.notes.push_back(n);
    }
    return s;
}

AttentionTrace random_trace(Rng& rng, int n_samples, int n_heads, int max_events) {
    AttentionTrace trace;
    trace.num_heads = n_heads;
    for (int si = 0; si < n_samples; ++si) {
        AttentionSample sample;
        const int n = 2 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_events - 1)));
        for (int i = 0; i < n; ++i) {
            const bool note = i < 2 || rng.uniform01() < 0.7;
            if (note) {
                sample.events.push_back(make_event(
                    3, 1 + static_cast<int>(rng.bounded(256)), 1 + static_cast<int>(rng.bounded(12)),
                    1 + static_cast<int>(rng.bounded(128)), 1 + static_cast<int>(rng.bounded(23)),
                    1 + static_cast<int>(rng.bounded(64))));
            } else {
                sample.events.push_back(make_event(1, 0, 0, 0, 0, 0));
            }
        }
        for (int h = 0; h < n_heads; ++h) {
            MatX<double> w = MatX<double>::Zero(n, n);
            for (int r = 0; r < n; ++r) {
                double sum = 0.0;
                for (int c = 0; c <= r; ++c) {
                    w(r, c) = 0.05 + rng.uniform01();
                    sum += w(r, c);
                }
                for (int c = 0; c <= r; ++c) w(r, c) /= sum;
            }
            sample.heads.push_back(std::move(w));
        }
        trace.samples.push_back(std::move(sample));
    }
    return trace;
}

namespace {

int decoded(const Event& e, Field field) {
    if (field == kFieldBeat) return e.beat() - 1;
    if (field == kFieldPosition) return e.position() - 1;
    return e.pitch() - 1;
}

}  // namespace

std::vector<std::map<int, double>> brute_force_gamma(const AttentionTrace& trace, Field field) {
    std::vector<std::map<int, double>> num(static_cast<std::size_t>(trace.num_heads));
    std::vector<double> den(static_cast<std::size_t>(trace.num_heads), 0.0);
    for (const AttentionSample& sample : trace.samples) {
        const int n = static_cast<int>(sample.events.size());
        for (int h = 0; h < trace.num_heads; ++h)
            for (int s = 0; s < n; ++s)
                for (int t = 0; t < s; ++t) {
                    if (!sample.events[static_cast<std::size_t>(s)].is_note() ||
                        !sample.events[static_cast<std::size_t>(t)].is_note())
                        continue;
                    const int k = decoded(sample.events[static_cast<std::size_t>(t)], field) -
                                  decoded(sample.events[static_cast<std::size_t>(s)], field);
                    const double a = sample.heads[static_cast<std::size_t>(h)](s, t);
                    num[static_cast<std::size_t>(h)][k] += a;
                    den[static_cast<std::size_t>(h)] += a;
                }
    }
    std::vector<std::map<int, double>> gamma(num.size());
    for (std::size_t h = 0; h < num.size(); ++h)
        for (const auto& [k, v] : num[h]) gamma[h][k] = v / den[h];
    return gamma;
}

std::vector<std::map<int, double>> brute_force_gain(const AttentionTrace& trace, Field field) {
    std::map<int, double> counts;
    double total = 0.0;
    for (const AttentionSample& sample : trace.samples) {
        const int n = static_cast<int>(sample.events.size());
        for (int s = 0; s < n; ++s)
            for (int t = 0; t < s; ++t) {
                if (!sample.events[static_cast<std::size_t>(s)].is_note() ||
                    !sample.events[static_cast<std::size_t>(t)].is_note())
                    continue;
                counts[decoded(sample.events[static_cast<std::size_t>(t)], field) -
                       decoded(sample.events[static_cast<std::size_t>(s)], field)] += 1.0;
                total += 1.0;
            }
    }
    const auto gamma = brute_force_gamma(trace, field);
    std::vector<std::map<int, double>> gain(gamma.size());
    for (std::size_t h = 0; h < gamma.size(); ++h)
        for (const auto& [k, v] : gamma[h]) gain[h][k] = v - counts[k] / total;
    return gain;
}

}  // namespace mmt::test
