#include "mmt/codec.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <string>

#include "mmt/errors.hpp"

namespace mmt {

std::pair<int, int> decompose_onset(int onset, int resolution) {
    if (onset < 0) throw DomainError("onset must be nonnegative");
    return {onset / resolution, onset % resolution};
}

int quantize_duration(int duration_steps) {
    if (duration_steps < 1) throw DomainError("duration must be >= 1");
    int best_code = 1;
    int best_dist = std::abs(DurationTable::steps[0] - duration_steps);
    for (int i = 1; i < DurationTable::size(); ++i) {
        const int dist = std::abs(DurationTable::steps[static_cast<std::size_t>(i)] -
                                  duration_steps);
        if (dist < best_dist) {  // ties keep the earlier, shorter entry
            best_dist = dist;
            best_code = i + 1;
        }
    }
    return best_code;
}

int program_to_instrument(int program, const InstrumentMap& map) {
    return map.index_of_program(program);
}

namespace {

bool canonical_note_less(const Event& a, const Event& b) {
    return a.codes < b.codes;  // type equal; remaining fields are in sort order
}

}  // namespace

EventSequence canonical_sort(EventSequence note_events) {
    for (std::size_t i = 0; i < note_events.size(); ++i)
        if (!note_events[i].is_note())
            throw DomainError("canonical_sort expects note events only (index " +
                              std::to_string(i) + ")");
    std::stable_sort(note_events.begin(), note_events.end(), canonical_note_less);
    return note_events;
}

EventSequence encode(const MusicScore& score, const InstrumentMap& map) {
    validate(score);

    std::set<int> instruments;
    EventSequence notes;
    notes.reserve(score.notes.size());
    for (const Note& n : score.notes) {
        if (n.onset >= kMaxOnsetSteps)
            throw DomainError("onset " + std::to_string(n.onset) + " beyond beat 255; trim first");
        const auto [beat, position] = decompose_onset(n.onset);
        const int instrument = map.index_of_program(n.program);
        instruments.insert(instrument);
        notes.push_back(Event::note(beat + 1, position + 1, n.pitch + 1,
                                    quantize_duration(n.duration), instrument + 1));
    }
    notes = canonical_sort(std::move(notes));

    EventSequence seq;
    seq.reserve(notes.size() + instruments.size() + 3);
    seq.push_back(Event::structural(EventType::kStartOfSong));
    for (int instrument : instruments) seq.push_back(Event::instrument_decl(instrument + 1));
    seq.push_back(Event::structural(EventType::kStartOfNotes));
    seq.insert(seq.end(), notes.begin(), notes.end());
    seq.push_back(Event::structural(EventType::kEndOfSong));
    return seq;
}

MusicScore decode(const EventSequence& seq, const InstrumentMap& map) {
    require_grammar(seq, GrammarLevel::kStructural);

    MusicScore score;
    for (const Event& e : seq) {
        if (!e.is_note()) continue;
        Note n;
        n.onset = kResolution * (e.beat() - 1) + (e.position() - 1);
        n.pitch = e.pitch() - 1;
        n.duration = DurationTable::value(e.duration());
        n.program = map.representative_program(e.instrument() - 1);
        score.notes.push_back(n);
    }
    std::stable_sort(score.notes.begin(), score.notes.end(), note_less);
    return score;
}

}  // namespace mmt
