#pragma once

#include <utility>

#include "mmt/events.hpp"
#include "mmt/instruments.hpp"
#include "mmt/score.hpp"

namespace mmt {

// Largest encodable onset: beat codes stop at 256, so onsets must stay below
// 256 beats of 12 steps.
inline constexpr int kMaxOnsetSteps = 256 * kResolution;

// Splits an onset into (beat, position) with onset = resolution*beat + position.
std::pair<int, int> decompose_onset(int onset, int resolution = kResolution);

// 1-based index of the closest allowed duration; ties go to the shorter one,
// values above the table clamp to its maximum.
int quantize_duration(int duration_steps);

int program_to_instrument(int program, const InstrumentMap& map);

// Stable lexicographic sort on (beat, position, pitch, duration, instrument).
// Inputs must all be note events.
EventSequence canonical_sort(EventSequence note_events);

// Score -> events: start-of-song, one instrument event per distinct mapped
// instrument (ascending), start-of-notes, one note event per note in
// canonical order, end-of-song.
EventSequence encode(const MusicScore& score, const InstrumentMap& map);

// Events -> score. Requires structural grammar only; note order is free and
// does not affect the result beyond note-list order, which is canonicalized.
MusicScore decode(const EventSequence& seq, const InstrumentMap& map);

}  // namespace mmt
