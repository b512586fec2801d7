#pragma once

#include <string>

#include "mmt/score.hpp"

namespace mmt {

// Reads a format 0/1 Standard MIDI File. Onsets and durations are rescaled
// from the file's ticks-per-quarter to 12 steps per quarter (round half up),
// drum-channel notes are dropped, tempo/velocity/meta data is discarded and
// durations are clamped to >= 1. A file with no usable notes is an error.
MusicScore load_midi(const std::string& path);

// Writes format 1, 480 ticks per quarter, 120 BPM, velocity 64, one track per
// distinct program. load_midi(save_midi(s)) reproduces s's note multiset.
void save_midi(const MusicScore& score, const std::string& path);

}  // namespace mmt
