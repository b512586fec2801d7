#pragma once

#include <algorithm>
#include <string>
#include <tuple>
#include <vector>

#include "mmt/errors.hpp"

namespace mmt {

// Steps per quarter-note beat. Fixed across the whole pipeline.
inline constexpr int kResolution = 12;

// A note in absolute time steps. Drum notes never appear here; tempo and
// velocity are not part of the score model.
struct Note {
    int onset = 0;     // time steps, >= 0
    int pitch = 0;     // MIDI pitch 0..127
    int duration = 1;  // time steps, >= 1
    int program = 0;   // MIDI program 0..127

    friend bool operator==(const Note&, const Note&) = default;
};

inline bool note_less(const Note& a, const Note& b) {
    return std::tie(a.onset, a.pitch, a.duration, a.program) <
           std::tie(b.onset, b.pitch, b.duration, b.program);
}

struct MusicScore {
    std::vector<Note> notes;
    int resolution = kResolution;
};

inline void validate(const MusicScore& s) {
    if (s.resolution != kResolution)
        throw DomainError("score resolution must be " + std::to_string(kResolution));
    for (const Note& n : s.notes) {
        if (n.onset < 0) throw DomainError("negative note onset");
        if (n.pitch < 0 || n.pitch > 127) throw DomainError("pitch out of range");
        if (n.duration < 1) throw DomainError("note duration must be >= 1");
        if (n.program < 0 || n.program > 127) throw DomainError("program out of range");
    }
}

inline std::vector<Note> sorted_notes(const MusicScore& s) {
    std::vector<Note> out = s.notes;
    std::stable_sort(out.begin(), out.end(), note_less);
    return out;
}

}  // namespace mmt
