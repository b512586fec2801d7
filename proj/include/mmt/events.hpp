#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mmt {

// Event type codes, in their fixed sequence order.
enum class EventType : int {
    kStartOfSong = 0,
    kInstrument = 1,
    kStartOfNotes = 2,
    kNote = 3,
    kEndOfSong = 4,
};

inline constexpr int kNumEventTypes = 5;

const char* event_type_name(EventType t);

// Field indices into an event tuple.
enum Field : int {
    kFieldType = 0,
    kFieldBeat = 1,
    kFieldPosition = 2,
    kFieldPitch = 3,
    kFieldDuration = 4,
    kFieldInstrument = 5,
};

inline constexpr int kNumFields = 6;

// Per-field code-space sizes. Code 0 is reserved for "undefined" in every
// field except type; defined values are stored as value + 1 (beat, position,
// pitch, instrument) or as a 1-based table index (duration).
struct FieldVocab {
    static constexpr std::array<int, kNumFields> sizes{5, 257, 13, 129, 24, 65};
    static constexpr int size(int field) { return sizes[static_cast<std::size_t>(field)]; }
    static constexpr int total() {
        int t = 0;
        for (int s : sizes) t += s;
        return t;
    }
};

const char* field_name(int field);

// One six-field event. All members are integer codes.
struct Event {
    std::array<int, kNumFields> codes{};

    int& operator[](int field) { return codes[static_cast<std::size_t>(field)]; }
    int operator[](int field) const { return codes[static_cast<std::size_t>(field)]; }

    int type() const { return codes[kFieldType]; }
    int beat() const { return codes[kFieldBeat]; }
    int position() const { return codes[kFieldPosition]; }
    int pitch() const { return codes[kFieldPitch]; }
    int duration() const { return codes[kFieldDuration]; }
    int instrument() const { return codes[kFieldInstrument]; }

    bool is_note() const { return type() == static_cast<int>(EventType::kNote); }

    static Event structural(EventType t) {
        Event e;
        e.codes[kFieldType] = static_cast<int>(t);
        return e;
    }
    static Event instrument_decl(int instrument_code) {
        Event e = structural(EventType::kInstrument);
        e.codes[kFieldInstrument] = instrument_code;
        return e;
    }
    static Event note(int beat_code, int position_code, int pitch_code, int duration_code,
                      int instrument_code) {
        Event e = structural(EventType::kNote);
        e.codes[kFieldBeat] = beat_code;
        e.codes[kFieldPosition] = position_code;
        e.codes[kFieldPitch] = pitch_code;
        e.codes[kFieldDuration] = duration_code;
        e.codes[kFieldInstrument] = instrument_code;
        return e;
    }

    friend bool operator==(const Event&, const Event&) = default;
};

using EventSequence = std::vector<Event>;

// The allowed note durations in time steps, indexed by duration code - 1.
// Covers binary, dotted and triplet values from one step up to 16 beats.
struct DurationTable {
    static constexpr std::array<int, 23> steps{1,  2,  3,  4,  6,  8,  10, 12,  16,  20,  24, 30,
                                               36, 40, 48, 60, 72, 84, 96, 120, 144, 168, 192};
    static constexpr int size() { return static_cast<int>(steps.size()); }
    // Duration in steps for a code in 1..23.
    static int value(int code);
};

// How strictly an event sequence is checked.
//
// kStructural is what decoding requires: section structure, reserved zeros,
// vocabulary ranges. kFull additionally requires nondecreasing beat codes
// among note events, which every encoded or generated sequence satisfies.
enum class GrammarLevel { kStructural, kFull };

struct GrammarIssue {
    std::size_t event_index;
    std::string description;
};

// Returns the first grammar violation, or nullopt if the sequence is valid.
std::optional<GrammarIssue> find_grammar_issue(const EventSequence& seq,
                                               GrammarLevel level = GrammarLevel::kFull);

// Throws GrammarError on the first violation.
void require_grammar(const EventSequence& seq, GrammarLevel level = GrammarLevel::kFull);

inline bool is_grammatical(const EventSequence& seq, GrammarLevel level = GrammarLevel::kFull) {
    return !find_grammar_issue(seq, level).has_value();
}

}  // namespace mmt
