#include "mmt/events.hpp"

#include "mmt/errors.hpp"

namespace mmt {

const char* event_type_name(EventType t) {
    switch (t) {
        case EventType::kStartOfSong: return "start-of-song";
        case EventType::kInstrument: return "instrument";
        case EventType::kStartOfNotes: return "start-of-notes";
        case EventType::kNote: return "note";
        case EventType::kEndOfSong: return "end-of-song";
    }
    return "?";
}

const char* field_name(int field) {
    static const char* names[kNumFields] = {"type",     "beat",     "position",
                                            "pitch",    "duration", "instrument"};
    return names[field];
}

int DurationTable::value(int code) {
    if (code < 1 || code > size()) throw DomainError("duration code out of range");
    return steps[static_cast<std::size_t>(code - 1)];
}

namespace {

std::optional<GrammarIssue> issue(std::size_t i, std::string what) {
    return GrammarIssue{i, std::move(what)};
}

}  // namespace

std::optional<GrammarIssue> find_grammar_issue(const EventSequence& seq, GrammarLevel level) {
    if (seq.empty()) return issue(0, "empty sequence");

    for (std::size_t i = 0; i < seq.size(); ++i) {
        for (int f = 0; f < kNumFields; ++f) {
            const int c = seq[i][f];
            if (c < 0 || c >= FieldVocab::size(f))
                return issue(i, std::string(field_name(f)) + " code out of range");
        }
    }

    if (seq[0].type() != static_cast<int>(EventType::kStartOfSong))
        return issue(0, "sequence must begin with start-of-song");

    bool seen_start_of_notes = false;
    int last_type = -1;
    int last_note_beat = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const Event& e = seq[i];
        const int t = e.type();
        if (t < last_type) return issue(i, "decreasing type code");
        last_type = t;

        switch (static_cast<EventType>(t)) {
            case EventType::kStartOfSong:
                if (i != 0) return issue(i, "start-of-song not at sequence head");
                break;
            case EventType::kStartOfNotes:
                if (seen_start_of_notes) return issue(i, "duplicate start-of-notes");
                seen_start_of_notes = true;
                break;
            case EventType::kNote:
                if (!seen_start_of_notes) return issue(i, "note event before start-of-notes");
                break;
            case EventType::kEndOfSong:
                if (i + 1 != seq.size()) return issue(i, "end-of-song not at sequence tail");
                break;
            case EventType::kInstrument:
                break;
        }

        if (e.is_note()) {
            for (int f = kFieldBeat; f < kNumFields; ++f)
                if (e[f] == 0)
                    return issue(i, std::string("zero ") + field_name(f) + " code on note event");
            if (level == GrammarLevel::kFull) {
                if (e.beat() < last_note_beat) return issue(i, "decreasing note beat code");
                last_note_beat = e.beat();
            }
        } else {
            for (int f = kFieldBeat; f < kFieldInstrument; ++f)
                if (e[f] != 0)
                    return issue(i, std::string("nonzero ") + field_name(f) +
                                        " code on non-note event");
            // Instrument codes are allowed (not required) on instrument events.
            if (t != static_cast<int>(EventType::kInstrument) && e.instrument() != 0)
                return issue(i, "nonzero instrument code on structural event");
        }
    }

    if (!seen_start_of_notes) return issue(seq.size() - 1, "missing start-of-notes");
    return std::nullopt;
}

void require_grammar(const EventSequence& seq, GrammarLevel level) {
    if (auto bad = find_grammar_issue(seq, level))
        throw GrammarError(bad->description, bad->event_index);
}

}  // namespace mmt
