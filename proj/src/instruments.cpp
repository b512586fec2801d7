#include "mmt/instruments.hpp"

#include <algorithm>
#include <sstream>

#include "mmt/errors.hpp"
#include "mmt/util.hpp"

namespace mmt {

namespace {

struct Group {
    const char* name;
    std::initializer_list<int> programs;
};

// 64 instrument groups over the General MIDI program list, ordered by lowest
// member program.
const Group kStandardGroups[] = {
    {"piano", {0, 1, 3}},
    {"electric-piano", {2, 4, 5}},
    {"harpsichord", {6}},
    {"clavinet", {7}},
    {"celesta", {8, 10, 15}},
    {"glockenspiel", {9}},
    {"vibraphone", {11}},
    {"marimba", {12, 13}},
    {"tubular-bells", {14}},
    {"organ", {16, 17, 18}},
    {"church-organ", {19, 20}},
    {"accordion", {21, 23}},
    {"harmonica", {22}},
    {"nylon-string-guitar", {24}},
    {"steel-string-guitar", {25}},
    {"electric-guitar", {26, 27, 28}},
    {"distortion-guitar", {29, 30, 31}},
    {"acoustic-bass", {32}},
    {"electric-bass", {33, 34}},
    {"fretless-bass", {35}},
    {"slap-bass", {36, 37}},
    {"synth-bass", {38, 39}},
    {"violin", {40}},
    {"viola", {41}},
    {"cello", {42}},
    {"contrabass", {43}},
    {"strings", {44, 45, 48, 49}},
    {"harp", {46}},
    {"timpani", {47}},
    {"synth-strings", {50, 51}},
    {"choir", {52, 53}},
    {"synth-voice", {54}},
    {"orchestra-hit", {55}},
    {"trumpet", {56, 59}},
    {"trombone", {57}},
    {"tuba", {58}},
    {"french-horn", {60}},
    {"brass", {61}},
    {"synth-brass", {62, 63}},
    {"soprano-sax", {64}},
    {"alto-sax", {65}},
    {"tenor-sax", {66}},
    {"baritone-sax", {67}},
    {"oboe", {68}},
    {"english-horn", {69}},
    {"bassoon", {70}},
    {"clarinet", {71}},
    {"piccolo", {72}},
    {"flute", {73}},
    {"recorder", {74}},
    {"pipe", {75, 76, 77, 78, 79}},
    {"synth-lead", {80, 81, 82, 83, 84, 85, 86, 87}},
    {"synth-pad", {88, 89, 90, 91, 92, 93, 94, 95}},
    {"synth-effect", {96, 97, 98, 99, 100, 101, 102, 103}},
    {"sitar", {104}},
    {"banjo", {105}},
    {"shamisen", {106}},
    {"koto", {107}},
    {"kalimba", {108}},
    {"bagpipe", {109}},
    {"fiddle", {110}},
    {"shanai", {111}},
    {"melodic-percussion", {112, 113, 114, 115, 116, 117, 118, 119}},
    {"sound-effect", {120, 121, 122, 123, 124, 125, 126, 127}},
};

}  // namespace

InstrumentMap InstrumentMap::standard() {
    InstrumentMap m;
    m.index_of_.fill(-1);
    int index = 0;
    for (const Group& g : kStandardGroups) {
        m.names_.emplace_back(g.name);
        for (int p : g.programs) m.index_of_[static_cast<std::size_t>(p)] = index;
        ++index;
    }
    m.rebuild_and_validate();
    return m;
}

InstrumentMap InstrumentMap::load_csv(const std::string& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty instrument map file", 0);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "program,instrument_index,instrument_name")
        throw ParseError("bad instrument map header", 0);

    InstrumentMap m;
    m.index_of_.fill(-1);
    std::vector<std::string> names_by_index;
    int rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 3) throw DomainError("instrument map row needs 3 columns: " + line);
        const int program = std::stoi(cells[0]);
        const int index = std::stoi(cells[1]);
        if (program < 0 || program >= kNumPrograms)
            throw DomainError("instrument map program out of range: " + cells[0]);
        if (index < 0 || index >= kMaxInstruments)
            throw DomainError("instrument map index out of range: " + cells[1]);
        if (m.index_of_[static_cast<std::size_t>(program)] != -1)
            throw DomainError("duplicate program in instrument map: " + cells[0]);
        m.index_of_[static_cast<std::size_t>(program)] = index;
        if (static_cast<int>(names_by_index.size()) <= index) names_by_index.resize(index + 1);
        if (names_by_index[static_cast<std::size_t>(index)].empty())
            names_by_index[static_cast<std::size_t>(index)] = cells[2];
        else if (names_by_index[static_cast<std::size_t>(index)] != cells[2])
            throw DomainError("conflicting names for instrument index " + cells[1]);
        ++rows;
    }
    if (rows != kNumPrograms)
        throw DomainError("instrument map must cover all 128 programs, got " +
                          std::to_string(rows));
    m.names_ = std::move(names_by_index);
    m.rebuild_and_validate();
    return m;
}

void InstrumentMap::save_csv(const std::string& path) const {
    std::ostringstream out;
    out << "program,instrument_index,instrument_name\n";
    for (int p = 0; p < kNumPrograms; ++p) {
        const int idx = index_of_[static_cast<std::size_t>(p)];
        out << p << ',' << idx << ',' << names_[static_cast<std::size_t>(idx)] << '\n';
    }
    write_file(path, out.str());
}

void InstrumentMap::rebuild_and_validate() {
    const int n = static_cast<int>(names_.size());
    if (n < 1 || n > kMaxInstruments)
        throw DomainError("instrument map must define 1..64 instruments");
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    representative_.assign(static_cast<std::size_t>(n), -1);
    for (int p = 0; p < kNumPrograms; ++p) {
        const int idx = index_of_[static_cast<std::size_t>(p)];
        if (idx < 0 || idx >= n) throw DomainError("instrument map not total on programs");
        used[static_cast<std::size_t>(idx)] = true;
        if (representative_[static_cast<std::size_t>(idx)] == -1)
            representative_[static_cast<std::size_t>(idx)] = p;
    }
    for (int i = 0; i < n; ++i) {
        if (!used[static_cast<std::size_t>(i)])
            throw DomainError("instrument indices must be contiguous; index " +
                              std::to_string(i) + " unused");
        if (names_[static_cast<std::size_t>(i)].empty())
            throw DomainError("instrument index " + std::to_string(i) + " has no name");
    }
}

int InstrumentMap::index_of_program(int program) const {
    if (program < 0 || program >= kNumPrograms)
        throw DomainError("program out of range: " + std::to_string(program));
    return index_of_[static_cast<std::size_t>(program)];
}

const std::string& InstrumentMap::name_of_index(int index) const {
    if (index < 0 || index >= num_instruments())
        throw DomainError("instrument index out of range: " + std::to_string(index));
    return names_[static_cast<std::size_t>(index)];
}

std::optional<int> InstrumentMap::index_of_name(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<int>(it - names_.begin());
}

int InstrumentMap::representative_program(int index) const {
    if (index < 0 || index >= num_instruments())
        throw DomainError("instrument index out of range: " + std::to_string(index));
    return representative_[static_cast<std::size_t>(index)];
}

}  // namespace mmt
