#include "mmt/event_csv.hpp"

#include <sstream>

#include "mmt/errors.hpp"
#include "mmt/util.hpp"

namespace mmt {

std::string event_sequence_to_csv(const EventSequence& seq) {
    std::ostringstream out;
    out << kEventCsvHeader << '\n';
    for (const Event& e : seq) {
        out << e.type() << ',' << e.beat() << ',' << e.position() << ',' << e.pitch() << ','
            << e.duration() << ',' << e.instrument() << '\n';
    }
    return out.str();
}

EventSequence event_sequence_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty event file", 0);
    std::size_t offset = line.size() + 1;  // start of the next line
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kEventCsvHeader) throw ParseError("bad event CSV header", 0);

    EventSequence seq;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != kNumFields)
            throw ParseError("event CSV line " + std::to_string(line_no) + " needs " +
                                 std::to_string(kNumFields) + " columns",
                             line_start);
        Event e;
        for (int f = 0; f < kNumFields; ++f) {
            try {
                std::size_t used = 0;
                const int v = std::stoi(cells[static_cast<std::size_t>(f)], &used);
                if (used != cells[static_cast<std::size_t>(f)].size())
                    throw std::invalid_argument("trailing junk");
                e[f] = v;
            } catch (const std::exception&) {
                throw ParseError("event CSV line " + std::to_string(line_no) +
                                     ": bad integer in column " + field_name(f),
                                 line_start);
            }
        }
        seq.push_back(e);
    }
    return seq;
}

void save_event_csv(const EventSequence& seq, const std::string& path) {
    write_file(path, event_sequence_to_csv(seq));
}

EventSequence load_event_csv(const std::string& path) {
    return event_sequence_from_csv(read_file(path));
}

}  // namespace mmt
