#pragma once

#include <string>

#include "mmt/events.hpp"

namespace mmt {

inline constexpr const char* kEventCsvHeader = "type,beat,position,pitch,duration,instrument";

std::string event_sequence_to_csv(const EventSequence& seq);
EventSequence event_sequence_from_csv(const std::string& text);

void save_event_csv(const EventSequence& seq, const std::string& path);
EventSequence load_event_csv(const std::string& path);

}  // namespace mmt
