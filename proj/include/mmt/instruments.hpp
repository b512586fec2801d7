#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace mmt {

inline constexpr int kNumPrograms = 128;
inline constexpr int kMaxInstruments = 64;

// Total mapping from the 128 MIDI programs onto at most 64 named instruments.
// Indices are 0-based and contiguous. The default table collapses programs by
// timbral family (both grand pianos land on "piano").
class InstrumentMap {
public:
    // Builds the built-in 64-instrument default.
    static InstrumentMap standard();

    // CSV with header "program,instrument_index,instrument_name", 128 rows.
    static InstrumentMap load_csv(const std::string& path);
    void save_csv(const std::string& path) const;

    int index_of_program(int program) const;
    const std::string& name_of_index(int index) const;
    std::optional<int> index_of_name(const std::string& name) const;

    // First program that maps to the index; the deterministic inverse used
    // when decoding events back to a score.
    int representative_program(int index) const;

    int num_instruments() const { return static_cast<int>(names_.size()); }

private:
    InstrumentMap() = default;
    void rebuild_and_validate();

    std::array<int, kNumPrograms> index_of_{};
    std::vector<std::string> names_;
    std::vector<int> representative_;
};

}  // namespace mmt
