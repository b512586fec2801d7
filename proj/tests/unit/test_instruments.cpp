#include <filesystem>
#include <set>

#include "doctest.h"
#include "mmt/errors.hpp"
#include "mmt/instruments.hpp"
#include "mmt/util.hpp"

using namespace mmt;

TEST_CASE("standard map is total and contiguous") {
    const InstrumentMap map = InstrumentMap::standard();
    CHECK(map.num_instruments() <= kMaxInstruments);
    std::set<int> seen;
    for (int p = 0; p < kNumPrograms; ++p) {
        const int idx = map.index_of_program(p);
        CHECK(idx >= 0);
        CHECK(idx < map.num_instruments());
        seen.insert(idx);
    }
    // contiguous 0-based image
    CHECK(static_cast<int>(seen.size()) == map.num_instruments());
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == map.num_instruments() - 1);
}

TEST_CASE("grand pianos collapse to one instrument") {
    const InstrumentMap map = InstrumentMap::standard();
    CHECK(map.index_of_program(0) == map.index_of_program(1));
    CHECK(map.name_of_index(map.index_of_program(0)) == "piano");
}

TEST_CASE("program range is checked") {
    const InstrumentMap map = InstrumentMap::standard();
    CHECK_THROWS_AS(map.index_of_program(128), DomainError);
    CHECK_THROWS_AS(map.index_of_program(-1), DomainError);
}

TEST_CASE("representative program maps back to its index") {
    const InstrumentMap map = InstrumentMap::standard();
    for (int i = 0; i < map.num_instruments(); ++i)
        CHECK(map.index_of_program(map.representative_program(i)) == i);
}

TEST_CASE("name lookup") {
    const InstrumentMap map = InstrumentMap::standard();
    auto idx = map.index_of_name("piano");
    REQUIRE(idx.has_value());
    CHECK(*idx == map.index_of_program(0));
    CHECK_FALSE(map.index_of_name("kazoo-orchestra").has_value());
}

TEST_CASE("csv round trip") {
    const InstrumentMap map = InstrumentMap::standard();
    const std::string path =
        (std::filesystem::temp_directory_path() / "mmt_map.csv").string();
    map.save_csv(path);
    const InstrumentMap back = InstrumentMap::load_csv(path);
    CHECK(back.num_instruments() == map.num_instruments());
    for (int p = 0; p < kNumPrograms; ++p)
        CHECK(back.index_of_program(p) == map.index_of_program(p));
    for (int i = 0; i < map.num_instruments(); ++i)
        CHECK(back.name_of_index(i) == map.name_of_index(i));
}

TEST_CASE("shipped instrument map file equals the built-in table") {
    const std::string shipped = std::string(TEST_DATA_DIR) + "/instrument_map.csv";
    const InstrumentMap map = InstrumentMap::load_csv(shipped);
    const InstrumentMap std_map = InstrumentMap::standard();
    for (int p = 0; p < kNumPrograms; ++p)
        CHECK(map.index_of_program(p) == std_map.index_of_program(p));

    const std::string rewritten =
        (std::filesystem::temp_directory_path() / "mmt_map_rewrite.csv").string();
    std_map.save_csv(rewritten);
    CHECK(read_file(shipped) == read_file(rewritten));
}

TEST_CASE("malformed map files are rejected") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "mmt_bad_map.csv").string();
    write_file(path, "program,instrument_index,instrument_name\n0,0,piano\n");
    CHECK_THROWS(InstrumentMap::load_csv(path));  // not total
    write_file(path, "nope\n");
    CHECK_THROWS(InstrumentMap::load_csv(path));
}
