#include <filesystem>

#include "doctest.h"
#include "mmt/container.hpp"
#include "mmt/errors.hpp"

using namespace mmt;

namespace {

Container sample_container() {
    Container c;
    c.set_meta("kind", "test");
    c.set_meta("alpha", "1");
    c.add("a/b", {2, 3}, {1.f, 2.f, 3.f, 4.f, 5.f, 6.f});
    c.add("scalar", {1}, {0.25f});
    return c;
}

}  // namespace

TEST_CASE("container round trip") {
    const Container c = sample_container();
    const std::string bytes = c.serialize();
    const Container back = Container::deserialize(bytes);
    CHECK(back.meta("kind") == "test");
    CHECK(back.meta("alpha") == "1");
    REQUIRE(back.arrays().size() == 2);
    const NamedArray& a = back.get("a/b");
    CHECK(a.shape == std::vector<int>{2, 3});
    CHECK(a.data == std::vector<float>{1.f, 2.f, 3.f, 4.f, 5.f, 6.f});
    CHECK(back.get("scalar").data[0] == 0.25f);
}

TEST_CASE("serialization is byte stable") {
    const Container c = sample_container();
    const std::string bytes = c.serialize();
    CHECK(Container::deserialize(bytes).serialize() == bytes);
}

TEST_CASE("container file io") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "mmt_container.mmt").string();
    sample_container().save(path);
    const Container back = Container::load(path);
    CHECK(back.meta("alpha") == "1");
    CHECK(back.find("nope") == nullptr);
    CHECK_THROWS_AS(back.get("nope"), DomainError);
    CHECK_THROWS_AS(back.meta("nope"), DomainError);
    CHECK(back.has_meta("alpha"));
    CHECK_FALSE(back.has_meta("nope"));
}

TEST_CASE("deserialize rejects malformed input") {
    const std::string good = sample_container().serialize();
    CHECK_THROWS_AS(Container::deserialize("XXXX1\n"), ParseError);
    CHECK_THROWS_AS(Container::deserialize(good.substr(0, good.size() - 2)), ParseError);
    CHECK_THROWS_AS(Container::deserialize(good + "zz"), ParseError);
    CHECK_THROWS_AS(Container::deserialize("MMTC1\nmeta k v\n"), ParseError);  // no end
}

TEST_CASE("array names and shapes are validated") {
    Container c;
    CHECK_THROWS_AS(c.add("bad name", {1}, {1.f}), DomainError);
    CHECK_THROWS_AS(c.add("x", {2, 2}, {1.f}), DomainError);  // element count mismatch
    c.add("x", {1}, {1.f});
    CHECK_THROWS_AS(c.add("x", {1}, {2.f}), DomainError);  // duplicate
}
