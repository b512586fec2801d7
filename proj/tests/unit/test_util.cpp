#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "mmt/errors.hpp"
#include "mmt/util.hpp"

using namespace mmt;

TEST_CASE("rng is deterministic per seed") {
    Rng a(42), b(42), c(43);
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.uniform01() == b.uniform01());
    CHECK(a.next_u64() != c.next_u64());
}

TEST_CASE("rng ranges") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto v = rng.uniform_int(-5, 6);
        CHECK(v >= -5);
        CHECK(v <= 6);
        CHECK(rng.bounded(7) < 7);
    }
}

TEST_CASE("rng uniform_int covers both endpoints") {
    Rng rng(9);
    bool lo = false, hi = false;
    for (int i = 0; i < 500; ++i) {
        const auto v = rng.uniform_int(-5, 6);
        lo = lo || v == -5;
        hi = hi || v == 6;
    }
    CHECK(lo);
    CHECK(hi);
}

TEST_CASE("shuffle permutes deterministically") {
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    Rng a(3);
    a.shuffle(v);
    std::vector<int> w{0, 1, 2, 3, 4, 5, 6, 7};
    Rng b(3);
    b.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("kahan summation beats naive accumulation") {
    KahanSum k;
    k.add(1.0);
    for (int i = 0; i < 10000000; ++i) k.add(1e-16);
    CHECK(k.value() == doctest::Approx(1.0 + 1e-9).epsilon(1e-12));
}

TEST_CASE("format_double is fixed precision") {
    CHECK(format_double(1.0, 3) == "1.000");
    CHECK(format_double(0.875, 9) == "0.875000000");
    CHECK(format_double(-2.5, 1) == "-2.5");
}

TEST_CASE("split") {
    CHECK(split("a,b,c", ',') == std::vector<std::string>{"a", "b", "c"});
    CHECK(split("a,,c", ',') == std::vector<std::string>{"a", "", "c"});
    CHECK(split("", ',') == std::vector<std::string>{""});
}

TEST_CASE("file io round trip and errors") {
    const std::string path = (std::filesystem::temp_directory_path() / "mmt_util_io.txt").string();
    write_file(path, "hello\n");
    CHECK(read_file(path) == "hello\n");
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_file(path), IoError);
    CHECK_THROWS_AS(write_file("/nonexistent-dir/x/y", "z"), IoError);
}
