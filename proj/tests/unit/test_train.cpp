#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "mmt/errors.hpp"
#include "mmt/event_csv.hpp"
#include "mmt/train.hpp"
#include "mmt/util.hpp"
#include "synthetic.hpp"

using namespace mmt;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

}  // namespace

TEST_CASE("dataset loads the manifest in order") {
    const std::string dir = fresh_dir("mmt_ds");
    const auto corpus = test::memorization_corpus();
    test::write_corpus(dir, corpus);
    const Dataset ds = Dataset::load(dir);
    REQUIRE(ds.sequences.size() == 8);
    CHECK(ds.paths[0] == "seq0.csv");
    CHECK(ds.sequences[3] == corpus[3]);
    CHECK_THROWS_AS(Dataset::load(dir + "/nope"), IoError);
}

TEST_CASE("dataset rejects ungrammatical sequences") {
    const std::string dir = fresh_dir("mmt_ds_bad");
    auto seq = test::memorization_corpus()[0];
    std::swap(seq[5], seq[9]);  // beats out of order
    save_event_csv(seq, dir + "/bad.csv");
    write_file(dir + "/manifest.txt", "bad.csv\n");
    CHECK_THROWS_AS(Dataset::load(dir), GrammarError);
}

TEST_CASE("split_dataset partitions deterministically") {
    const DataSplit a = split_dataset(100, 0.8, 0.1, 0.1, 5);
    const DataSplit b = split_dataset(100, 0.8, 0.1, 0.1, 5);
    CHECK(a.train == b.train);
    CHECK(a.valid == b.valid);
    CHECK(a.test == b.test);
    CHECK(a.train.size() == 80);
    CHECK(a.valid.size() == 10);
    CHECK(a.test.size() == 10);

    std::set<int> all;
    for (int i : a.train) all.insert(i);
    for (int i : a.valid) all.insert(i);
    for (int i : a.test) all.insert(i);
    CHECK(all.size() == 100);

    const DataSplit c = split_dataset(100, 0.8, 0.1, 0.1, 6);
    CHECK(a.train != c.train);

    // floor fractions, remainder to test
    const DataSplit d = split_dataset(7, 0.5, 0.25, 0.25, 1);
    CHECK(d.train.size() == 3);
    CHECK(d.valid.size() == 1);
    CHECK(d.test.size() == 3);
}

TEST_CASE("split_dataset validates fractions") {
    CHECK_THROWS_AS(split_dataset(10, 0.9, 0.2, 0.1, 1), ConfigError);
    CHECK_THROWS_AS(split_dataset(10, -0.1, 0.5, 0.5, 1), ConfigError);
}

TEST_CASE("augmentation keeps sequences grammatical") {
    const auto corpus = test::memorization_corpus();
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const EventSequence aug = augment(corpus[seed % corpus.size()], seed);
        CHECK(is_grammatical(aug, GrammarLevel::kFull));
        // header survives
        CHECK(aug[0].type() == 0);
        CHECK(aug.back().type() == 4);
        bool first_note = true;
        for (const Event& e : aug)
            if (e.is_note()) {
                CHECK(e.pitch() >= 1);
                CHECK(e.pitch() <= 128);
                if (first_note) {
                    CHECK(e.beat() == 1);  // rebased to the first kept beat
                    first_note = false;
                }
            }
    }
}

TEST_CASE("augmentation applies one bounded shift and one beat origin") {
    // The corpus has exactly one note per beat 1..12 and no pitch is ever
    // shifted out of range, so the kept notes line up with an original tail.
    const auto seq = test::memorization_corpus()[0];
    std::vector<Event> orig_notes;
    for (const Event& e : seq)
        if (e.is_note()) orig_notes.push_back(e);

    std::set<int> shifts, origins;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const EventSequence aug = augment(seq, seed);
        std::vector<Event> aug_notes;
        for (const Event& e : aug)
            if (e.is_note()) aug_notes.push_back(e);
        REQUIRE_FALSE(aug_notes.empty());
        const std::size_t origin = orig_notes.size() - aug_notes.size();  // dropped prefix
        const int s = aug_notes[0].pitch() - orig_notes[origin].pitch();
        CHECK(s >= -5);
        CHECK(s <= 6);
        for (std::size_t j = 0; j < aug_notes.size(); ++j) {
            CHECK(aug_notes[j].pitch() - orig_notes[origin + j].pitch() == s);
            CHECK(aug_notes[j].beat() == static_cast<int>(j) + 1);
            CHECK(aug_notes[j].duration() == orig_notes[origin + j].duration());
            CHECK(aug_notes[j].instrument() == orig_notes[origin + j].instrument());
        }
        shifts.insert(s);
        origins.insert(static_cast<int>(origin));
    }
    CHECK(shifts.size() > 5);   // both directions get exercised
    CHECK(origins.size() > 5);  // rebasing picks varied origins
}

TEST_CASE("augmentation is seed deterministic") {
    const auto seq = test::memorization_corpus()[2];
    CHECK(augment(seq, 42) == augment(seq, 42));
}

TEST_CASE("make_example trims, pads and masks") {
    const auto seq = test::memorization_corpus()[0];  // 17 events
    const auto ex = make_example(seq, 32, 256);
    REQUIRE(ex.has_value());
    CHECK(ex->events.size() == 32);
    CHECK(ex->valid.size() == 32);
    CHECK(std::count(ex->valid.begin(), ex->valid.end(), 1) == 17);
    CHECK(ex->target_count == 16);
    CHECK(ex->events[17] == Event{});

    // truncation to max_len keeps a grammatical prefix
    const auto small = make_example(seq, 10, 256);
    REQUIRE(small.has_value());
    CHECK(std::count(small->valid.begin(), small->valid.end(), 1) == 10);

    // beat cut drops late notes but keeps the end-of-song
    const auto cut = make_example(seq, 32, 6);
    REQUIRE(cut.has_value());
    int notes = 0;
    for (std::size_t i = 0; i < cut->events.size(); ++i)
        if (cut->valid[i] && cut->events[i].is_note()) {
            CHECK(cut->events[i].beat() <= 6);
            ++notes;
        }
    CHECK(notes == 6);

    EventSequence tiny;
    tiny.push_back(Event::structural(EventType::kStartOfSong));
    CHECK_FALSE(make_example(tiny, 32, 256).has_value());
}

TEST_CASE("train memorizes a tiny corpus and logs deterministically") {
    const std::string data = fresh_dir("mmt_train_data");
    test::write_corpus(data, test::memorization_corpus());

    TrainConfig tc;
    tc.data_dir = data;
    tc.out_dir = fresh_dir("mmt_train_out");
    tc.train_frac = 1.0;
    tc.valid_frac = 0.0;
    tc.test_frac = 0.0;
    tc.max_len = 32;
    tc.batch_size = 8;
    tc.learning_rate = 1e-3;
    tc.warmup_steps = 10;
    tc.validate_every = 50;
    tc.max_steps = 300;
    tc.patience = 1000;
    tc.seed = 17;
    tc.augment_enabled = false;
    tc.model.layers = 2;
    tc.model.model_dim = 32;
    tc.model.heads = 4;
    tc.model.max_len = 32;
    tc.model.dropout = 0.0;

    const TrainResult r = train(tc);
    CHECK(r.steps_run == 300);
    CHECK(r.final_train_loss < 3.0);  // down from ~11.9 at init
    CHECK(fs::exists(r.best_checkpoint));
    CHECK(fs::exists(r.last_checkpoint));
    CHECK(fs::exists(r.log_path));

    const std::string log = read_file(r.log_path);
    CHECK(log.rfind("step,train_loss,valid_loss\n", 0) == 0);
    CHECK(split(log, '\n').size() >= 300);

    // same config, fresh directory: byte-identical log
    TrainConfig tc2 = tc;
    tc2.out_dir = fresh_dir("mmt_train_out2");
    const TrainResult r2 = train(tc2);
    CHECK(read_file(r2.log_path) == log);
}

TEST_CASE("training fails fast on bad configs") {
    TrainConfig tc;
    tc.data_dir = "/nonexistent";
    tc.out_dir = "/tmp";
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc.batch_size = 4;
    tc.train_frac = 2.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("early stopping fires with zero patience budget") {
    const std::string data = fresh_dir("mmt_es_data");
    test::write_corpus(data, test::memorization_corpus());
    TrainConfig tc;
    tc.data_dir = data;
    tc.out_dir = fresh_dir("mmt_es_out");
    tc.train_frac = 0.5;
    tc.valid_frac = 0.5;
    tc.test_frac = 0.0;
    tc.max_len = 32;
    tc.batch_size = 4;
    tc.learning_rate = 1e-30;  // updates vanish below float resolution; loss never improves
    tc.warmup_steps = 1;
    tc.validate_every = 5;
    tc.max_steps = 500;
    tc.patience = 2;
    tc.seed = 3;
    tc.augment_enabled = false;
    tc.model.layers = 1;
    tc.model.model_dim = 16;
    tc.model.heads = 2;
    tc.model.max_len = 32;
    tc.model.dropout = 0.0;
    const TrainResult r = train(tc);
    CHECK(r.stopped_early);
    CHECK(r.steps_run <= 20);
}
