#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmt/events.hpp"
#include "mmt/model.hpp"
#include "mmt/util.hpp"

namespace mmt {

struct TrainConfig {
    std::string data_dir;
    std::string out_dir;
    double train_frac = 0.8;
    double valid_frac = 0.1;
    double test_frac = 0.1;
    int max_len = 1024;
    int max_beat = 256;
    int batch_size = 4;
    double learning_rate = 1e-3;
    int warmup_steps = 100;
    int validate_every = 1000;
    long max_steps = 200000;
    int patience = 20;
    std::uint64_t seed = 0;
    bool augment_enabled = true;
    ModelConfig model;

    void validate() const;  // throws ConfigError
};

// Directory of EventSequence CSVs listed by a manifest file (one relative
// path per line).
struct Dataset {
    std::vector<std::string> paths;
    std::vector<EventSequence> sequences;

    static Dataset load(const std::string& dir,
                        const std::string& manifest_name = "manifest.txt");
};

struct DataSplit {
    std::vector<int> train, valid, test;
};

// Seeded shuffle, then contiguous slices of floor(n * fraction) songs; the
// remainder goes to test.
DataSplit split_dataset(int count, double train_frac, double valid_frac, double test_frac,
                        std::uint64_t seed);

// Pitch shift by s ~ U{-5..6} (dropping notes leaving 0..127) followed by a
// rebase onto a uniformly random distinct note beat (earlier notes dropped).
EventSequence augment(const EventSequence& seq, Rng& rng);
EventSequence augment(const EventSequence& seq, std::uint64_t seed);

struct Example {
    EventSequence events;             // padded to max_len with all-zero events
    std::vector<std::uint8_t> valid;  // 1 for real events
    int target_count = 0;             // valid shift-by-one target positions
};

// Returns nullopt (skip signal) for sequences shorter than 2 events after
// trimming.
std::optional<Example> make_example(const EventSequence& seq, int max_len, int max_beat);

struct TrainResult {
    long steps_run = 0;
    double final_train_loss = 0.0;
    double best_val_loss = 0.0;
    std::string best_checkpoint;
    std::string last_checkpoint;
    std::string log_path;
    bool stopped_early = false;
};

TrainResult train(const TrainConfig& config);

}  // namespace mmt
