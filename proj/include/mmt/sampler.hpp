#pragma once

#include <cstdint>
#include <vector>

#include "mmt/events.hpp"
#include "mmt/model.hpp"

namespace mmt {

enum class GenMode { kUnconditioned, kInstrumentInformed, kNBeatContinuation };

struct GenSpec {
    GenMode mode = GenMode::kUnconditioned;
    EventSequence prompt;  // empty selects the minimal prompt for the mode
    int max_len = 1024;
    int max_beat = 256;
    std::uint64_t seed = 0;
    bool restrict_to_declared_instruments = false;
    bool greedy = false;
};

struct GenStats {
    long forward_steps = 0;
};

// k = max(1, ceil(0.1 * vocab size)) -> (1, 26, 2, 13, 3, 7).
int top_k_for_field(Field field);

// Softmax restricted to the k highest logits (ties resolved toward lower
// indices); all other codes get probability zero.  Throws DomainError when
// every retained logit is -inf, and when k < 1.
std::vector<double> topk_mask(const std::vector<double>& logits, int k);

// Zeroes probabilities of codes < floor and renormalizes; throws
// ConstraintConflict when that removes all mass.
void apply_monotonic_constraint(std::vector<double>& probs, int floor);

// Prompt builders for the three modes.
EventSequence unconditioned_prompt();
EventSequence instrument_prompt(const std::vector<int>& instrument_codes);  // 1-based codes
// Header events plus every note event with beat code <= n_beats.
EventSequence continuation_prompt(const EventSequence& full, int n_beats);

template <typename T>
EventSequence generate(const Model<T>& model, const GenSpec& spec, GenStats* stats = nullptr);

extern template EventSequence generate<float>(const Model<float>&, const GenSpec&, GenStats*);
extern template EventSequence generate<double>(const Model<double>&, const GenSpec&, GenStats*);

}  // namespace mmt
