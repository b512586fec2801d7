#include "mmt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "mmt/errors.hpp"
#include "mmt/util.hpp"

namespace mmt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int draw(const std::vector<double>& probs, Rng& rng, bool greedy) {
    if (greedy) {
        int best = 0;
        for (std::size_t i = 1; i < probs.size(); ++i)
            if (probs[i] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
        return best;
    }
    const double u = rng.uniform01();
    double cum = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last_positive = static_cast<int>(i);
        cum += probs[i];
        if (u < cum) return static_cast<int>(i);
    }
    if (last_positive < 0) throw DomainError("draw from all-zero distribution");
    return last_positive;  // guard against rounding in the cumulative sum
}

std::vector<double> to_double(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}
const std::vector<double>& to_double(const std::vector<double>& v) { return v; }

struct PromptInfo {
    bool start_of_notes_seen = false;
    int type_floor = 0;
    int beat_floor = 1;
    std::set<int> declared;  // nonzero instrument codes from instrument events
};

PromptInfo scan_prompt(const EventSequence& prompt) {
    PromptInfo info;
    for (const Event& e : prompt) {
        info.type_floor = std::max(info.type_floor, e.type());
        if (e.type() == static_cast<int>(EventType::kStartOfNotes))
            info.start_of_notes_seen = true;
        if (e.type() == static_cast<int>(EventType::kInstrument) && e.instrument() != 0)
            info.declared.insert(e.instrument());
        if (e.is_note()) info.beat_floor = std::max(info.beat_floor, e.beat());
    }
    return info;
}

void check_prompt(const EventSequence& prompt, GenMode mode) {
    if (prompt.empty()) throw GrammarError("prompt: empty sequence", 0);
    if (prompt.back().type() == static_cast<int>(EventType::kEndOfSong))
        throw GrammarError("prompt already ends with end-of-song", prompt.size() - 1);
    // A prompt is a sequence prefix: completing it with start-of-notes (when
    // that is still pending) must yield a grammatical sequence.
    EventSequence candidate = prompt;
    if (!scan_prompt(prompt).start_of_notes_seen) {
        Event son{};
        son.codes[kFieldType] = static_cast<int>(EventType::kStartOfNotes);
        candidate.push_back(son);
    }
    if (auto bad = find_grammar_issue(candidate, GrammarLevel::kFull))
        throw GrammarError("prompt: " + bad->description, bad->event_index);
    switch (mode) {
        case GenMode::kUnconditioned:
            if (prompt.size() != 1)
                throw GrammarError("unconditioned prompt must be [start-of-song]", 0);
            break;
        case GenMode::kInstrumentInformed:
            if (prompt.back().type() != static_cast<int>(EventType::kStartOfNotes))
                throw GrammarError("instrument-informed prompt must end with start-of-notes",
                                   prompt.size() - 1);
            break;
        case GenMode::kNBeatContinuation:
            if (!scan_prompt(prompt).start_of_notes_seen)
                throw GrammarError("continuation prompt must contain start-of-notes",
                                   prompt.size() - 1);
            break;
    }
}

// Grammar-driven logit mask applied ahead of the top-k filter so the
// constrained distributions can never lose all their mass.  On the last slot
// of the window a pending start-of-notes is forced, keeping max-length stops
// grammatical.
void mask_type_logits(std::vector<double>& logits, const PromptInfo& info, bool last_slot) {
    logits[0] = kNegInf;  // a second start-of-song is never legal
    for (int c = 0; c < info.type_floor; ++c) logits[static_cast<std::size_t>(c)] = kNegInf;
    if (info.start_of_notes_seen) {
        logits[static_cast<std::size_t>(EventType::kInstrument)] = kNegInf;
        logits[static_cast<std::size_t>(EventType::kStartOfNotes)] = kNegInf;
    } else {
        logits[static_cast<std::size_t>(EventType::kNote)] = kNegInf;
        logits[static_cast<std::size_t>(EventType::kEndOfSong)] = kNegInf;
        if (last_slot) logits[static_cast<std::size_t>(EventType::kInstrument)] = kNegInf;
    }
}

}  // namespace

int top_k_for_field(Field field) {
    const int v = FieldVocab::size(field);
    return std::max(1, (v + 9) / 10);  // ceil(0.1 * v)
}

std::vector<double> topk_mask(const std::vector<double>& logits, int k) {
    if (k < 1) throw DomainError("topk_mask requires k >= 1");
    const int n = static_cast<int>(logits.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)];
    });
    const int kept = std::min(k, n);
    double maxv = kNegInf;
    for (int i = 0; i < kept; ++i) maxv = std::max(maxv, logits[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    if (!std::isfinite(maxv)) throw DomainError("topk_mask: degenerate distribution");

    std::vector<double> probs(static_cast<std::size_t>(n), 0.0);
    double sum = 0.0;
    for (int i = 0; i < kept; ++i) {
        const int idx = order[static_cast<std::size_t>(i)];
        const double l = logits[static_cast<std::size_t>(idx)];
        if (!std::isfinite(l)) continue;
        const double e = std::exp(l - maxv);
        probs[static_cast<std::size_t>(idx)] = e;
        sum += e;
    }
    for (double& p : probs) p /= sum;
    return probs;
}

void apply_monotonic_constraint(std::vector<double>& probs, int floor) {
    if (floor <= 0) return;
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (static_cast<int>(i) < floor) probs[i] = 0.0;
        sum += probs[i];
    }
    if (sum <= 0.0)
        throw ConstraintConflict("monotonic constraint removed all probability mass (floor " +
                                 std::to_string(floor) + ")");
    for (double& p : probs) p /= sum;
}

EventSequence unconditioned_prompt() { return {Event::structural(EventType::kStartOfSong)}; }

EventSequence instrument_prompt(const std::vector<int>& instrument_codes) {
    EventSequence seq{Event::structural(EventType::kStartOfSong)};
    std::set<int> codes(instrument_codes.begin(), instrument_codes.end());
    for (int c : codes) {
        if (c < 1 || c >= FieldVocab::size(kFieldInstrument))
            throw DomainError("instrument code out of range: " + std::to_string(c));
        seq.push_back(Event::instrument_decl(c));
    }
    seq.push_back(Event::structural(EventType::kStartOfNotes));
    return seq;
}

EventSequence continuation_prompt(const EventSequence& full, int n_beats) {
    require_grammar(full, GrammarLevel::kFull);
    if (n_beats < 0) throw DomainError("continuation beats must be >= 0");
    EventSequence out;
    for (const Event& e : full) {
        if (e.type() == static_cast<int>(EventType::kEndOfSong)) break;
        if (e.is_note()) {
            if (e.beat() <= n_beats) out.push_back(e);
        } else {
            out.push_back(e);
        }
    }
    return out;
}

template <typename T>
EventSequence generate(const Model<T>& model, const GenSpec& spec, GenStats* stats) {
    GenSpec gs = spec;
    if (gs.prompt.empty()) {
        switch (gs.mode) {
            case GenMode::kUnconditioned: gs.prompt = unconditioned_prompt(); break;
            case GenMode::kInstrumentInformed: gs.prompt = instrument_prompt({}); break;
            case GenMode::kNBeatContinuation:
                throw GrammarError("continuation mode requires a prompt", 0);
        }
    }
    check_prompt(gs.prompt, gs.mode);
    if (gs.max_len < static_cast<int>(gs.prompt.size()))
        throw ConfigError("max_len smaller than the prompt");
    if (gs.max_len > model.config().max_len)
        throw ConfigError("max_len exceeds the model context length");
    if (gs.max_beat < 1 || gs.max_beat >= FieldVocab::size(kFieldBeat))
        throw ConfigError("max_beat out of range");

    PromptInfo info = scan_prompt(gs.prompt);
    if (!info.start_of_notes_seen && static_cast<int>(gs.prompt.size()) >= gs.max_len)
        throw ConfigError("max_len leaves no room to complete the prompt");
    Rng rng(gs.seed);
    InferenceSession<T> session(model);
    EventSequence out = gs.prompt;
    if (static_cast<int>(out.size()) >= gs.max_len) return out;

    auto logits = session.feed_prompt(gs.prompt);
    if (stats != nullptr) stats->forward_steps = 0;

    while (static_cast<int>(out.size()) < gs.max_len) {
        // One inference pass is consumed per sampled event, note or not.
        if (stats != nullptr) ++stats->forward_steps;
        // Type: grammar mask, top-k, monotonic floor, then draw.
        std::vector<double> tl = to_double(logits[kFieldType]);
        mask_type_logits(tl, info, static_cast<int>(out.size()) + 1 == gs.max_len);
        std::vector<double> tp = topk_mask(tl, top_k_for_field(kFieldType));
        apply_monotonic_constraint(tp, info.type_floor);
        const int type = draw(tp, rng, gs.greedy);
        info.type_floor = std::max(info.type_floor, type);

        Event e{};
        e.codes[kFieldType] = type;
        if (type == static_cast<int>(EventType::kEndOfSong)) {
            out.push_back(e);
            break;
        }
        if (type == static_cast<int>(EventType::kStartOfNotes)) info.start_of_notes_seen = true;
        if (type == static_cast<int>(EventType::kNote)) {
            for (int f = kFieldBeat; f < kNumFields; ++f) {
                std::vector<double> fl = to_double(logits[static_cast<std::size_t>(f)]);
                fl[0] = kNegInf;  // zero is reserved-undefined on note events
                if (f == kFieldBeat)
                    for (int c = 1; c < info.beat_floor; ++c) fl[static_cast<std::size_t>(c)] = kNegInf;
                if (f == kFieldInstrument && gs.restrict_to_declared_instruments &&
                    !info.declared.empty()) {
                    for (std::size_t c = 1; c < fl.size(); ++c)
                        if (info.declared.count(static_cast<int>(c)) == 0) fl[c] = kNegInf;
                }
                std::vector<double> fp = topk_mask(fl, top_k_for_field(static_cast<Field>(f)));
                if (f == kFieldBeat) apply_monotonic_constraint(fp, info.beat_floor);
                e.codes[static_cast<std::size_t>(f)] = draw(fp, rng, gs.greedy);
            }
            if (e.beat() > gs.max_beat) break;  // overflow event is dropped
            info.beat_floor = std::max(info.beat_floor, e.beat());
        }
        out.push_back(e);
        if (static_cast<int>(out.size()) >= gs.max_len) break;
        logits = session.feed(e);
    }
    return out;
}

template EventSequence generate<float>(const Model<float>&, const GenSpec&, GenStats*);
template EventSequence generate<double>(const Model<double>&, const GenSpec&, GenStats*);

}  // namespace mmt
