#include "mmt/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mmt/errors.hpp"
#include "mmt/event_csv.hpp"

namespace mmt {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

double eval_loss(const Model<float>& model, const std::vector<Example>& examples,
                 int batch_size) {
    KahanSum sum;
    long batches = 0;
    for (std::size_t at = 0; at < examples.size(); at += static_cast<std::size_t>(batch_size)) {
        Batch batch;
        for (std::size_t i = at;
             i < std::min(examples.size(), at + static_cast<std::size_t>(batch_size)); ++i) {
            batch.seqs.push_back(examples[i].events);
            batch.valid.push_back(examples[i].valid);
        }
        sum.add(static_cast<double>(model.loss(batch)));
        ++batches;
    }
    return batches == 0 ? 0.0 : sum.value() / static_cast<double>(batches);
}

}  // namespace

void TrainConfig::validate() const {
    if (train_frac < 0 || valid_frac < 0 || test_frac < 0 ||
        std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("split fractions must be nonnegative and sum to 1");
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    if (max_beat < 1 || max_beat >= FieldVocab::size(kFieldBeat))
        throw ConfigError("max_beat out of range");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (validate_every < 1) throw ConfigError("validate_every must be >= 1");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (max_len > model.max_len) throw ConfigError("max_len exceeds the model context length");
    model.validate();
}

Dataset Dataset::load(const std::string& dir, const std::string& manifest_name) {
    const std::string manifest = read_file(dir + "/" + manifest_name);
    Dataset ds;
    for (std::string line : split(manifest, '\n')) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string path = dir + "/" + line;
        EventSequence seq = load_event_csv(path);
        require_grammar(seq, GrammarLevel::kFull);
        ds.paths.push_back(line);
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

DataSplit split_dataset(int count, double train_frac, double valid_frac, double test_frac,
                        std::uint64_t seed) {
    if (count < 0) throw DomainError("negative dataset size");
    if (train_frac < 0 || valid_frac < 0 || test_frac < 0 ||
        std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("split fractions must be nonnegative and sum to 1");
    std::vector<int> order(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::floor(count * train_frac));
    const auto n_valid = static_cast<std::size_t>(std::floor(count * valid_frac));
    DataSplit s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), order.end());
    return s;
}

EventSequence augment(const EventSequence& seq, Rng& rng) {
    require_grammar(seq, GrammarLevel::kFull);
    const int shift = -5 + static_cast<int>(rng.bounded(12));  // U{-5..6}

    EventSequence header;
    EventSequence notes;
    bool has_eos = false;
    for (const Event& e : seq) {
        if (e.is_note()) {
            Event n = e;
            n.codes[kFieldPitch] += shift;
            // pitch code 1..128 <-> MIDI pitch 0..127
            if (n.pitch() < 1 || n.pitch() > 128) continue;
            notes.push_back(n);
        } else if (e.type() == static_cast<int>(EventType::kEndOfSong)) {
            has_eos = true;
        } else {
            header.push_back(e);
        }
    }

    if (!notes.empty()) {
        std::set<int> beats;
        for (const Event& n : notes) beats.insert(n.beat());
        const auto pick = rng.bounded(beats.size());
        auto it = beats.begin();
        std::advance(it, static_cast<std::ptrdiff_t>(pick));
        const int origin = *it;
        EventSequence rebased;
        for (const Event& n : notes) {
            if (n.beat() < origin) continue;
            Event r = n;
            r.codes[kFieldBeat] = n.beat() - origin + 1;
            rebased.push_back(r);
        }
        notes = std::move(rebased);
    }

    EventSequence out = std::move(header);
    out.insert(out.end(), notes.begin(), notes.end());
    if (has_eos) out.push_back(Event::structural(EventType::kEndOfSong));
    return out;
}

EventSequence augment(const EventSequence& seq, std::uint64_t seed) {
    Rng rng(seed);
    return augment(seq, rng);
}

std::optional<Example> make_example(const EventSequence& seq, int max_len, int max_beat) {
    if (max_len < 2) throw DomainError("make_example: max_len must be >= 2");
    if (max_beat < 1) throw DomainError("make_example: max_beat must be >= 1");
    if (seq.size() < 2) return std::nullopt;
    EventSequence trimmed;
    for (const Event& e : seq) {
        if (e.is_note() && e.beat() > max_beat) continue;
        trimmed.push_back(e);
    }
    if (trimmed.size() > static_cast<std::size_t>(max_len))
        trimmed.resize(static_cast<std::size_t>(max_len));
    if (!trimmed.empty() && trimmed.back().type() != static_cast<int>(EventType::kEndOfSong) &&
        trimmed.size() < static_cast<std::size_t>(max_len))
        trimmed.push_back(Event::structural(EventType::kEndOfSong));
    if (trimmed.size() < 2) return std::nullopt;

    Example ex;
    ex.target_count = static_cast<int>(trimmed.size()) - 1;
    ex.valid.assign(static_cast<std::size_t>(max_len), 0);
    for (std::size_t i = 0; i < trimmed.size(); ++i) ex.valid[i] = 1;
    trimmed.resize(static_cast<std::size_t>(max_len), Event{});
    ex.events = std::move(trimmed);
    return ex;
}

TrainResult train(const TrainConfig& config) {
    config.validate();
    Dataset ds = Dataset::load(config.data_dir);
    const int n = static_cast<int>(ds.sequences.size());
    DataSplit splitv =
        split_dataset(n, config.train_frac, config.valid_frac, config.test_frac, config.seed);
    if (splitv.train.empty()) throw ConfigError("empty train split");

    Rng rng(config.seed);
    Model<float> model(config.model);
    model.init_params(rng);

    // Validation pool; falls back to the (unaugmented) train split when the
    // validation split is empty.
    const std::vector<int>& valid_ids = splitv.valid.empty() ? splitv.train : splitv.valid;
    std::vector<Example> valid_examples;
    for (int id : valid_ids) {
        auto ex = make_example(ds.sequences[static_cast<std::size_t>(id)], config.max_len,
                               config.max_beat);
        if (ex && ex->target_count > 0) valid_examples.push_back(std::move(*ex));
    }
    if (valid_examples.empty()) throw ConfigError("no usable validation sequences");

    ModelParams<float> m1 = ModelParams<float>::zeros(config.model);
    ModelParams<float> m2 = ModelParams<float>::zeros(config.model);
    ModelParams<float> grads;

    const std::string log_path = config.out_dir + "/train_log.csv";
    const std::string best_path = config.out_dir + "/checkpoint_best.mmt";
    const std::string last_path = config.out_dir + "/checkpoint_last.mmt";
    std::string log = "step,train_loss,valid_loss\n";

    std::vector<int> order;
    std::size_t cursor = 0;
    auto next_index = [&]() {
        if (cursor >= order.size()) {
            order = splitv.train;
            rng.shuffle(order);
            cursor = 0;
        }
        return order[cursor++];
    };

    TrainResult result;
    double best = std::numeric_limits<double>::infinity();
    bool has_best = false;
    int bad_validations = 0;
    long step = 0;

    for (step = 1; step <= config.max_steps; ++step) {
        Batch batch;
        int tries = 0;
        while (static_cast<int>(batch.seqs.size()) < config.batch_size &&
               tries < config.batch_size * 64) {
            ++tries;
            const EventSequence& base = ds.sequences[static_cast<std::size_t>(next_index())];
            const EventSequence seq = config.augment_enabled ? augment(base, rng) : base;
            auto ex = make_example(seq, config.max_len, config.max_beat);
            if (!ex || ex->target_count == 0) continue;
            batch.seqs.push_back(std::move(ex->events));
            batch.valid.push_back(std::move(ex->valid));
        }
        if (batch.seqs.empty()) throw TrainingError("could not assemble a training batch");

        ForwardOptions opts;
        opts.training = true;
        opts.rng = &rng;
        const double loss = static_cast<double>(model.loss_and_grads(batch, grads, opts));
        if (!std::isfinite(loss)) {
            const std::string diag = config.out_dir + "/checkpoint_diagnostic.mmt";
            save_checkpoint(diag, model, TrainState{step, best, has_best});
            write_file(log_path, log);
            throw TrainingError("non-finite training loss at step " + std::to_string(step) +
                                "; diagnostic checkpoint at " + diag);
        }
        result.final_train_loss = loss;

        const double lr =
            config.warmup_steps > 0
                ? config.learning_rate *
                      std::min(1.0, static_cast<double>(step) /
                                        static_cast<double>(config.warmup_steps))
                : config.learning_rate;
        const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
        auto ps = model.params().arrays();
        auto gs = grads.arrays();
        auto m1s = m1.arrays();
        auto m2s = m2.arrays();
        for (std::size_t a = 0; a < ps.size(); ++a) {
            float* p = ps[a].second->data();
            const float* g = gs[a].second->data();
            float* mm = m1s[a].second->data();
            float* vv = m2s[a].second->data();
            const auto count = static_cast<std::size_t>(ps[a].second->size());
            for (std::size_t i = 0; i < count; ++i) {
                const double gi = static_cast<double>(g[i]);
                const double m = kAdamBeta1 * static_cast<double>(mm[i]) + (1.0 - kAdamBeta1) * gi;
                const double v =
                    kAdamBeta2 * static_cast<double>(vv[i]) + (1.0 - kAdamBeta2) * gi * gi;
                mm[i] = static_cast<float>(m);
                vv[i] = static_cast<float>(v);
                const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + kAdamEps);
                p[i] = static_cast<float>(static_cast<double>(p[i]) - update);
            }
        }

        std::string row = std::to_string(step) + "," + format_double(loss, 9) + ",";
        bool stop = false;
        if (step % config.validate_every == 0) {
            const double vl = eval_loss(model, valid_examples, config.batch_size);
            row += format_double(vl, 9);
            if (vl < best) {
                best = vl;
                has_best = true;
                bad_validations = 0;
                save_checkpoint(best_path, model, TrainState{step, best, true});
            } else {
                ++bad_validations;
                if (bad_validations >= config.patience) {
                    stop = true;
                    result.stopped_early = true;
                }
            }
        }
        log += row + "\n";
        if (stop) break;
    }

    result.steps_run = std::min(step, config.max_steps);
    result.best_val_loss = has_best ? best : 0.0;
    save_checkpoint(last_path, model, TrainState{result.steps_run, best, has_best});
    if (!has_best) save_checkpoint(best_path, model, TrainState{result.steps_run, 0.0, false});
    write_file(log_path, log);
    result.best_checkpoint = best_path;
    result.last_checkpoint = last_path;
    result.log_path = log_path;
    return result;
}

}  // namespace mmt
