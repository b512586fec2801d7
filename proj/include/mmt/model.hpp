#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmt/events.hpp"
#include "mmt/util.hpp"

namespace mmt {

struct AttentionTrace;

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
    int layers = 2;
    int model_dim = 64;
    int heads = 4;
    int feedforward_dim = 0;  // 0 means 4 * model_dim
    int max_len = 1024;
    FieldVocab vocab{};
    double dropout = 0.1;

    int ff_dim() const { return feedforward_dim > 0 ? feedforward_dim : 4 * model_dim; }
    void validate() const;  // throws ConfigError
};

template <typename T>
struct LayerParams {
    MatX<T> ln1_gamma, ln1_beta;
    MatX<T> wq, bq, wk, bk, wv, bv, wo, bo;
    MatX<T> ln2_gamma, ln2_beta;
    MatX<T> w1, b1, w2, b2;
};

template <typename T>
struct ModelParams {
    std::array<MatX<T>, kNumFields> field_embed;
    MatX<T> pos_embed;
    std::vector<LayerParams<T>> layers;
    MatX<T> final_ln_gamma, final_ln_beta;
    std::array<MatX<T>, kNumFields> head_w, head_b;

    static ModelParams zeros(const ModelConfig& config);
    // Stable name -> array listing; defines checkpoint manifest order.
    std::vector<std::pair<std::string, MatX<T>*>> arrays();
    std::vector<std::pair<std::string, const MatX<T>*>> arrays() const;
    std::size_t count() const;
};

// Batch of sequences padded to a common length with all-zero events; the
// validity mask marks real events and must be a prefix run per item.
struct Batch {
    std::vector<EventSequence> seqs;
    std::vector<std::vector<std::uint8_t>> valid;

    static Batch from_sequences(const std::vector<EventSequence>& sequences);
    int size() const { return static_cast<int>(seqs.size()); }
    int length() const { return seqs.empty() ? 0 : static_cast<int>(seqs[0].size()); }
    int valid_length(int item) const;
    void validate() const;  // throws DomainError
};

struct ForwardOptions {
    bool training = false;      // enables dropout
    Rng* rng = nullptr;         // required when training and dropout > 0
    bool record_attention = false;
};

template <typename T>
using FieldLogits = std::array<MatX<T>, kNumFields>;

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst_array;
    long checked = 0;
    std::vector<std::pair<std::string, double>> per_array;
};

template <typename T>
class Model {
public:
    explicit Model(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    ModelParams<T>& params() { return params_; }
    const ModelParams<T>& params() const { return params_; }

    void init_params(Rng& rng);

    // hidden_i = sum of the six field embeddings for event i plus positional row i.
    MatX<T> embed(const EventSequence& seq) const;

    // Per item, per field: (padded length x vocab size) logits; logits at row i
    // predict event i+1.  Rows past the valid prefix are zero.
    std::vector<FieldLogits<T>> forward(const Batch& batch, const ForwardOptions& opts = {},
                                        AttentionTrace* trace = nullptr) const;

    T loss(const Batch& batch) const;
    T loss_and_grads(const Batch& batch, ModelParams<T>& grads,
                     const ForwardOptions& opts = {}) const;

private:
    struct ItemCache;
    void forward_item(const EventSequence& seq, int n, const ForwardOptions& opts,
                      FieldLogits<T>& logits, ItemCache* cache, AttentionTrace* trace) const;
    void backward_item(const EventSequence& seq, int n, const FieldLogits<T>& dlogits,
                       const ItemCache& cache, ModelParams<T>& grads) const;

    ModelConfig config_;
    ModelParams<T> params_;
};

// Shift-by-one cross entropy: sum over the six fields of the mean cross
// entropy over valid target positions; non-note targets contribute to the
// type field only.  Throws DomainError when no valid target exists.
template <typename T>
T sequence_loss(const std::vector<FieldLogits<T>>& logits, const Batch& batch);

// Incremental decoding with per-layer key/value caches: one transformer pass
// per appended event.
template <typename T>
class InferenceSession {
public:
    explicit InferenceSession(const Model<T>& model);

    int length() const { return length_; }
    // Appends one event and returns the six logit rows predicting the next one.
    std::array<std::vector<T>, kNumFields> feed(const Event& event);
    std::array<std::vector<T>, kNumFields> feed_prompt(const EventSequence& prompt);

private:
    const Model<T>* model_;
    std::vector<MatX<T>> key_cache_, value_cache_;
    int length_ = 0;
};

// Central finite differences (step 1e-5) against the analytic gradients, in
// double precision.  name_filter restricts to arrays whose name contains the
// substring; an empty selection passes vacuously.
GradCheckReport grad_check(const ModelConfig& config, double tolerance, std::uint64_t seed,
                           const std::string& name_filter = "");
GradCheckReport check_gradients(Model<double>& model, const Batch& batch,
                                ModelParams<double>& analytic, double tolerance,
                                const std::string& name_filter = "");

struct TrainState {
    long step = 0;
    double best_val_loss = 0.0;
    bool has_best = false;
};

void save_checkpoint(const std::string& path, const Model<float>& model, const TrainState& state);
Model<float> load_checkpoint(const std::string& path, TrainState* state = nullptr);

extern template class Model<float>;
extern template class Model<double>;
extern template class InferenceSession<float>;
extern template class InferenceSession<double>;
extern template struct ModelParams<float>;
extern template struct ModelParams<double>;
extern template float sequence_loss<float>(const std::vector<FieldLogits<float>>&, const Batch&);
extern template double sequence_loss<double>(const std::vector<FieldLogits<double>>&,
                                             const Batch&);

}  // namespace mmt
