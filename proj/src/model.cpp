#include "mmt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "mmt/attention.hpp"
#include "mmt/container.hpp"
#include "mmt/errors.hpp"

namespace mmt {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;

template <typename T>
T gelu(T x) {
    const T u = T(kGeluC0) * (x + T(kGeluC1) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
    const T u = T(kGeluC0) * (x + T(kGeluC1) * x * x * x);
    const T t = std::tanh(u);
    const T du = T(kGeluC0) * (T(1) + T(3) * T(kGeluC1) * x * x);
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

// y = gamma * xhat + beta per row; xhat and 1/stddev are kept for backward.
template <typename T>
void layer_norm(const MatX<T>& x, const MatX<T>& gamma, const MatX<T>& beta, MatX<T>& xhat,
                std::vector<T>& rstd, MatX<T>& y) {
    const Eigen::Index n = x.rows(), d = x.cols();
    xhat.resize(n, d);
    y.resize(n, d);
    rstd.assign(static_cast<std::size_t>(n), T(0));
    for (Eigen::Index i = 0; i < n; ++i) {
        const T mu = x.row(i).mean();
        const T var = (x.row(i).array() - mu).square().sum() / T(d);
        const T r = T(1) / std::sqrt(var + T(kLnEps));
        rstd[static_cast<std::size_t>(i)] = r;
        xhat.row(i) = ((x.row(i).array() - mu) * r).matrix();
        y.row(i) = (xhat.row(i).array() * gamma.row(0).array() + beta.row(0).array()).matrix();
    }
}

// dx_i = rstd * (dxhat_i - mean(dxhat) - xhat_i * mean(dxhat * xhat)) per row.
template <typename T>
void layer_norm_backward(const MatX<T>& dy, const MatX<T>& xhat, const std::vector<T>& rstd,
                         const MatX<T>& gamma, MatX<T>& dx, MatX<T>& dgamma, MatX<T>& dbeta) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    dx.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto dxhat = (dy.row(i).array() * gamma.row(0).array()).eval();
        const T m1 = dxhat.mean();
        const T m2 = (dxhat * xhat.row(i).array()).mean();
        dx.row(i) =
            (rstd[static_cast<std::size_t>(i)] * (dxhat - m1 - xhat.row(i).array() * m2)).matrix();
    }
    dgamma.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
    dbeta.row(0) += dy.colwise().sum();
}

// Row-wise softmax over columns 0..row (later columns get exactly zero).
template <typename T>
void causal_softmax(MatX<T>& scores) {
    const Eigen::Index n = scores.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index m = i + 1;
        const T maxv = scores.row(i).head(m).maxCoeff();
        T sum = T(0);
        for (Eigen::Index j = 0; j < m; ++j) {
            const T e = std::exp(scores(i, j) - maxv);
            scores(i, j) = e;
            sum += e;
        }
        for (Eigen::Index j = 0; j < m; ++j) scores(i, j) /= sum;
        for (Eigen::Index j = m; j < scores.cols(); ++j) scores(i, j) = T(0);
    }
}

template <typename T>
MatX<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    MatX<T> m(rows, cols);
    const T keep_scale = T(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = rng.uniform01() < p ? T(0) : keep_scale;
    return m;
}

void check_codes(const Event& e, const FieldVocab& vocab, const char* context) {
    for (int f = 0; f < kNumFields; ++f) {
        if (e.codes[static_cast<std::size_t>(f)] < 0 ||
            e.codes[static_cast<std::size_t>(f)] >= vocab.size(static_cast<Field>(f)))
            throw DomainError(std::string(context) + ": code out of vocab range for field " +
                              field_name(static_cast<Field>(f)));
    }
}

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

// --- config / params -------------------------------------------------------

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (model_dim <= 0) throw ConfigError("model_dim must be positive");
    if (heads <= 0) throw ConfigError("heads must be positive");
    if (model_dim % heads != 0) throw ConfigError("model_dim must be divisible by heads");
    if (feedforward_dim < 0) throw ConfigError("feedforward_dim must be >= 0");
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config) {
    config.validate();
    const int d = config.model_dim;
    const int f = config.ff_dim();
    ModelParams<T> p;
    for (int i = 0; i < kNumFields; ++i)
        p.field_embed[static_cast<std::size_t>(i)] =
            MatX<T>::Zero(config.vocab.size(static_cast<Field>(i)), d);
    p.pos_embed = MatX<T>::Zero(config.max_len, d);
    p.layers.resize(static_cast<std::size_t>(config.layers));
    for (auto& l : p.layers) {
        l.ln1_gamma = MatX<T>::Zero(1, d);
        l.ln1_beta = MatX<T>::Zero(1, d);
        l.wq = MatX<T>::Zero(d, d);
        l.bq = MatX<T>::Zero(1, d);
        l.wk = MatX<T>::Zero(d, d);
        l.bk = MatX<T>::Zero(1, d);
        l.wv = MatX<T>::Zero(d, d);
        l.bv = MatX<T>::Zero(1, d);
        l.wo = MatX<T>::Zero(d, d);
        l.bo = MatX<T>::Zero(1, d);
        l.ln2_gamma = MatX<T>::Zero(1, d);
        l.ln2_beta = MatX<T>::Zero(1, d);
        l.w1 = MatX<T>::Zero(d, f);
        l.b1 = MatX<T>::Zero(1, f);
        l.w2 = MatX<T>::Zero(f, d);
        l.b2 = MatX<T>::Zero(1, d);
    }
    p.final_ln_gamma = MatX<T>::Zero(1, d);
    p.final_ln_beta = MatX<T>::Zero(1, d);
    for (int i = 0; i < kNumFields; ++i) {
        const int v = config.vocab.size(static_cast<Field>(i));
        p.head_w[static_cast<std::size_t>(i)] = MatX<T>::Zero(d, v);
        p.head_b[static_cast<std::size_t>(i)] = MatX<T>::Zero(1, v);
    }
    return p;
}

template <typename T>
std::vector<std::pair<std::string, MatX<T>*>> ModelParams<T>::arrays() {
    std::vector<std::pair<std::string, MatX<T>*>> out;
    for (int f = 0; f < kNumFields; ++f)
        out.emplace_back(std::string("embed/") + field_name(static_cast<Field>(f)),
                         &field_embed[static_cast<std::size_t>(f)]);
    out.emplace_back("embed/positional", &pos_embed);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + "/";
        LayerParams<T>& lp = layers[l];
        out.emplace_back(p + "ln1/gamma", &lp.ln1_gamma);
        out.emplace_back(p + "ln1/beta", &lp.ln1_beta);
        out.emplace_back(p + "attn/wq", &lp.wq);
        out.emplace_back(p + "attn/bq", &lp.bq);
        out.emplace_back(p + "attn/wk", &lp.wk);
        out.emplace_back(p + "attn/bk", &lp.bk);
        out.emplace_back(p + "attn/wv", &lp.wv);
        out.emplace_back(p + "attn/bv", &lp.bv);
        out.emplace_back(p + "attn/wo", &lp.wo);
        out.emplace_back(p + "attn/bo", &lp.bo);
        out.emplace_back(p + "ln2/gamma", &lp.ln2_gamma);
        out.emplace_back(p + "ln2/beta", &lp.ln2_beta);
        out.emplace_back(p + "ff/w1", &lp.w1);
        out.emplace_back(p + "ff/b1", &lp.b1);
        out.emplace_back(p + "ff/w2", &lp.w2);
        out.emplace_back(p + "ff/b2", &lp.b2);
    }
    out.emplace_back("final_ln/gamma", &final_ln_gamma);
    out.emplace_back("final_ln/beta", &final_ln_beta);
    for (int f = 0; f < kNumFields; ++f) {
        const std::string n = std::string("head/") + field_name(static_cast<Field>(f));
        out.emplace_back(n + "/w", &head_w[static_cast<std::size_t>(f)]);
        out.emplace_back(n + "/b", &head_b[static_cast<std::size_t>(f)]);
    }
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const MatX<T>*>> ModelParams<T>::arrays() const {
    auto mut = const_cast<ModelParams<T>*>(this)->arrays();
    std::vector<std::pair<std::string, const MatX<T>*>> out;
    out.reserve(mut.size());
    for (auto& kv : mut) out.emplace_back(kv.first, kv.second);
    return out;
}

template <typename T>
std::size_t ModelParams<T>::count() const {
    std::size_t n = 0;
    for (const auto& kv : arrays()) n += static_cast<std::size_t>(kv.second->size());
    return n;
}

// --- batch -----------------------------------------------------------------

Batch Batch::from_sequences(const std::vector<EventSequence>& sequences) {
    std::size_t max_len = 0;
    for (const auto& s : sequences) max_len = std::max(max_len, s.size());
    Batch b;
    for (const auto& s : sequences) {
        EventSequence padded = s;
        padded.resize(max_len, Event{});
        std::vector<std::uint8_t> mask(max_len, 0);
        for (std::size_t i = 0; i < s.size(); ++i) mask[i] = 1;
        b.seqs.push_back(std::move(padded));
        b.valid.push_back(std::move(mask));
    }
    return b;
}

int Batch::valid_length(int item) const {
    const auto& mask = valid[static_cast<std::size_t>(item)];
    int n = 0;
    while (n < static_cast<int>(mask.size()) && mask[static_cast<std::size_t>(n)]) ++n;
    return n;
}

void Batch::validate() const {
    if (seqs.size() != valid.size()) throw DomainError("batch mask/sequence count mismatch");
    const std::size_t len = seqs.empty() ? 0 : seqs[0].size();
    for (std::size_t b = 0; b < seqs.size(); ++b) {
        if (seqs[b].size() != len || valid[b].size() != len)
            throw DomainError("batch sequences must share one padded length");
        bool seen_pad = false;
        for (std::size_t i = 0; i < len; ++i) {
            if (valid[b][i]) {
                if (seen_pad) throw DomainError("batch validity mask must be a prefix run");
            } else {
                seen_pad = true;
            }
        }
    }
}

// --- model -----------------------------------------------------------------

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    params_ = ModelParams<T>::zeros(config_);
}

template <typename T>
void Model<T>::init_params(Rng& rng) {
    const T scale = T(0.02);
    auto fill_normal = [&](MatX<T>& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = T(rng.normal(0.0, 1.0)) * scale;
    };
    for (auto& e : params_.field_embed) fill_normal(e);
    fill_normal(params_.pos_embed);
    for (auto& l : params_.layers) {
        l.ln1_gamma.setOnes();
        l.ln1_beta.setZero();
        fill_normal(l.wq);
        l.bq.setZero();
        fill_normal(l.wk);
        l.bk.setZero();
        fill_normal(l.wv);
        l.bv.setZero();
        fill_normal(l.wo);
        l.bo.setZero();
        l.ln2_gamma.setOnes();
        l.ln2_beta.setZero();
        fill_normal(l.w1);
        l.b1.setZero();
        fill_normal(l.w2);
        l.b2.setZero();
    }
    params_.final_ln_gamma.setOnes();
    params_.final_ln_beta.setZero();
    for (int f = 0; f < kNumFields; ++f) {
        fill_normal(params_.head_w[static_cast<std::size_t>(f)]);
        params_.head_b[static_cast<std::size_t>(f)].setZero();
    }
}

template <typename T>
MatX<T> Model<T>::embed(const EventSequence& seq) const {
    const int n = static_cast<int>(seq.size());
    if (n > config_.max_len) throw DomainError("sequence longer than max_len");
    MatX<T> h(n, config_.model_dim);
    for (int i = 0; i < n; ++i) {
        check_codes(seq[static_cast<std::size_t>(i)], config_.vocab, "embed");
        h.row(i) = params_.pos_embed.row(i);
        for (int f = 0; f < kNumFields; ++f)
            h.row(i) += params_.field_embed[static_cast<std::size_t>(f)].row(
                seq[static_cast<std::size_t>(i)].codes[static_cast<std::size_t>(f)]);
    }
    return h;
}

template <typename T>
struct Model<T>::ItemCache {
    struct Layer {
        MatX<T> input;
        MatX<T> xhat1;
        std::vector<T> rstd1;
        MatX<T> a;
        MatX<T> q, k, v;
        std::vector<MatX<T>> probs;       // per head, pre-dropout
        std::vector<MatX<T>> prob_mask;   // per head dropout masks (training only)
        MatX<T> attn_concat;
        MatX<T> o_mask;                   // training only
        MatX<T> h_mid;
        MatX<T> xhat2;
        std::vector<T> rstd2;
        MatX<T> a2;
        MatX<T> z1, g;
        MatX<T> f_mask;                   // training only
    };
    std::vector<Layer> layers;
    MatX<T> final_input;
    MatX<T> xhat_final;
    std::vector<T> rstd_final;
    MatX<T> hidden_final;
    bool training = false;
};

template <typename T>
void Model<T>::forward_item(const EventSequence& seq, int n, const ForwardOptions& opts,
                            FieldLogits<T>& logits, ItemCache* cache, AttentionTrace* trace) const {
    const int d = config_.model_dim;
    const int nh = config_.heads;
    const int dh = d / nh;
    const T inv_sqrt_dh = T(1) / std::sqrt(T(dh));
    const bool drop = opts.training && config_.dropout > 0.0;

    EventSequence prefix(seq.begin(), seq.begin() + n);
    MatX<T> h = embed(prefix);
    if (cache != nullptr) {
        cache->layers.resize(params_.layers.size());
        cache->training = opts.training && drop;
    }

    for (std::size_t li = 0; li < params_.layers.size(); ++li) {
        const LayerParams<T>& lp = params_.layers[li];
        typename ItemCache::Layer tmp;
        typename ItemCache::Layer& c = cache != nullptr ? cache->layers[li] : tmp;
        c.input = h;

        layer_norm(h, lp.ln1_gamma, lp.ln1_beta, c.xhat1, c.rstd1, c.a);
        c.q = c.a * lp.wq;
        c.q.rowwise() += lp.bq.row(0);
        c.k = c.a * lp.wk;
        c.k.rowwise() += lp.bk.row(0);
        c.v = c.a * lp.wv;
        c.v.rowwise() += lp.bv.row(0);

        c.attn_concat.resize(n, d);
        c.probs.resize(static_cast<std::size_t>(nh));
        if (drop) c.prob_mask.resize(static_cast<std::size_t>(nh));
        const bool record = trace != nullptr && opts.record_attention &&
                            li + 1 == params_.layers.size();
        AttentionSample* sample = nullptr;
        if (record) {
            trace->samples.push_back(AttentionSample{});
            sample = &trace->samples.back();
            sample->events = prefix;
        }
        for (int hd = 0; hd < nh; ++hd) {
            const auto qh = c.q.middleCols(hd * dh, dh);
            const auto kh = c.k.middleCols(hd * dh, dh);
            const auto vh = c.v.middleCols(hd * dh, dh);
            MatX<T> scores = (qh * kh.transpose()) * inv_sqrt_dh;
            causal_softmax(scores);
            c.probs[static_cast<std::size_t>(hd)] = scores;
            if (sample != nullptr) {
                MatX<double> w = scores.template cast<double>();
                for (Eigen::Index r = 0; r < w.rows(); ++r) {
                    const double rs = w.row(r).head(r + 1).sum();
                    if (rs > 0.0) w.row(r).head(r + 1) /= rs;
                }
                sample->heads.push_back(std::move(w));
            }
            const MatX<T>* probs_used = &c.probs[static_cast<std::size_t>(hd)];
            MatX<T> dropped;
            if (drop) {
                c.prob_mask[static_cast<std::size_t>(hd)] =
                    dropout_mask<T>(n, n, config_.dropout, *opts.rng);
                dropped = scores.cwiseProduct(c.prob_mask[static_cast<std::size_t>(hd)]);
                probs_used = &dropped;
            }
            c.attn_concat.middleCols(hd * dh, dh) = (*probs_used) * vh;
        }

        MatX<T> o = c.attn_concat * lp.wo;
        o.rowwise() += lp.bo.row(0);
        if (drop) {
            c.o_mask = dropout_mask<T>(n, d, config_.dropout, *opts.rng);
            o = o.cwiseProduct(c.o_mask);
        }
        c.h_mid = c.input + o;

        layer_norm(c.h_mid, lp.ln2_gamma, lp.ln2_beta, c.xhat2, c.rstd2, c.a2);
        c.z1 = c.a2 * lp.w1;
        c.z1.rowwise() += lp.b1.row(0);
        c.g = c.z1.unaryExpr([](T x) { return gelu(x); });
        MatX<T> f = c.g * lp.w2;
        f.rowwise() += lp.b2.row(0);
        if (drop) {
            c.f_mask = dropout_mask<T>(n, d, config_.dropout, *opts.rng);
            f = f.cwiseProduct(c.f_mask);
        }
        h = c.h_mid + f;
    }

    MatX<T> xhat_final;
    std::vector<T> rstd_final;
    MatX<T>& xf = cache != nullptr ? cache->xhat_final : xhat_final;
    std::vector<T>& rf = cache != nullptr ? cache->rstd_final : rstd_final;
    MatX<T> hidden;
    layer_norm(h, params_.final_ln_gamma, params_.final_ln_beta, xf, rf, hidden);
    if (cache != nullptr) {
        cache->final_input = h;
        cache->hidden_final = hidden;
    }

    for (int f = 0; f < kNumFields; ++f) {
        MatX<T> lg = hidden * params_.head_w[static_cast<std::size_t>(f)];
        lg.rowwise() += params_.head_b[static_cast<std::size_t>(f)].row(0);
        logits[static_cast<std::size_t>(f)].topRows(n) = lg;
    }
}

template <typename T>
std::vector<FieldLogits<T>> Model<T>::forward(const Batch& batch, const ForwardOptions& opts,
                                              AttentionTrace* trace) const {
    batch.validate();
    const int len = batch.length();
    if (len > config_.max_len) throw DomainError("batch longer than max_len");
    const bool drop = opts.training && config_.dropout > 0.0;
    if (drop && opts.rng == nullptr)
        throw DomainError("training forward with dropout requires an rng");
    if (trace != nullptr && opts.record_attention) trace->num_heads = config_.heads;

    std::vector<FieldLogits<T>> out(static_cast<std::size_t>(batch.size()));
    for (int b = 0; b < batch.size(); ++b) {
        for (int f = 0; f < kNumFields; ++f)
            out[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)] =
                MatX<T>::Zero(len, config_.vocab.size(static_cast<Field>(f)));
        const int n = batch.valid_length(b);
        if (n == 0) continue;
        forward_item(batch.seqs[static_cast<std::size_t>(b)], n, opts,
                     out[static_cast<std::size_t>(b)], nullptr, trace);
    }
    return out;
}

// --- loss ------------------------------------------------------------------

namespace {

template <typename T>
double loss_and_dlogits(const std::vector<FieldLogits<T>>& logits, const Batch& batch,
                        const FieldVocab& vocab, std::vector<FieldLogits<T>>* dlogits) {
    batch.validate();
    if (logits.size() != batch.seqs.size()) throw DomainError("loss: logits/batch size mismatch");
    const int len = batch.length();
    for (std::size_t b = 0; b < logits.size(); ++b)
        for (int f = 0; f < kNumFields; ++f) {
            const auto& m = logits[b][static_cast<std::size_t>(f)];
            if (m.rows() != len || m.cols() != vocab.size(static_cast<Field>(f)))
                throw DomainError("loss: logits shape mismatch");
        }

    std::array<long, kNumFields> counts{};
    for (int b = 0; b < batch.size(); ++b) {
        const int n = batch.valid_length(b);
        for (int i = 0; i + 1 < n; ++i) {
            const Event& target = batch.seqs[static_cast<std::size_t>(b)][static_cast<std::size_t>(i + 1)];
            check_codes(target, vocab, "loss");
            ++counts[kFieldType];
            if (target.is_note())
                for (int f = 1; f < kNumFields; ++f) ++counts[static_cast<std::size_t>(f)];
        }
    }
    if (counts[kFieldType] == 0) throw DomainError("loss: empty mask (no target positions)");

    if (dlogits != nullptr) {
        dlogits->resize(logits.size());
        for (std::size_t b = 0; b < logits.size(); ++b)
            for (int f = 0; f < kNumFields; ++f)
                (*dlogits)[b][static_cast<std::size_t>(f)] =
                    MatX<T>::Zero(len, vocab.size(static_cast<Field>(f)));
    }

    std::array<KahanSum, kNumFields> sums;
    for (int b = 0; b < batch.size(); ++b) {
        const int n = batch.valid_length(b);
        for (int i = 0; i + 1 < n; ++i) {
            const Event& target = batch.seqs[static_cast<std::size_t>(b)][static_cast<std::size_t>(i + 1)];
            for (int f = 0; f < kNumFields; ++f) {
                if (f != kFieldType && !target.is_note()) continue;
                const auto row = logits[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)]
                                     .row(i)
                                     .template cast<double>()
                                     .eval();
                const int tgt = target.codes[static_cast<std::size_t>(f)];
                const double maxv = row.maxCoeff();
                double expsum = 0.0;
                for (Eigen::Index j = 0; j < row.cols(); ++j) expsum += std::exp(row(0, j) - maxv);
                const double lse = maxv + std::log(expsum);
                sums[static_cast<std::size_t>(f)].add(lse - row(0, tgt));
                if (dlogits != nullptr) {
                    const double inv = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(f)]);
                    auto drow = (*dlogits)[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)].row(i);
                    for (Eigen::Index j = 0; j < row.cols(); ++j)
                        drow(0, j) = T(std::exp(row(0, j) - lse) * inv);
                    drow(0, tgt) -= T(inv);
                }
            }
        }
    }

    double total = 0.0;
    for (int f = 0; f < kNumFields; ++f)
        if (counts[static_cast<std::size_t>(f)] > 0)
            total += sums[static_cast<std::size_t>(f)].value() /
                     static_cast<double>(counts[static_cast<std::size_t>(f)]);
    return total;
}

}  // namespace

template <typename T>
T sequence_loss(const std::vector<FieldLogits<T>>& logits, const Batch& batch) {
    return static_cast<T>(loss_and_dlogits<T>(logits, batch, FieldVocab{}, nullptr));
}

template <typename T>
T Model<T>::loss(const Batch& batch) const {
    const auto logits = forward(batch);
    return sequence_loss(logits, batch);
}

// --- backward --------------------------------------------------------------

template <typename T>
void Model<T>::backward_item(const EventSequence& seq, int n, const FieldLogits<T>& dlogits,
                             const ItemCache& cache, ModelParams<T>& grads) const {
    const int d = config_.model_dim;
    const int nh = config_.heads;
    const int dh = d / nh;
    const T inv_sqrt_dh = T(1) / std::sqrt(T(dh));

    // Output heads.
    MatX<T> dhidden = MatX<T>::Zero(n, d);
    for (int f = 0; f < kNumFields; ++f) {
        const auto dl = dlogits[static_cast<std::size_t>(f)].topRows(n);
        grads.head_w[static_cast<std::size_t>(f)] += cache.hidden_final.transpose() * dl;
        grads.head_b[static_cast<std::size_t>(f)].row(0) += dl.colwise().sum();
        dhidden += dl * params_.head_w[static_cast<std::size_t>(f)].transpose();
    }

    // Final LayerNorm.
    MatX<T> dstream;
    layer_norm_backward(dhidden, cache.xhat_final, cache.rstd_final, params_.final_ln_gamma, dstream,
                        grads.final_ln_gamma, grads.final_ln_beta);

    for (std::size_t li = params_.layers.size(); li-- > 0;) {
        const LayerParams<T>& lp = params_.layers[li];
        LayerParams<T>& lg = grads.layers[li];
        const typename ItemCache::Layer& c = cache.layers[li];
        const bool drop = cache.training;

        // Feedforward branch: h = h_mid + dropout(g * w2 + b2).
        MatX<T> df = drop ? dstream.cwiseProduct(c.f_mask).eval() : dstream;
        lg.w2 += c.g.transpose() * df;
        lg.b2.row(0) += df.colwise().sum();
        MatX<T> dg = df * lp.w2.transpose();
        MatX<T> dz1 =
            dg.binaryExpr(c.z1, [](T gv, T zv) { return gv * gelu_grad(zv); });
        lg.w1 += c.a2.transpose() * dz1;
        lg.b1.row(0) += dz1.colwise().sum();
        MatX<T> da2 = dz1 * lp.w1.transpose();

        MatX<T> dh_mid;
        layer_norm_backward(da2, c.xhat2, c.rstd2, lp.ln2_gamma, dh_mid, lg.ln2_gamma,
                            lg.ln2_beta);
        dh_mid += dstream;  // residual passthrough

        // Attention branch: h_mid = input + dropout(attn_concat * wo + bo).
        MatX<T> do_ = drop ? dh_mid.cwiseProduct(c.o_mask).eval() : dh_mid;
        lg.wo += c.attn_concat.transpose() * do_;
        lg.bo.row(0) += do_.colwise().sum();
        MatX<T> dconcat = do_ * lp.wo.transpose();

        MatX<T> dq = MatX<T>::Zero(n, d);
        MatX<T> dk = MatX<T>::Zero(n, d);
        MatX<T> dv = MatX<T>::Zero(n, d);
        for (int hd = 0; hd < nh; ++hd) {
            const auto dconcat_h = dconcat.middleCols(hd * dh, dh);
            const auto vh = c.v.middleCols(hd * dh, dh);
            const MatX<T>& probs = c.probs[static_cast<std::size_t>(hd)];
            MatX<T> probs_used = probs;
            if (drop) probs_used = probs.cwiseProduct(c.prob_mask[static_cast<std::size_t>(hd)]);

            MatX<T> dprobs_used = dconcat_h * vh.transpose();
            dv.middleCols(hd * dh, dh) += probs_used.transpose() * dconcat_h;
            MatX<T> dprobs =
                drop ? dprobs_used.cwiseProduct(c.prob_mask[static_cast<std::size_t>(hd)]).eval()
                     : dprobs_used;

            // Softmax backward per row; masked columns have probability 0.
            MatX<T> dscores(n, n);
            for (int i = 0; i < n; ++i) {
                const T dot = (dprobs.row(i).array() * probs.row(i).array()).sum();
                dscores.row(i) =
                    (probs.row(i).array() * (dprobs.row(i).array() - dot)).matrix() * inv_sqrt_dh;
            }
            const auto qh = c.q.middleCols(hd * dh, dh);
            const auto kh = c.k.middleCols(hd * dh, dh);
            dq.middleCols(hd * dh, dh) += dscores * kh;
            dk.middleCols(hd * dh, dh) += dscores.transpose() * qh;
        }

        lg.wq += c.a.transpose() * dq;
        lg.bq.row(0) += dq.colwise().sum();
        lg.wk += c.a.transpose() * dk;
        lg.bk.row(0) += dk.colwise().sum();
        lg.wv += c.a.transpose() * dv;
        lg.bv.row(0) += dv.colwise().sum();
        MatX<T> da = dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();

        MatX<T> dinput;
        layer_norm_backward(da, c.xhat1, c.rstd1, lp.ln1_gamma, dinput, lg.ln1_gamma, lg.ln1_beta);
        dinput += dh_mid;  // residual passthrough
        dstream = dinput;
    }

    // Embeddings.
    for (int i = 0; i < n; ++i) {
        grads.pos_embed.row(i) += dstream.row(i);
        for (int f = 0; f < kNumFields; ++f)
            grads.field_embed[static_cast<std::size_t>(f)].row(
                seq[static_cast<std::size_t>(i)].codes[static_cast<std::size_t>(f)]) += dstream.row(i);
    }
}

template <typename T>
T Model<T>::loss_and_grads(const Batch& batch, ModelParams<T>& grads,
                           const ForwardOptions& opts) const {
    batch.validate();
    const int len = batch.length();
    if (len > config_.max_len) throw DomainError("batch longer than max_len");
    const bool drop = opts.training && config_.dropout > 0.0;
    if (drop && opts.rng == nullptr)
        throw DomainError("training forward with dropout requires an rng");

    std::vector<FieldLogits<T>> logits(static_cast<std::size_t>(batch.size()));
    std::vector<ItemCache> caches(static_cast<std::size_t>(batch.size()));
    for (int b = 0; b < batch.size(); ++b) {
        for (int f = 0; f < kNumFields; ++f)
            logits[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)] =
                MatX<T>::Zero(len, config_.vocab.size(static_cast<Field>(f)));
        const int n = batch.valid_length(b);
        if (n == 0) continue;
        forward_item(batch.seqs[static_cast<std::size_t>(b)], n, opts,
                     logits[static_cast<std::size_t>(b)], &caches[static_cast<std::size_t>(b)],
                     nullptr);
    }

    std::vector<FieldLogits<T>> dlogits;
    const double total = loss_and_dlogits<T>(logits, batch, config_.vocab, &dlogits);

    grads = ModelParams<T>::zeros(config_);
    for (int b = 0; b < batch.size(); ++b) {
        const int n = batch.valid_length(b);
        if (n == 0) continue;
        backward_item(batch.seqs[static_cast<std::size_t>(b)], n,
                      dlogits[static_cast<std::size_t>(b)], caches[static_cast<std::size_t>(b)],
                      grads);
    }
    return static_cast<T>(total);
}

// --- inference session -----------------------------------------------------

template <typename T>
InferenceSession<T>::InferenceSession(const Model<T>& model) : model_(&model) {
    const ModelConfig& cfg = model.config();
    key_cache_.assign(static_cast<std::size_t>(cfg.layers),
                      MatX<T>::Zero(cfg.max_len, cfg.model_dim));
    value_cache_.assign(static_cast<std::size_t>(cfg.layers),
                        MatX<T>::Zero(cfg.max_len, cfg.model_dim));
}

template <typename T>
std::array<std::vector<T>, kNumFields> InferenceSession<T>::feed(const Event& event) {
    const ModelConfig& cfg = model_->config();
    const ModelParams<T>& p = model_->params();
    if (length_ >= cfg.max_len) throw DomainError("inference session exceeds max_len");
    check_codes(event, cfg.vocab, "feed");

    const int d = cfg.model_dim;
    const int nh = cfg.heads;
    const int dh = d / nh;
    const T inv_sqrt_dh = T(1) / std::sqrt(T(dh));
    const int pos = length_;

    MatX<T> h = p.pos_embed.row(pos);
    for (int f = 0; f < kNumFields; ++f)
        h += p.field_embed[static_cast<std::size_t>(f)].row(
            event.codes[static_cast<std::size_t>(f)]);

    MatX<T> xhat, a, o(1, d);
    std::vector<T> rstd;
    for (std::size_t li = 0; li < p.layers.size(); ++li) {
        const LayerParams<T>& lp = p.layers[li];
        layer_norm(h, lp.ln1_gamma, lp.ln1_beta, xhat, rstd, a);
        MatX<T> q = a * lp.wq;
        q.rowwise() += lp.bq.row(0);
        MatX<T> k = a * lp.wk;
        k.rowwise() += lp.bk.row(0);
        MatX<T> v = a * lp.wv;
        v.rowwise() += lp.bv.row(0);
        key_cache_[li].row(pos) = k.row(0);
        value_cache_[li].row(pos) = v.row(0);

        for (int hd = 0; hd < nh; ++hd) {
            const auto kh = key_cache_[li].topRows(pos + 1).middleCols(hd * dh, dh);
            const auto vh = value_cache_[li].topRows(pos + 1).middleCols(hd * dh, dh);
            MatX<T> scores = (q.middleCols(hd * dh, dh) * kh.transpose()) * inv_sqrt_dh;
            const T maxv = scores.row(0).maxCoeff();
            T sum = T(0);
            for (Eigen::Index j = 0; j <= pos; ++j) {
                const T e = std::exp(scores(0, j) - maxv);
                scores(0, j) = e;
                sum += e;
            }
            scores /= sum;
            o.middleCols(hd * dh, dh) = scores * vh;
        }
        MatX<T> proj = o * lp.wo;
        proj.rowwise() += lp.bo.row(0);
        h += proj;

        MatX<T> a2;
        layer_norm(h, lp.ln2_gamma, lp.ln2_beta, xhat, rstd, a2);
        MatX<T> z1 = a2 * lp.w1;
        z1.rowwise() += lp.b1.row(0);
        const MatX<T> g = z1.unaryExpr([](T x) { return gelu(x); });
        MatX<T> f = g * lp.w2;
        f.rowwise() += lp.b2.row(0);
        h += f;
    }

    MatX<T> hidden;
    layer_norm(h, p.final_ln_gamma, p.final_ln_beta, xhat, rstd, hidden);
    std::array<std::vector<T>, kNumFields> out;
    for (int f = 0; f < kNumFields; ++f) {
        MatX<T> lg = hidden * p.head_w[static_cast<std::size_t>(f)];
        lg.rowwise() += p.head_b[static_cast<std::size_t>(f)].row(0);
        out[static_cast<std::size_t>(f)].assign(lg.data(), lg.data() + lg.cols());
    }
    ++length_;
    return out;
}

template <typename T>
std::array<std::vector<T>, kNumFields> InferenceSession<T>::feed_prompt(
    const EventSequence& prompt) {
    if (prompt.empty()) throw DomainError("feed_prompt: empty prompt");
    std::array<std::vector<T>, kNumFields> out;
    for (const Event& e : prompt) out = feed(e);
    return out;
}

// --- gradient checking -----------------------------------------------------

GradCheckReport check_gradients(Model<double>& model, const Batch& batch,
                                ModelParams<double>& analytic, double tolerance,
                                const std::string& name_filter) {
    constexpr double kStep = 1e-5;
    GradCheckReport report;
    auto params = model.params().arrays();
    auto grads = analytic.arrays();
    for (std::size_t ai = 0; ai < params.size(); ++ai) {
        const std::string& name = params[ai].first;
        if (!name_filter.empty() && name.find(name_filter) == std::string::npos) continue;
        MatX<double>& arr = *params[ai].second;
        const MatX<double>& grad = *grads[ai].second;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < arr.rows(); ++i) {
            for (Eigen::Index j = 0; j < arr.cols(); ++j) {
                const double orig = arr(i, j);
                arr(i, j) = orig + kStep;
                const double plus = model.loss(batch);
                arr(i, j) = orig - kStep;
                const double minus = model.loss(batch);
                arr(i, j) = orig;
                const double numeric = (plus - minus) / (2.0 * kStep);
                const double a = grad(i, j);
                const double rel =
                    std::abs(a - numeric) /
                    std::max({std::abs(a), std::abs(numeric), 1e-4});
                worst = std::max(worst, rel);
                ++report.checked;
                if (rel > report.max_rel_err) {
                    report.max_rel_err = rel;
                    report.worst_array = name;
                }
            }
        }
        report.per_array.emplace_back(name, worst);
    }
    report.pass = report.checked == 0 || report.max_rel_err < tolerance;
    return report;
}

GradCheckReport grad_check(const ModelConfig& config, double tolerance, std::uint64_t seed,
                           const std::string& name_filter) {
    config.validate();
    if (config.layers > 2 || config.model_dim > 16)
        throw DomainError("grad_check requires a tiny config (layers <= 2, model_dim <= 16)");
    ModelConfig cfg = config;
    cfg.dropout = 0.0;  // finite differences need a deterministic loss
    Model<double> model(cfg);
    Rng rng(seed);
    model.init_params(rng);

    const int len1 = std::min(7, cfg.max_len);
    const int len2 = std::min(5, cfg.max_len);
    std::vector<EventSequence> seqs;
    for (const int len : {len1, len2}) {
        EventSequence s;
        for (int i = 0; i < len; ++i) {
            Event e{};
            for (int f = 0; f < kNumFields; ++f)
                e.codes[static_cast<std::size_t>(f)] = static_cast<int>(
                    rng.bounded(static_cast<std::uint64_t>(cfg.vocab.size(static_cast<Field>(f)))));
            s.push_back(e);
        }
        // Guarantee both a note target and a non-note target.
        if (len >= 2) s[1].codes[kFieldType] = static_cast<int>(EventType::kNote);
        if (len >= 3) s[2].codes[kFieldType] = static_cast<int>(EventType::kInstrument);
        seqs.push_back(std::move(s));
    }
    const Batch batch = Batch::from_sequences(seqs);

    ModelParams<double> grads;
    model.loss_and_grads(batch, grads);
    return check_gradients(model, batch, grads, tolerance, name_filter);
}

// --- checkpoints -----------------------------------------------------------

void save_checkpoint(const std::string& path, const Model<float>& model,
                     const TrainState& state) {
    const ModelConfig& cfg = model.config();
    Container c;
    c.set_meta("format_version", "1");
    c.set_meta("kind", "checkpoint");
    c.set_meta("layers", std::to_string(cfg.layers));
    c.set_meta("model_dim", std::to_string(cfg.model_dim));
    c.set_meta("heads", std::to_string(cfg.heads));
    c.set_meta("feedforward_dim", std::to_string(cfg.feedforward_dim));
    c.set_meta("max_len", std::to_string(cfg.max_len));
    c.set_meta("dropout", format_g17(cfg.dropout));
    std::string vocab;
    for (int f = 0; f < kNumFields; ++f) {
        if (f > 0) vocab += ' ';
        vocab += std::to_string(cfg.vocab.size(static_cast<Field>(f)));
    }
    c.set_meta("vocab", vocab);
    c.set_meta("step", std::to_string(state.step));
    c.set_meta("best_val_loss", state.has_best ? format_g17(state.best_val_loss) : "none");

    for (const auto& kv : model.params().arrays()) {
        const MatX<float>& m = *kv.second;
        c.add(kv.first, {static_cast<int>(m.rows()), static_cast<int>(m.cols())},
              std::vector<float>(m.data(), m.data() + m.size()));
    }
    c.save(path);
}

Model<float> load_checkpoint(const std::string& path, TrainState* state) {
    const Container c = Container::load(path);
    if (c.meta("kind") != "checkpoint") throw DomainError("not a checkpoint container");
    if (c.meta("format_version") != "1")
        throw DomainError("unsupported checkpoint format version: " + c.meta("format_version"));
    ModelConfig cfg;
    cfg.layers = std::stoi(c.meta("layers"));
    cfg.model_dim = std::stoi(c.meta("model_dim"));
    cfg.heads = std::stoi(c.meta("heads"));
    cfg.feedforward_dim = std::stoi(c.meta("feedforward_dim"));
    cfg.max_len = std::stoi(c.meta("max_len"));
    cfg.dropout = std::stod(c.meta("dropout"));
    std::string vocab;
    for (int f = 0; f < kNumFields; ++f) {
        if (f > 0) vocab += ' ';
        vocab += std::to_string(cfg.vocab.size(static_cast<Field>(f)));
    }
    if (c.meta("vocab") != vocab)
        throw DomainError("checkpoint vocab sizes do not match this build");

    Model<float> model(cfg);
    auto arrays = model.params().arrays();
    if (arrays.size() != c.arrays().size())
        throw DomainError("checkpoint array count mismatch");
    for (auto& kv : arrays) {
        const NamedArray& a = c.get(kv.first);
        MatX<float>& m = *kv.second;
        if (a.shape.size() != 2 || a.shape[0] != static_cast<int>(m.rows()) ||
            a.shape[1] != static_cast<int>(m.cols()))
            throw DomainError("checkpoint array shape mismatch: " + kv.first);
        std::copy(a.data.begin(), a.data.end(), m.data());
    }
    if (state != nullptr) {
        state->step = std::stol(c.meta("step"));
        const std::string& best = c.meta("best_val_loss");
        state->has_best = best != "none";
        state->best_val_loss = state->has_best ? std::stod(best) : 0.0;
    }
    return model;
}

template class Model<float>;
template class Model<double>;
template class InferenceSession<float>;
template class InferenceSession<double>;
template struct ModelParams<float>;
template struct ModelParams<double>;
template float sequence_loss<float>(const std::vector<FieldLogits<float>>&, const Batch&);
template double sequence_loss<double>(const std::vector<FieldLogits<double>>&, const Batch&);

}  // namespace mmt
