#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmt/events.hpp"
#include "mmt/model.hpp"

namespace mmt {

// Last-layer attention weights for one sequence: per head, an n x n matrix
// with row s holding weights over positions t <= s (zero above the diagonal,
// rows summing to 1), plus the event codes aligned with the positions.
struct AttentionSample {
    EventSequence events;
    std::vector<MatX<double>> heads;
};

struct AttentionTrace {
    int num_heads = 0;
    std::vector<AttentionSample> samples;

    void validate() const;  // throws DomainError on malformed weights

    void save(const std::string& path) const;
    static AttentionTrace load(const std::string& path);
};

// gamma[head][k]: attention-weighted frequency of decoded-value difference
// k = x_t - x_s over note-note pairs with s > t.  Throws UndefinedMetricError
// when no such pair exists.
std::vector<std::map<int, double>> mean_relative_attention(const AttentionTrace& trace,
                                                           Field field);

// gain[head][k] = gamma[head][k] - (pair count with difference k) / (pair count).
std::vector<std::map<int, double>> relative_attention_gain(
    const std::vector<std::map<int, double>>& gamma, const AttentionTrace& trace, Field field);

struct RelAttnProfile {
    Field field = kFieldBeat;
    std::vector<std::map<int, double>> gamma;  // per head
    std::vector<std::map<int, double>> gain;   // per head
};

RelAttnProfile make_profile(const AttentionTrace& trace, Field field);

// Writes relative_attention.csv (field,head,k,gamma,gain) and one SVG heatmap
// per profile (rows = heads, columns = k, red positive / blue negative).
void export_profile(const std::vector<RelAttnProfile>& profiles, const std::string& out_dir);

}  // namespace mmt
