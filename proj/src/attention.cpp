#include "mmt/attention.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mmt/container.hpp"
#include "mmt/errors.hpp"
#include "mmt/util.hpp"

namespace mmt {

namespace {

constexpr double kRowSumTol = 1e-6;

int decoded_value(const Event& e, Field field) {
    switch (field) {
        case kFieldBeat: return e.beat() - 1;
        case kFieldPosition: return e.position() - 1;
        case kFieldPitch: return e.pitch() - 1;
        default:
            throw DomainError(std::string("relative attention is defined for beat, position "
                                          "and pitch, not ") +
                              field_name(field));
    }
}

void check_analysis_field(Field field) {
    if (field != kFieldBeat && field != kFieldPosition && field != kFieldPitch)
        throw DomainError(std::string("relative attention is defined for beat, position and "
                                      "pitch, not ") +
                          field_name(field));
}

struct Rgb {
    int r, g, b;
};

// White -> red for positive gains, white -> blue for negative ones.
Rgb gain_color(double gain, double max_abs) {
    if (max_abs <= 0.0 || gain == 0.0) return {255, 255, 255};
    const double t = std::min(1.0, std::abs(gain) / max_abs);
    auto mix = [&](int target) { return static_cast<int>(std::lround(255 + (target - 255) * t)); };
    if (gain > 0.0) return {mix(178), mix(24), mix(43)};
    return {mix(33), mix(102), mix(172)};
}

}  // namespace

void AttentionTrace::validate() const {
    if (num_heads < 1) throw DomainError("attention trace needs at least one head");
    for (std::size_t si = 0; si < samples.size(); ++si) {
        const AttentionSample& s = samples[si];
        const auto n = static_cast<Eigen::Index>(s.events.size());
        if (n == 0) throw DomainError("attention sample with no events");
        if (static_cast<int>(s.heads.size()) != num_heads)
            throw DomainError("attention sample head count mismatch");
        for (const MatX<double>& w : s.heads) {
            if (w.rows() != n || w.cols() != n)
                throw DomainError("attention matrix shape mismatch");
            for (Eigen::Index r = 0; r < n; ++r) {
                double sum = 0.0;
                for (Eigen::Index c = 0; c < n; ++c) {
                    const double v = w(r, c);
                    if (c > r) {
                        if (v != 0.0) throw DomainError("attention weight above the diagonal");
                    } else {
                        if (v < -1e-9 || v > 1.0 + 1e-9)
                            throw DomainError("attention weight outside [0, 1]");
                        sum += v;
                    }
                }
                if (std::abs(sum - 1.0) > kRowSumTol)
                    throw DomainError("attention row does not sum to 1");
            }
        }
    }
}

void AttentionTrace::save(const std::string& path) const {
    Container c;
    c.set_meta("format_version", "1");
    c.set_meta("kind", "attention_trace");
    c.set_meta("num_heads", std::to_string(num_heads));
    c.set_meta("num_samples", std::to_string(samples.size()));
    for (std::size_t si = 0; si < samples.size(); ++si) {
        const AttentionSample& s = samples[si];
        const std::string prefix = "sample" + std::to_string(si) + "/";
        const int n = static_cast<int>(s.events.size());
        std::vector<float> codes;
        codes.reserve(static_cast<std::size_t>(n) * kNumFields);
        for (const Event& e : s.events)
            for (int f = 0; f < kNumFields; ++f)
                codes.push_back(static_cast<float>(e.codes[static_cast<std::size_t>(f)]));
        c.add(prefix + "codes", {n, kNumFields}, std::move(codes));
        for (std::size_t h = 0; h < s.heads.size(); ++h) {
            const MatX<double>& w = s.heads[h];
            std::vector<float> data;
            data.reserve(static_cast<std::size_t>(w.size()));
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index cc = 0; cc < w.cols(); ++cc)
                    data.push_back(static_cast<float>(w(r, cc)));
            c.add(prefix + "head" + std::to_string(h), {n, n}, std::move(data));
        }
    }
    c.save(path);
}

AttentionTrace AttentionTrace::load(const std::string& path) {
    const Container c = Container::load(path);
    if (c.meta("kind") != "attention_trace") throw DomainError("not an attention trace container");
    AttentionTrace trace;
    trace.num_heads = std::stoi(c.meta("num_heads"));
    const long num_samples = std::stol(c.meta("num_samples"));
    for (long si = 0; si < num_samples; ++si) {
        const std::string prefix = "sample" + std::to_string(si) + "/";
        const NamedArray& codes = c.get(prefix + "codes");
        if (codes.shape.size() != 2 || codes.shape[1] != kNumFields)
            throw DomainError("malformed attention trace codes: " + codes.name);
        const int n = codes.shape[0];
        AttentionSample sample;
        for (int i = 0; i < n; ++i) {
            Event e{};
            for (int f = 0; f < kNumFields; ++f)
                e.codes[static_cast<std::size_t>(f)] = static_cast<int>(std::lround(
                    codes.data[static_cast<std::size_t>(i * kNumFields + f)]));
            sample.events.push_back(e);
        }
        for (int h = 0; h < trace.num_heads; ++h) {
            const NamedArray& a = c.get(prefix + "head" + std::to_string(h));
            if (a.shape.size() != 2 || a.shape[0] != n || a.shape[1] != n)
                throw DomainError("malformed attention trace matrix: " + a.name);
            MatX<double> w(n, n);
            for (int r = 0; r < n; ++r)
                for (int cc = 0; cc < n; ++cc)
                    w(r, cc) = static_cast<double>(a.data[static_cast<std::size_t>(r * n + cc)]);
            // float32 storage nudges row sums; restore exact stochasticity
            for (int r = 0; r < n; ++r) {
                const double sum = w.row(r).head(r + 1).sum();
                if (sum > 0.0) w.row(r).head(r + 1) /= sum;
            }
            sample.heads.push_back(std::move(w));
        }
        trace.samples.push_back(std::move(sample));
    }
    return trace;
}

std::vector<std::map<int, double>> mean_relative_attention(const AttentionTrace& trace,
                                                           Field field) {
    check_analysis_field(field);
    trace.validate();
    const int heads = trace.num_heads;
    std::vector<std::map<int, KahanSum>> num(static_cast<std::size_t>(heads));
    std::vector<KahanSum> den(static_cast<std::size_t>(heads));
    long pairs = 0;
    for (const AttentionSample& sample : trace.samples) {
        const auto n = static_cast<Eigen::Index>(sample.events.size());
        for (Eigen::Index s = 1; s < n; ++s) {
            if (!sample.events[static_cast<std::size_t>(s)].is_note()) continue;
            for (Eigen::Index t = 0; t < s; ++t) {
                if (!sample.events[static_cast<std::size_t>(t)].is_note()) continue;
                ++pairs;
                const int k = decoded_value(sample.events[static_cast<std::size_t>(t)], field) -
                              decoded_value(sample.events[static_cast<std::size_t>(s)], field);
                for (int h = 0; h < heads; ++h) {
                    const double a = sample.heads[static_cast<std::size_t>(h)](s, t);
                    num[static_cast<std::size_t>(h)][k].add(a);
                    den[static_cast<std::size_t>(h)].add(a);
                }
            }
        }
    }
    if (pairs == 0) throw UndefinedMetricError("no strictly-ordered note pairs in the traces");

    std::vector<std::map<int, double>> gamma(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const double d = den[static_cast<std::size_t>(h)].value();
        if (d <= 0.0)
            throw UndefinedMetricError("no attention mass on note pairs for head " +
                                       std::to_string(h));
        for (const auto& [k, sum] : num[static_cast<std::size_t>(h)])
            gamma[static_cast<std::size_t>(h)][k] = sum.value() / d;
    }
    return gamma;
}

std::vector<std::map<int, double>> relative_attention_gain(
    const std::vector<std::map<int, double>>& gamma, const AttentionTrace& trace, Field field) {
    check_analysis_field(field);
    trace.validate();
    if (static_cast<int>(gamma.size()) != trace.num_heads)
        throw DomainError("gamma head count does not match the traces");

    std::map<int, long> counts;
    long total = 0;
    for (const AttentionSample& sample : trace.samples) {
        const auto n = static_cast<Eigen::Index>(sample.events.size());
        for (Eigen::Index s = 1; s < n; ++s) {
            if (!sample.events[static_cast<std::size_t>(s)].is_note()) continue;
            for (Eigen::Index t = 0; t < s; ++t) {
                if (!sample.events[static_cast<std::size_t>(t)].is_note()) continue;
                const int k = decoded_value(sample.events[static_cast<std::size_t>(t)], field) -
                              decoded_value(sample.events[static_cast<std::size_t>(s)], field);
                ++counts[k];
                ++total;
            }
        }
    }
    if (total == 0) throw UndefinedMetricError("no strictly-ordered note pairs in the traces");

    std::vector<std::map<int, double>> gain(gamma.size());
    for (std::size_t h = 0; h < gamma.size(); ++h) {
        if (gamma[h].size() != counts.size())
            throw DomainError("gamma keys do not match the traces (recompute gamma?)");
        for (const auto& [k, g] : gamma[h]) {
            const auto it = counts.find(k);
            if (it == counts.end())
                throw DomainError("gamma keys do not match the traces (recompute gamma?)");
            gain[h][k] = g - static_cast<double>(it->second) / static_cast<double>(total);
        }
    }
    return gain;
}

RelAttnProfile make_profile(const AttentionTrace& trace, Field field) {
    RelAttnProfile p;
    p.field = field;
    p.gamma = mean_relative_attention(trace, field);
    p.gain = relative_attention_gain(p.gamma, trace, field);
    return p;
}

namespace {

std::string render_heatmap(const RelAttnProfile& profile) {
    std::set<int> ks;
    double max_abs = 0.0;
    for (const auto& head : profile.gain)
        for (const auto& [k, g] : head) {
            ks.insert(k);
            max_abs = std::max(max_abs, std::abs(g));
        }
    const std::vector<int> cols(ks.begin(), ks.end());
    const int heads = static_cast<int>(profile.gain.size());
    const int cell = 14;
    const int left = 46, top = 34, bottom = 30, right = 10;
    const int width = left + cell * std::max(1, static_cast<int>(cols.size())) + right;
    const int height = top + cell * std::max(1, heads) + bottom;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\">\n";
    svg += "<style>text{font-family:monospace;font-size:10px;}</style>\n";
    svg += "<text x=\"" + std::to_string(left) + "\" y=\"16\">relative attention gain (" +
           field_name(profile.field) + ")</text>\n";
    for (int h = 0; h < heads; ++h) {
        svg += "<text x=\"4\" y=\"" + std::to_string(top + h * cell + cell - 3) + "\">head " +
               std::to_string(h) + "</text>\n";
        for (std::size_t ci = 0; ci < cols.size(); ++ci) {
            const int k = cols[ci];
            const auto it = profile.gain[static_cast<std::size_t>(h)].find(k);
            const double g = it == profile.gain[static_cast<std::size_t>(h)].end() ? 0.0
                                                                                  : it->second;
            const Rgb rgb = gain_color(g, max_abs);
            const char* cls = g > 0.0 ? "pos" : (g < 0.0 ? "neg" : "zero");
            svg += "<rect class=\"" + std::string(cls) + "\" x=\"" +
                   std::to_string(left + static_cast<int>(ci) * cell) + "\" y=\"" +
                   std::to_string(top + h * cell) + "\" width=\"" + std::to_string(cell) +
                   "\" height=\"" + std::to_string(cell) + "\" fill=\"rgb(" +
                   std::to_string(rgb.r) + "," + std::to_string(rgb.g) + "," +
                   std::to_string(rgb.b) + ")\"/>\n";
        }
    }
    const int label_stride = std::max(1, static_cast<int>(cols.size()) / 12);
    for (std::size_t ci = 0; ci < cols.size(); ci += static_cast<std::size_t>(label_stride)) {
        svg += "<text x=\"" + std::to_string(left + static_cast<int>(ci) * cell) + "\" y=\"" +
               std::to_string(top + heads * cell + 14) + "\">" + std::to_string(cols[ci]) +
               "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace

void export_profile(const std::vector<RelAttnProfile>& profiles, const std::string& out_dir) {
    std::string csv = "field,head,k,gamma,gain\n";
    for (const RelAttnProfile& p : profiles) {
        for (std::size_t h = 0; h < p.gamma.size(); ++h) {
            for (const auto& [k, g] : p.gamma[h]) {
                const auto it = p.gain[h].find(k);
                const double gain = it == p.gain[h].end() ? 0.0 : it->second;
                csv += std::string(field_name(p.field)) + "," + std::to_string(h) + "," +
                       std::to_string(k) + "," + format_double(g, 9) + "," +
                       format_double(gain, 9) + "\n";
            }
        }
    }
    write_file(out_dir + "/relative_attention.csv", csv);
    for (const RelAttnProfile& p : profiles)
        write_file(out_dir + "/attention_gain_" + field_name(p.field) + ".svg",
                   render_heatmap(p));
}

}  // namespace mmt
