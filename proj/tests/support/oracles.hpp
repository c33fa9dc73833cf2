#pragma once

// Brute-force reference implementations. They share no code with the library
// beyond its data types and are written for clarity over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "esvforge/frame_pipeline.hpp"
#include "esvforge/temporal_head.hpp"
#include "esvforge/timeline_index.hpp"

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const esvforge::Matrix& m) {
    Grid g(m.rows(), std::vector<double>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) g[r][c] = m(r, c);
    return g;
}

inline double logistic(double x) { return 0.5 * (1.0 + std::tanh(0.5 * x)); }

// Stacked LSTM, one scalar at a time, gates evaluated separately.
inline Grid lstm(const Grid& x, const esvforge::HeadParams& p, std::size_t layers) {
    Grid in = x;
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& L = p.layers[l];
        const std::size_t d = L.weight_hh.cols();
        const std::size_t din = L.weight_ih.cols();
        std::vector<double> h(d, 0.0), c(d, 0.0);
        Grid out;
        for (const auto& xt : in) {
            auto gate = [&](std::size_t block, std::size_t j) {
                const std::size_t r = block * d + j;
                double s = L.bias[r];
                for (std::size_t k = 0; k < din; ++k) s += L.weight_ih(r, k) * xt[k];
                for (std::size_t k = 0; k < d; ++k) s += L.weight_hh(r, k) * h[k];
                return s;
            };
            std::vector<double> nh(d), nc(d);
            for (std::size_t j = 0; j < d; ++j) {
                const double i = logistic(gate(0, j));
                const double f = logistic(gate(1, j));
                const double g = std::tanh(gate(2, j));
                const double o = logistic(gate(3, j));
                nc[j] = f * c[j] + i * g;
                nh[j] = o * std::tanh(nc[j]);
            }
            h = nh;
            c = nc;
            out.push_back(h);
        }
        in = out;
    }
    return in;
}

struct Pooled {
    std::vector<double> weights;
    std::vector<double> pooled;
};

inline Pooled attention(const Grid& h, const std::vector<double>& w) {
    std::vector<double> s;
    for (const auto& row : h) {
        double v = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) v += row[j] * w[j];
        s.push_back(v);
    }
    const double m = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - m);
    Pooled out;
    for (double v : s) out.weights.push_back(std::exp(v - m) / z);
    out.pooled.assign(h.front().size(), 0.0);
    for (std::size_t j = 0; j < out.pooled.size(); ++j)
        for (std::size_t t = 0; t < h.size(); ++t) out.pooled[j] += out.weights[t] * h[t][j];
    return out;
}

inline std::vector<double> head(const Grid& x, const esvforge::HeadParams& p, std::size_t layers) {
    const auto pooled = attention(lstm(x, p, layers), p.attention).pooled;
    std::vector<double> y;
    for (std::size_t j = 0; j < p.output.cols(); ++j) {
        double v = 0.0;
        for (std::size_t d = 0; d < pooled.size(); ++d) v += p.output(d, j) * pooled[d];
        y.push_back((v - p.norm_mean[j]) * p.norm_scale[j] / std::sqrt(p.norm_var[j] + p.norm_eps) + p.norm_shift[j]);
    }
    return y;
}

// -log(exp(z_t) / sum exp(z)), summed directly.
inline double cross_entropy(const std::vector<double>& z, int t) {
    double s = 0.0;
    for (double v : z) s += std::exp(v);
    return std::log(s) - z[static_cast<std::size_t>(t)];
}

// Pair counting; ties contribute one half.
inline double mann_whitney_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!pos[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (pos[j]) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

struct Counted {
    std::vector<double> f1;
    double macro = 0.0;
};

inline Counted f1_by_counting(const std::vector<int>& pred, const std::vector<int>& tgt, int classes) {
    Counted out;
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < classes; ++c) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] == c && tgt[i] == c) ++tp;
            if (pred[i] == c && tgt[i] != c) ++fp;
            if (pred[i] != c && tgt[i] == c) ++fn;
        }
        const std::size_t den = 2 * tp + fp + fn;
        const double f = den == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(den);
        out.f1.push_back(f);
        if (tp + fn > 0) {
            sum += f;
            ++present;
        }
    }
    out.macro = present == 0 ? 0.0 : sum / present;
    return out;
}

// Repeatedly finds the leftmost run of length <= k whose neighbours agree
// and relabels it, until none is left.
inline std::vector<int> smooth(std::vector<int> v, std::size_t k) {
    for (bool changed = true; changed;) {
        changed = false;
        std::vector<std::pair<std::size_t, std::size_t>> runs;  // [begin, end)
        for (std::size_t i = 0; i < v.size();) {
            std::size_t j = i;
            while (j < v.size() && v[j] == v[i]) ++j;
            runs.emplace_back(i, j);
            i = j;
        }
        for (std::size_t r = 1; r + 1 < runs.size(); ++r) {
            if (runs[r].second - runs[r].first <= k && v[runs[r - 1].first] == v[runs[r + 1].first]) {
                std::fill(v.begin() + runs[r].first, v.begin() + runs[r].second, v[runs[r - 1].first]);
                changed = true;
                break;
            }
        }
    }
    return v;
}

inline double cosine_gap(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 && bb == 0.0) return 0.0;
    if (aa == 0.0 || bb == 0.0) return 1.0;
    return 1.0 - ab / std::sqrt(aa * bb);
}

// Full pairwise distance table, then the anchor rule replayed over it.
inline std::vector<std::size_t> replay_keyframes(const std::vector<esvforge::TimedSignature>& s, double threshold) {
    const std::size_t n = s.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i][j] = cosine_gap(s[i].signature.values, s[j].signature.values);
    std::vector<std::size_t> out;
    if (n == 0) return out;
    out.push_back(0);
    for (std::size_t i = 1; i < n; ++i)
        if (d[out.back()][i] > threshold) out.push_back(i);
    return out;
}

// Largest 4-connected set of pixels with luma > threshold, depth-first with
// an explicit stack; returns area and inclusive bounds.
struct Blob {
    std::size_t area = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

inline std::optional<Blob> flood_fill_largest(const std::vector<std::uint8_t>& bright, int w, int h) {
    std::vector<int> seen(static_cast<std::size_t>(w) * h, 0);
    std::optional<Blob> best;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto at = static_cast<std::size_t>(y) * w + x;
            if (!bright[at] || seen[at]) continue;
            Blob b{0, x, y, x, y};
            std::vector<std::pair<int, int>> stack{{x, y}};
            seen[at] = 1;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                ++b.area;
                b.x0 = std::min(b.x0, cx);
                b.x1 = std::max(b.x1, cx);
                b.y0 = std::min(b.y0, cy);
                b.y1 = std::max(b.y1, cy);
                const int nx[] = {cx - 1, cx + 1, cx, cx};
                const int ny[] = {cy, cy, cy - 1, cy + 1};
                for (int k = 0; k < 4; ++k) {
                    if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
                    const auto n = static_cast<std::size_t>(ny[k]) * w + nx[k];
                    if (bright[n] && !seen[n]) {
                        seen[n] = 1;
                        stack.push_back({nx[k], ny[k]});
                    }
                }
            }
            if (!best || b.area > best->area) best = b;
        }
    }
    return best;
}

// Every segment of the index checked against every criterion; coarser label
// criteria are applied by intersecting with each matching coarser segment in
// turn, so each result piece is the overlap of one segment per criterion.
inline std::vector<esvforge::IndexSegment> linear_search(const esvforge::TimelineIndex& index,
                                                         const esvforge::SearchQuery& q,
                                                         const esvforge::TaxonomyRegistry& reg) {
    using namespace esvforge;
    std::optional<int> want[3];
    int finest = -1;
    for (int l = 0; l < 3; ++l) {
        if (const auto& name = q.label(static_cast<Level>(l))) {
            want[l] = reg.find(static_cast<Level>(l), *name);
            finest = l;
        }
    }
    const double from = q.from_s.value_or(-std::numeric_limits<double>::infinity());
    const double to = q.to_s.value_or(std::numeric_limits<double>::infinity());
    std::vector<IndexSegment> out;
    for (const auto& e : index.surgeries()) {
        if (q.surgery && *q.surgery != e.id) continue;
        for (int l = 0; l < 3; ++l) {
            if (finest >= 0 && l != finest) continue;
            for (const auto& seg : e.levels[l]) {
                if (want[l] && seg.label != *want[l]) continue;
                std::vector<std::pair<double, double>> pieces{{std::max(seg.start_s, from), std::min(seg.end_s, to)}};
                for (int c = 0; c < 3; ++c) {
                    if (c == l || !want[c]) continue;
                    std::vector<std::pair<double, double>> next;
                    for (const auto& p : pieces)
                        for (const auto& other : e.levels[c])
                            if (other.label == *want[c])
                                next.emplace_back(std::max(p.first, other.start_s), std::min(p.second, other.end_s));
                    pieces = next;
                }
                for (const auto& p : pieces) {
                    if (!(p.first < p.second)) continue;
                    if (q.min_duration_s && p.second - p.first < *q.min_duration_s) continue;
                    IndexSegment s = seg;
                    s.start_s = p.first;
                    s.end_s = p.second;
                    out.push_back(s);
                }
            }
        }
    }
    // Insertion sort keeps equal keys in scan order.
    for (std::size_t i = 1; i < out.size(); ++i) {
        for (std::size_t j = i; j > 0; --j) {
            const auto& a = out[j - 1];
            const auto& b = out[j];
            const bool later = a.surgery_id > b.surgery_id ||
                               (a.surgery_id == b.surgery_id &&
                                (a.start_s > b.start_s || (a.start_s == b.start_s && a.level > b.level)));
            if (!later) break;
            std::swap(out[j - 1], out[j]);
        }
    }
    return out;
}

}  // namespace oracle
