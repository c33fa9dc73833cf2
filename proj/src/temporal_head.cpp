#include "esvforge/temporal_head.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "esvforge/error.hpp"

namespace esvforge {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw Error(ErrorCode::DimensionMismatch, "matrix data length mismatch");
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::size_t HeadParams::input_width() const {
    require(!layers.empty(), "head has no LSTM layers");
    return layers.front().input();
}

std::size_t HeadParams::hidden_width() const {
    require(!layers.empty(), "head has no LSTM layers");
    return layers.front().hidden();
}

void HeadParams::validate() const {
    const auto d = hidden_width();
    require(d > 0, "hidden width must be positive");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const auto where = "lstm layer " + std::to_string(l);
        require(layer.weight_ih.rows() == 4 * d, where + ": weight_ih must have 4D rows");
        require(layer.weight_hh.rows() == 4 * d && layer.weight_hh.cols() == d, where + ": weight_hh must be 4D x D");
        require(layer.bias.size() == 4 * d, where + ": bias must have 4D entries");
        require(l == 0 || layer.input() == d, where + ": input width must equal D");
        require(layer.input() > 0, where + ": input width must be positive");
    }
    require(attention.size() == d, "attention vector must have D entries");
    require(output.rows() == d, "output projection must have D rows");
    const auto w = output.cols();
    require(w > 0, "output projection has no columns");
    require(norm_mean.size() == w && norm_var.size() == w && norm_scale.size() == w && norm_shift.size() == w,
            "normalisation statistics must match the output width");
    for (double v : norm_var) {
        if (!(v > 0.0)) throw Error(ErrorCode::InvalidArgument, "normalisation variances must be positive");
    }
    if (!(norm_eps >= 0.0)) throw Error(ErrorCode::InvalidArgument, "normalisation epsilon must be non-negative");
}

HeadParams random_head_params(std::size_t input_width, std::size_t hidden, std::size_t layers,
                              std::size_t output_width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> uni(-scale, scale);
    auto fill = [&](std::vector<double>& v) {
        for (auto& x : v) x = uni(rng);
    };

    HeadParams p;
    for (std::size_t l = 0; l < layers; ++l) {
        LstmLayer layer;
        layer.weight_ih = Matrix(4 * hidden, l == 0 ? input_width : hidden);
        layer.weight_hh = Matrix(4 * hidden, hidden);
        layer.bias.resize(4 * hidden);
        fill(layer.weight_ih.data());
        fill(layer.weight_hh.data());
        fill(layer.bias);
        p.layers.push_back(std::move(layer));
    }
    p.attention.resize(hidden);
    fill(p.attention);
    p.output = Matrix(hidden, output_width);
    fill(p.output.data());
    std::uniform_real_distribution<double> stat(-0.1, 0.1);
    std::uniform_real_distribution<double> var(0.5, 1.5);
    for (std::size_t j = 0; j < output_width; ++j) {
        p.norm_mean.push_back(stat(rng));
        p.norm_var.push_back(var(rng));
        p.norm_scale.push_back(var(rng));
        p.norm_shift.push_back(stat(rng));
    }
    return p;
}

std::vector<double>& TripletScores::slice(Level level) {
    switch (level) {
        case Level::Phase: return phase;
        case Level::Task: return task;
        case Level::Action: return action;
    }
    return phase;
}

const std::vector<double>& TripletScores::slice(Level level) const {
    return const_cast<TripletScores*>(this)->slice(level);
}

std::vector<double> TripletScores::concatenated() const {
    std::vector<double> out(phase);
    out.insert(out.end(), task.begin(), task.end());
    out.insert(out.end(), action.begin(), action.end());
    return out;
}

std::size_t adaptive_layer_count(std::size_t sequence_length, std::size_t available_layers) {
    if (available_layers == 0) throw Error(ErrorCode::DimensionMismatch, "head has no LSTM layers");
    const std::size_t wanted = std::clamp<std::size_t>((sequence_length + 3) / 4, 1, 3);
    return std::min(wanted, available_layers);
}

Matrix lstm_forward(const FeatureSequence& seq, const HeadParams& params, std::size_t layer_count) {
    params.validate();
    require(seq.length() >= 1, "feature sequence is empty");
    require(seq.width() == params.input_width(), "feature width " + std::to_string(seq.width()) +
                                                     " does not match LSTM input width " +
                                                     std::to_string(params.input_width()));
    require(layer_count >= 1 && layer_count <= params.layers.size(), "layer count out of range");
    for (double v : seq.values.data()) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "feature sequence has non-finite entries");
    }

    const auto d = params.hidden_width();
    const auto steps = seq.length();
    Matrix input = seq.values;
    Matrix hidden;
    std::vector<double> gates(4 * d);
    std::vector<double> h(d), c(d);

    for (std::size_t l = 0; l < layer_count; ++l) {
        const auto& layer = params.layers[l];
        hidden = Matrix(steps, d);
        std::fill(h.begin(), h.end(), 0.0);
        std::fill(c.begin(), c.end(), 0.0);
        for (std::size_t t = 0; t < steps; ++t) {
            const auto x = input.row(t);
            for (std::size_t g = 0; g < 4 * d; ++g) {
                double acc = layer.bias[g];
                const auto wi = layer.weight_ih.row(g);
                for (std::size_t j = 0; j < x.size(); ++j) acc += wi[j] * x[j];
                const auto wh = layer.weight_hh.row(g);
                for (std::size_t j = 0; j < d; ++j) acc += wh[j] * h[j];
                gates[g] = acc;
            }
            for (std::size_t j = 0; j < d; ++j) {
                const double in_gate = sigmoid(gates[j]);
                const double forget = sigmoid(gates[d + j]);
                const double cell = std::tanh(gates[2 * d + j]);
                const double out_gate = sigmoid(gates[3 * d + j]);
                c[j] = forget * c[j] + in_gate * cell;
                h[j] = out_gate * std::tanh(c[j]);
            }
            std::copy(h.begin(), h.end(), hidden.row(t).begin());
        }
        input = hidden;
    }
    return hidden;
}

AttentionPooling attention_pool(const Matrix& hidden, std::span<const double> attention) {
    require(hidden.rows() >= 1, "hidden-state matrix is empty");
    require(hidden.cols() == attention.size(), "attention vector width does not match hidden width");

    const auto steps = hidden.rows();
    std::vector<double> scores(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        double s = 0.0;
        const auto row = hidden.row(t);
        for (std::size_t j = 0; j < row.size(); ++j) s += attention[j] * row[j];
        scores[t] = s;
    }
    AttentionPooling out;
    out.weights = softmax(scores);
    out.pooled.assign(hidden.cols(), 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        const auto row = hidden.row(t);
        for (std::size_t j = 0; j < row.size(); ++j) out.pooled[j] += out.weights[t] * row[j];
    }
    return out;
}

std::vector<double> project_and_normalize(std::span<const double> pooled, const HeadParams& params) {
    require(pooled.size() == params.output.rows(), "pooled width does not match the output projection");
    const auto w = params.output_width();
    std::vector<double> y(w, 0.0);
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        const auto row = params.output.row(i);
        for (std::size_t j = 0; j < w; ++j) y[j] += row[j] * pooled[i];
    }
    for (std::size_t j = 0; j < w; ++j) {
        y[j] = (y[j] - params.norm_mean[j]) / std::sqrt(params.norm_var[j] + params.norm_eps) * params.norm_scale[j] +
               params.norm_shift[j];
    }
    return y;
}

TripletScores split_scores(std::span<const double> flat, const TaxonomyRegistry& reg) {
    require(flat.size() == reg.output_width(), "output width " + std::to_string(flat.size()) +
                                                   " does not match the taxonomy (" +
                                                   std::to_string(reg.output_width()) + ")");
    const auto p = reg.size(Level::Phase);
    const auto t = reg.size(Level::Task);
    TripletScores out;
    out.phase.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(p));
    out.task.assign(flat.begin() + static_cast<std::ptrdiff_t>(p), flat.begin() + static_cast<std::ptrdiff_t>(p + t));
    out.action.assign(flat.begin() + static_cast<std::ptrdiff_t>(p + t), flat.end());
    return out;
}

TripletScores head_forward(const FeatureSequence& seq, const HeadParams& params, const HeadOptions& options,
                           const TaxonomyRegistry& reg) {
    params.validate();
    require(params.output_width() == reg.output_width(), "output projection width does not match the taxonomy");
    const auto layers = options.layer_count ? *options.layer_count
                                            : adaptive_layer_count(seq.length(), params.layers.size());
    const auto hidden = lstm_forward(seq, params, layers);
    const auto pooled = attention_pool(hidden, params.attention);
    return split_scores(project_and_normalize(pooled.pooled, params), reg);
}

std::vector<double> softmax(std::span<const double> logits) {
    require(!logits.empty(), "softmax of an empty vector");
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
}

double cross_entropy(std::span<const double> logits, int target) {
    require(!logits.empty(), "cross entropy of an empty vector");
    if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
        throw Error(ErrorCode::OutOfRange, "target class out of range");
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double v : logits) total += std::exp(v - peak);
    return peak + std::log(total) - logits[static_cast<std::size_t>(target)];
}

double combined_loss(const TripletScores& logits, const Triplet& target, const LossWeights& w) {
    if (w.alpha < 0.0 || w.beta < 0.0 || w.gamma < 0.0 || (w.alpha == 0.0 && w.beta == 0.0 && w.gamma == 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "loss weights must be non-negative and not all zero");
    }
    return w.alpha * cross_entropy(logits.phase, target.phase.ordinal) +
           w.beta * cross_entropy(logits.task, target.task.ordinal) +
           w.gamma * cross_entropy(logits.action, target.action.ordinal);
}

TripletScores to_probabilities(const TripletScores& logits) {
    return {softmax(logits.phase), softmax(logits.task), softmax(logits.action)};
}

TripletScores mean_ensemble(std::span<const TripletScores> members) {
    if (members.empty()) throw Error(ErrorCode::EmptyEnsemble, "ensemble has no members");
    TripletScores out = members.front();
    for (auto level : kAllLevels) {
        auto& acc = out.slice(level);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (const auto& m : members) {
            const auto& s = m.slice(level);
            require(s.size() == acc.size(), "ensemble members disagree on slice widths");
            for (std::size_t i = 0; i < s.size(); ++i) acc[i] += s[i];
        }
        for (auto& v : acc) v /= static_cast<double>(members.size());
    }
    return out;
}

int argmax(std::span<const double> values) {
    require(!values.empty(), "argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return static_cast<int>(best);
}

Triplet decode_prediction(const TripletScores& scores) {
    return {PhaseId{argmax(scores.phase)}, TaskId{argmax(scores.task)}, ActionId{argmax(scores.action)}};
}

std::vector<int> smooth_runs(std::span<const int> labels, std::size_t k) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "smoothing window must be at least 1");
    struct Run {
        int label;
        std::size_t length;
    };
    std::vector<Run> runs;
    for (int v : labels) {
        if (!runs.empty() && runs.back().label == v) ++runs.back().length;
        else runs.push_back({v, 1});
    }

    std::size_t i = 1;
    while (i + 1 < runs.size()) {
        if (runs[i].length <= k && runs[i - 1].label == runs[i + 1].label) {
            runs[i - 1].length += runs[i].length + runs[i + 1].length;
            runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(i), runs.begin() + static_cast<std::ptrdiff_t>(i + 2));
            // The merged run is longer now but still needs its own check.
            i = std::max<std::size_t>(i - 1, 1);
        } else {
            ++i;
        }
    }

    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& r : runs) out.insert(out.end(), r.length, r.label);
    return out;
}

std::vector<Triplet> correct_predictions(std::span<const Triplet> labels, std::size_t k,
                                         const TaxonomyRegistry& reg, CorrectionStats* stats) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "smoothing window must be at least 1");
    std::vector<Triplet> current(labels.begin(), labels.end());
    // Repairs can open new short task runs; the second round absorbs them and
    // a third confirms the fixed point.
    for (int round = 0; round < 8; ++round) {
        std::vector<Triplet> next(current.size());
        for (auto level : kAllLevels) {
            std::vector<int> seq(current.size());
            for (std::size_t i = 0; i < current.size(); ++i) seq[i] = current[i].ordinal(level);
            const auto smoothed = smooth_runs(seq, k);
            for (std::size_t i = 0; i < current.size(); ++i) {
                switch (level) {
                    case Level::Phase: next[i].phase = PhaseId{smoothed[i]}; break;
                    case Level::Task: next[i].task = TaskId{smoothed[i]}; break;
                    case Level::Action: next[i].action = ActionId{smoothed[i]}; break;
                }
            }
        }
        for (auto& t : next) {
            if (reg.phase_of(t.task) != t.phase) {
                t.task = reg.first_task_of(t.phase);
                if (stats != nullptr) ++stats->hierarchy_repairs;
            }
        }
        if (next == current) break;
        current = std::move(next);
    }
    return current;
}

}  // namespace esvforge
