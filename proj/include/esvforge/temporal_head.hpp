#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "esvforge/taxonomy.hpp"

namespace esvforge {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// T x D_in per-timestep encoder features.
struct FeatureSequence {
    Matrix values;

    std::size_t length() const noexcept { return values.rows(); }
    std::size_t width() const noexcept { return values.cols(); }
};

/// One LSTM layer; gate blocks are stacked in input, forget, cell, output order.
struct LstmLayer {
    Matrix weight_ih;           // 4D x D_in
    Matrix weight_hh;           // 4D x D
    std::vector<double> bias;   // 4D

    std::size_t hidden() const noexcept { return weight_hh.cols(); }
    std::size_t input() const noexcept { return weight_ih.cols(); }
};

struct HeadParams {
    std::vector<LstmLayer> layers;
    std::vector<double> attention;  // D
    Matrix output;                  // D x (P+T+A)
    std::vector<double> norm_mean;
    std::vector<double> norm_var;
    std::vector<double> norm_scale;
    std::vector<double> norm_shift;
    double norm_eps = 1e-5;

    std::size_t input_width() const;
    std::size_t hidden_width() const;
    std::size_t output_width() const noexcept { return output.cols(); }
    /// Throws DimensionMismatch or InvalidArgument on inconsistent parameters.
    void validate() const;
};

/// Parameters drawn from a seeded uniform distribution, for tests and demos.
HeadParams random_head_params(std::size_t input_width, std::size_t hidden, std::size_t layers,
                              std::size_t output_width, std::uint64_t seed);

/// Per-level scores: logits or, after softmax, probabilities.
struct TripletScores {
    std::vector<double> phase;
    std::vector<double> task;
    std::vector<double> action;

    std::vector<double>& slice(Level level);
    const std::vector<double>& slice(Level level) const;
    std::vector<double> concatenated() const;
    friend bool operator==(const TripletScores&, const TripletScores&) = default;
};

struct LossWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
};

struct HeadOptions {
    /// Overrides the length-dependent layer count when set.
    std::optional<std::size_t> layer_count;
};

/// clamp(ceil(T / 4), 1, 3), further capped by the layers available.
std::size_t adaptive_layer_count(std::size_t sequence_length, std::size_t available_layers);

/// Final-layer hidden states, T x D. Zero initial hidden and cell state.
Matrix lstm_forward(const FeatureSequence& seq, const HeadParams& params, std::size_t layer_count);

struct AttentionPooling {
    std::vector<double> pooled;   // D
    std::vector<double> weights;  // T, non-negative, summing to 1
};
AttentionPooling attention_pool(const Matrix& hidden, std::span<const double> attention);

/// Inference-mode normalisation of the affine projection of a pooled vector.
std::vector<double> project_and_normalize(std::span<const double> pooled, const HeadParams& params);

TripletScores head_forward(const FeatureSequence& seq, const HeadParams& params, const HeadOptions& options = {},
                           const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());

/// Splits a concatenated vector into registry-ordered phase/task/action slices.
TripletScores split_scores(std::span<const double> flat, const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());

std::vector<double> softmax(std::span<const double> logits);
/// -log softmax(logits)[target], via log-sum-exp.
double cross_entropy(std::span<const double> logits, int target);
double combined_loss(const TripletScores& logits, const Triplet& target, const LossWeights& w = {});

TripletScores to_probabilities(const TripletScores& logits);
/// Arithmetic mean of per-member probabilities; throws EmptyEnsemble.
TripletScores mean_ensemble(std::span<const TripletScores> members);

/// Index of the largest entry; ties resolve to the lowest index.
int argmax(std::span<const double> values);
/// Per-level argmax. The result may violate the hierarchy.
Triplet decode_prediction(const TripletScores& scores);

/// Replaces runs of length <= k whose two flanking runs share a label with that
/// label, sweeping left to right until no such run remains.
std::vector<int> smooth_runs(std::span<const int> labels, std::size_t k);

struct CorrectionStats {
    std::size_t hierarchy_repairs = 0;
};

/// Smooths each level independently, then repairs tasks that left their phase.
std::vector<Triplet> correct_predictions(std::span<const Triplet> labels, std::size_t k,
                                         const TaxonomyRegistry& reg = TaxonomyRegistry::builtin(),
                                         CorrectionStats* stats = nullptr);

}  // namespace esvforge
