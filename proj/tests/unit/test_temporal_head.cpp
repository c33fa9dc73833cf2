#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "esvforge/temporal_head.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace esvforge;
using fixture::code_of;

namespace {

FeatureSequence random_sequence(std::size_t t, std::size_t width, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FeatureSequence s{Matrix(t, width)};
    for (auto& v : s.values.data()) v = u(rng);
    return s;
}

double max_gap(const oracle::Grid& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t r = 0; r < b.rows(); ++r)
        for (std::size_t c = 0; c < b.cols(); ++c) m = std::max(m, std::abs(a[r][c] - b(r, c)));
    return m;
}

TripletScores probs(std::vector<double> p, std::vector<double> t, std::vector<double> a) {
    return {std::move(p), std::move(t), std::move(a)};
}

}  // namespace

TEST_CASE("adaptive layer count") {
    CHECK(adaptive_layer_count(1, 3) == 1);
    CHECK(adaptive_layer_count(4, 3) == 1);
    CHECK(adaptive_layer_count(5, 3) == 2);
    CHECK(adaptive_layer_count(8, 3) == 2);
    CHECK(adaptive_layer_count(9, 3) == 3);
    CHECK(adaptive_layer_count(100, 3) == 3);
    CHECK(adaptive_layer_count(100, 2) == 2);
    CHECK(code_of([] { adaptive_layer_count(4, 0); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("zero input with zero biases keeps the hidden state at zero") {
    auto p = random_head_params(5, 4, 2, 38, 1);
    for (auto& l : p.layers) std::fill(l.bias.begin(), l.bias.end(), 0.0);
    const auto h = lstm_forward({Matrix(6, 5)}, p, 2);
    for (double v : h.data()) CHECK(v == 0.0);
}

TEST_CASE("LSTM matches the scalar oracle") {
    std::mt19937_64 rng(2);
    for (int round = 0; round < 30; ++round) {
        const std::size_t t = 1 + rng() % 9, din = 1 + rng() % 7, d = 1 + rng() % 6, layers = 1 + rng() % 3;
        const auto p = random_head_params(din, d, layers, 38, rng());
        const auto seq = random_sequence(t, din, rng);
        const auto h = lstm_forward(seq, p, layers);
        CHECK(max_gap(oracle::lstm(oracle::to_grid(seq.values), p, layers), h) < 1e-9);
    }
}

TEST_CASE("reversing the sequence changes the hidden states") {
    std::mt19937_64 rng(3);
    const auto p = random_head_params(4, 5, 1, 38, 9);
    const auto seq = random_sequence(6, 4, rng);
    FeatureSequence rev{Matrix(6, 4)};
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 4; ++c) rev.values(r, c) = seq.values(5 - r, c);
    const auto a = lstm_forward(seq, p, 1);
    const auto b = lstm_forward(rev, p, 1);
    CHECK(a.row(5)[0] != b.row(5)[0]);
    CHECK(max_gap(oracle::lstm(oracle::to_grid(rev.values), p, 1), b) < 1e-9);
}

TEST_CASE("LSTM rejects mismatched inputs") {
    const auto p = random_head_params(5, 4, 2, 38, 1);
    CHECK(code_of([&] { lstm_forward({Matrix(3, 4)}, p, 1); }) == ErrorCode::DimensionMismatch);
    CHECK(code_of([&] { lstm_forward({Matrix(3, 5)}, p, 3); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("attention over identical rows is uniform") {
    Matrix h(4, 3);
    for (std::size_t t = 0; t < 4; ++t) {
        h(t, 0) = 0.5;
        h(t, 1) = -1.0;
        h(t, 2) = 2.0;
    }
    const std::vector<double> w{0.3, 0.1, -0.7};
    const auto a = attention_pool(h, w);
    for (double v : a.weights) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(a.pooled[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(a.pooled[2] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("a dominating score takes all the weight") {
    Matrix h(3, 2);
    h(0, 0) = 0.1;
    h(1, 0) = 1000.0;
    h(1, 1) = 3.0;
    h(2, 1) = -2.0;
    const auto a = attention_pool(h, std::vector<double>{1.0, 0.0});
    CHECK(std::abs(a.weights[1] - 1.0) < 1e-12);
    CHECK(std::abs(a.pooled[0] - 1000.0) < 1e-9);
    CHECK(std::abs(a.pooled[1] - 3.0) < 1e-12);
}

TEST_CASE("attention matches the double-loop oracle and weights sum to one") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int round = 0; round < 100; ++round) {
        const std::size_t t = 1 + rng() % 8, d = 1 + rng() % 6;
        Matrix h(t, d);
        for (auto& v : h.data()) v = u(rng);
        std::vector<double> w(d);
        for (auto& v : w) v = u(rng);
        const auto got = attention_pool(h, w);
        const auto ref = oracle::attention(oracle::to_grid(h), w);
        double sum = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
            CHECK(std::abs(got.weights[i] - ref.weights[i]) < 1e-12);
            CHECK(got.weights[i] >= 0.0);
            sum += got.weights[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
        for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(got.pooled[j] - ref.pooled[j]) < 1e-12);
    }
}

TEST_CASE("identity-like projection passes pooled entries through") {
    auto p = random_head_params(3, 4, 1, 38, 7);
    p.output = Matrix(4, 38);
    for (std::size_t j = 0; j < 38; ++j) p.output(j % 4, j) = 1.0;
    p.norm_mean.assign(38, 0.0);
    p.norm_var.assign(38, 1.0);
    p.norm_scale.assign(38, 1.0);
    p.norm_shift.assign(38, 0.0);
    p.norm_eps = 0.0;
    const std::vector<double> pooled{0.1, -0.2, 0.3, 0.9};
    const auto y = project_and_normalize(pooled, p);
    REQUIRE(y.size() == 38);
    for (std::size_t j = 0; j < 38; ++j) CHECK(y[j] == pooled[j % 4]);
}

TEST_CASE("head output has width 38 and matches the composed oracle") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 30; ++round) {
        const std::size_t t = 1 + rng() % 12, din = 1 + rng() % 10, d = 1 + rng() % 8;
        const auto p = random_head_params(din, d, 3, 38, rng());
        const auto seq = random_sequence(t, din, rng);
        const auto out = head_forward(seq, p);
        CHECK(out.phase.size() == 5);
        CHECK(out.task.size() == 12);
        CHECK(out.action.size() == 21);
        const auto flat = out.concatenated();
        const auto ref = oracle::head(oracle::to_grid(seq.values), p, adaptive_layer_count(t, 3));
        for (std::size_t j = 0; j < 38; ++j) CHECK(std::abs(flat[j] - ref[j]) < 1e-9);
    }
}

TEST_CASE("layer override and width checks") {
    std::mt19937_64 rng(6);
    const auto p = random_head_params(3, 4, 3, 38, 1);
    const auto seq = random_sequence(2, 3, rng);
    const auto one = head_forward(seq, p);
    const auto three = head_forward(seq, p, HeadOptions{3});
    CHECK(one != three);
    const auto narrow = random_head_params(3, 4, 1, 10, 1);
    CHECK(code_of([&] { head_forward(seq, narrow); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("uniform logits give ln5 + ln12 + ln21") {
    const TripletScores z{std::vector<double>(5, 0.3), std::vector<double>(12, 0.3), std::vector<double>(21, 0.3)};
    const Triplet target{PhaseId{1}, TaskId{4}, ActionId{5}};
    const double expected = std::log(5.0) + std::log(12.0) + std::log(21.0);
    CHECK(std::abs(combined_loss(z, target) - expected) < 1e-12);
    CHECK(std::abs(expected - 7.13887) < 1e-5);
    CHECK(std::abs(combined_loss(z, target, {1, 0, 0}) - std::log(5.0)) < 1e-12);
}

TEST_CASE("loss matches the direct log-sum-exp oracle") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-6, 6), w(0, 2);
    for (int round = 0; round < 200; ++round) {
        TripletScores z{std::vector<double>(5), std::vector<double>(12), std::vector<double>(21)};
        for (auto level : kAllLevels)
            for (auto& v : z.slice(level)) v = u(rng);
        const Triplet t{PhaseId{int(rng() % 5)}, TaskId{int(rng() % 12)}, ActionId{int(rng() % 21)}};
        const LossWeights lw{w(rng), w(rng), w(rng)};
        const double ref = lw.alpha * oracle::cross_entropy(z.phase, t.phase.ordinal) +
                           lw.beta * oracle::cross_entropy(z.task, t.task.ordinal) +
                           lw.gamma * oracle::cross_entropy(z.action, t.action.ordinal);
        CHECK(std::abs(combined_loss(z, t, lw) - ref) < 1e-12);
    }
    CHECK(code_of([] { combined_loss({{0}, {0}, {0}}, {}, {0, 0, 0}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { cross_entropy(std::vector<double>{1, 2}, 2); }) == ErrorCode::OutOfRange);
}

TEST_CASE("softmax is stable for large logits") {
    const auto p = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[2] == 0.0);
}

TEST_CASE("mean ensembling") {
    const auto m = probs({0.2, 0.8}, {1.0}, {0.5, 0.5});
    const std::vector<TripletScores> same{m, m, m};
    const auto flat = mean_ensemble(same).concatenated();
    const auto want = m.concatenated();
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(flat[i] - want[i]) < 1e-15);

    const std::vector<TripletScores> split{probs({0.6, 0.4}, {1}, {1}), probs({0.4, 0.6}, {1}, {1})};
    const auto mean = mean_ensemble(split);
    CHECK(mean.phase[0] == doctest::Approx(0.5));
    CHECK(mean.phase[1] == doctest::Approx(0.5));
    CHECK(argmax(mean.phase) == 0);

    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-2, 2);
    std::vector<TripletScores> members;
    for (int k = 0; k < 3; ++k) {
        TripletScores z{std::vector<double>(5), std::vector<double>(12), std::vector<double>(21)};
        for (auto level : kAllLevels)
            for (auto& v : z.slice(level)) v = u(rng);
        members.push_back(to_probabilities(z));
    }
    const auto avg = mean_ensemble(members);
    for (auto level : kAllLevels)
        for (std::size_t i = 0; i < avg.slice(level).size(); ++i) {
            const double ref = (members[0].slice(level)[i] + members[1].slice(level)[i] + members[2].slice(level)[i]) / 3.0;
            CHECK(std::abs(avg.slice(level)[i] - ref) < 1e-12);
        }
    CHECK(code_of([] { mean_ensemble({}); }) == ErrorCode::EmptyEnsemble);
}

TEST_CASE("argmax ties resolve to the lowest index") {
    CHECK(argmax(std::vector<double>{1, 3, 3, 2}) == 1);
    const auto t = decode_prediction(probs({0.5, 0.5}, {0.1, 0.9}, {0.3, 0.3, 0.4}));
    CHECK(t == Triplet{PhaseId{0}, TaskId{1}, ActionId{2}});
}

TEST_CASE("smoothing rule examples") {
    CHECK(smooth_runs(std::vector<int>{0, 0, 0, 1, 0, 0, 0}, 1) == std::vector<int>(7, 0));
    const std::vector<int> two{0, 0, 1, 1, 0, 0};
    CHECK(smooth_runs(two, 1) == two);
    CHECK(smooth_runs(two, 2) == std::vector<int>(6, 0));
    // Edges are never flanked on both sides.
    const std::vector<int> edge{1, 0, 0, 0, 2};
    CHECK(smooth_runs(edge, 1) == edge);
    CHECK(code_of([] { smooth_runs(std::vector<int>{1}, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("smoothing matches the run-length oracle and removes injected flips") {
    std::mt19937_64 rng(12);
    for (int round = 0; round < 300; ++round) {
        std::vector<int> clean;
        while (clean.size() < 200) {
            int label = static_cast<int>(rng() % 4);
            if (!clean.empty() && label == clean.back()) label = (label + 1) % 4;
            const std::size_t len = 3 + rng() % 12;
            for (std::size_t i = 0; i < len && clean.size() < 200; ++i) clean.push_back(label);
        }
        // Isolated single-sample flips strictly inside runs.
        auto noisy = clean;
        for (std::size_t i = 1; i + 1 < noisy.size(); ++i) {
            if (clean[i - 1] != clean[i] || clean[i] != clean[i + 1] || rng() % 20 != 0) continue;
            // A flip matching a label two samples away is ambiguous, not isolated.
            const int near_l = i >= 2 ? clean[i - 2] : clean[i];
            const int near_r = i + 2 < clean.size() ? clean[i + 2] : clean[i];
            int flip = static_cast<int>(rng() % 4);
            while (flip == clean[i] || flip == near_l || flip == near_r) flip = (flip + 1) % 4;
            noisy[i] = flip;
            i += 2;
        }
        const auto k = 1 + rng() % 3;
        CHECK(smooth_runs(noisy, k) == oracle::smooth(noisy, k));
        CHECK(smooth_runs(noisy, 1) == clean);
    }
}

TEST_CASE("prediction correction restores the hierarchy and is idempotent") {
    const auto& reg = TaxonomyRegistry::builtin();
    std::mt19937_64 rng(13);
    for (int round = 0; round < 300; ++round) {
        std::vector<Triplet> seq(1 + rng() % 60);
        for (auto& t : seq) {
            // Runs of mostly valid triplets with random noise.
            if (rng() % 4 == 0 || &t == &seq.front()) {
                t = Triplet{PhaseId{int(rng() % 5)}, TaskId{int(rng() % 12)}, ActionId{int(rng() % 21)}};
            } else {
                t = *(&t - 1);
            }
        }
        const std::size_t k = 1 + rng() % 3;
        CorrectionStats stats;
        const auto once = correct_predictions(seq, k, reg, &stats);
        REQUIRE(once.size() == seq.size());
        for (const auto& t : once) CHECK(reg.phase_of(t.task) == t.phase);
        CHECK(correct_predictions(once, k, reg) == once);
    }
}

TEST_CASE("correction reaches a fixed point where one pass would not") {
    const auto& reg = TaxonomyRegistry::builtin();
    // Five distinct task runs Q5 R1 S1 T1 U5 under one phase; with k=3 the
    // middle merges only after earlier merges are re-checked.
    std::vector<int> tasks;
    for (int i = 0; i < 5; ++i) tasks.push_back(4);
    tasks.push_back(5);
    tasks.push_back(6);
    tasks.push_back(5);
    for (int i = 0; i < 5; ++i) tasks.push_back(4);
    std::vector<Triplet> seq;
    for (int t : tasks) seq.push_back({reg.phase_of(TaskId{t}), TaskId{t}, ActionId{5}});
    const auto out = correct_predictions(seq, 3, reg);
    for (const auto& t : out) CHECK(t.task.ordinal == 4);
    CHECK(correct_predictions(out, 3, reg) == out);
}
