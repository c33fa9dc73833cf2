#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esvforge/taxonomy.hpp"

namespace esvforge {

struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/// One-vs-rest counts for classes 0..classes-1.
std::vector<ClassCounts> confusion_counts(std::span<const int> preds, std::span<const int> targets,
                                          std::size_t classes);

/// Fraction of exact matches. Throws LengthMismatch or Empty.
double accuracy(std::span<const int> preds, std::span<const int> targets);
double accuracy(std::span<const std::string> preds, std::span<const std::string> targets);

struct F1Report {
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    /// Class occurs in the targets; only these enter the macro average.
    std::vector<bool> present;
    double macro = 0.0;
};

/// Per-class precision/recall/F1 with 0/0 taken as 0; macro over classes present in targets.
F1Report f1_scores(std::span<const int> preds, std::span<const int> targets, std::size_t classes);

/// (tp + tn) / n for one class against the rest.
double one_vs_rest_accuracy(const ClassCounts& counts);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct RocSeries {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

/// Sweeps thresholds over the distinct scores in descending order; AUC by the
/// trapezoidal rule, which counts tied pairs as one half.
RocSeries roc_auc(std::span<const double> scores, const std::vector<bool>& positives);

struct Summary {
    double mean = 0.0;
    double deviation = 0.0;  // population standard deviation
};

Summary per_class_summary(std::span<const double> values);

/// One scored sample of one taxonomy level.
struct LevelSample {
    std::string group;  // surgery id
    int target = 0;
    int predicted = 0;
    std::vector<double> scores;  // optional class probabilities
};

struct ClassReport {
    std::string name;
    std::size_t support = 0;
    std::size_t groups = 0;
    Summary accuracy;
    Summary f1;
    std::optional<RocSeries> roc;
};

struct LevelReport {
    Level level = Level::Phase;
    std::size_t samples = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<ClassReport> classes;
};

/// Overall accuracy and macro F1, plus per-class mean and deviation across
/// groups. A group contributes to a class only if the class occurs in its
/// targets or predictions.
LevelReport evaluate_level(Level level, std::span<const LevelSample> samples,
                           const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());

std::string report_to_json(std::span<const LevelReport> levels, const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());
/// level,class,fpr,tpr rows for every class with a curve.
std::string roc_points_csv(std::span<const LevelReport> levels, const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());

}  // namespace esvforge
