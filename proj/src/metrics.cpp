#include "esvforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include <json.hpp>

#include "esvforge/error.hpp"

namespace esvforge {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) {
        throw Error(ErrorCode::LengthMismatch,
                    "predictions (" + std::to_string(a) + ") and targets (" + std::to_string(b) + ") differ in length");
    }
}

template <typename T>
double match_fraction(std::span<const T> preds, std::span<const T> targets) {
    check_lengths(preds.size(), targets.size());
    if (preds.empty()) throw Error(ErrorCode::Empty, "accuracy of an empty sample");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == targets[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<ClassCounts> confusion_counts(std::span<const int> preds, std::span<const int> targets,
                                          std::size_t classes) {
    check_lengths(preds.size(), targets.size());
    std::vector<ClassCounts> counts(classes);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i];
        const int t = targets[i];
        if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= classes || static_cast<std::size_t>(t) >= classes) {
            throw Error(ErrorCode::OutOfRange, "label ordinal outside the class range");
        }
        for (std::size_t c = 0; c < classes; ++c) {
            const bool is_p = static_cast<std::size_t>(p) == c;
            const bool is_t = static_cast<std::size_t>(t) == c;
            if (is_p && is_t) ++counts[c].tp;
            else if (is_p) ++counts[c].fp;
            else if (is_t) ++counts[c].fn;
            else ++counts[c].tn;
        }
    }
    return counts;
}

double accuracy(std::span<const int> preds, std::span<const int> targets) { return match_fraction(preds, targets); }

double accuracy(std::span<const std::string> preds, std::span<const std::string> targets) {
    return match_fraction(preds, targets);
}

F1Report f1_scores(std::span<const int> preds, std::span<const int> targets, std::size_t classes) {
    const auto counts = confusion_counts(preds, targets, classes);
    F1Report r;
    double sum = 0.0;
    std::size_t present = 0;
    for (const auto& c : counts) {
        const double p = ratio(c.tp, c.tp + c.fp);
        const double rc = ratio(c.tp, c.tp + c.fn);
        // Harmonic mean of p and rc, taken from integer counts so it is exact to one rounding.
        const double f = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
        r.precision.push_back(p);
        r.recall.push_back(rc);
        r.f1.push_back(f);
        const bool in_targets = c.tp + c.fn > 0;
        r.present.push_back(in_targets);
        if (in_targets) {
            sum += f;
            ++present;
        }
    }
    r.macro = present == 0 ? 0.0 : sum / static_cast<double>(present);
    return r;
}

double one_vs_rest_accuracy(const ClassCounts& c) {
    if (c.total() == 0) throw Error(ErrorCode::Empty, "no samples");
    return ratio(c.tp + c.tn, c.total());
}

RocSeries roc_auc(std::span<const double> scores, const std::vector<bool>& positives) {
    check_lengths(scores.size(), positives.size());
    const auto pos = static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
    const auto neg = positives.size() - pos;
    if (pos == 0 || neg == 0) {
        throw Error(ErrorCode::DegenerateClasses, "ROC needs at least one positive and one negative sample");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocSeries roc;
    roc.points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            if (positives[order[i]]) ++tp;
            else ++fp;
            ++i;
        }
        const RocPoint next{ratio(fp, neg), ratio(tp, pos)};
        roc.auc += (next.fpr - roc.points.back().fpr) * (next.tpr + roc.points.back().tpr) / 2.0;
        roc.points.push_back(next);
    }
    return roc;
}

Summary per_class_summary(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::Empty, "summary of no values");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

LevelReport evaluate_level(Level level, std::span<const LevelSample> samples, const TaxonomyRegistry& reg) {
    if (samples.empty()) throw Error(ErrorCode::Empty, "no samples to evaluate");
    const auto classes = reg.size(level);

    LevelReport report;
    report.level = level;
    report.samples = samples.size();

    std::vector<int> preds, targets;
    std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> groups;
    bool scored = true;
    for (const auto& s : samples) {
        preds.push_back(s.predicted);
        targets.push_back(s.target);
        auto& g = groups[s.group];
        g.first.push_back(s.predicted);
        g.second.push_back(s.target);
        if (s.scores.size() != classes) scored = false;
    }
    report.accuracy = accuracy(preds, targets);
    const auto overall = f1_scores(preds, targets, classes);
    report.macro_f1 = overall.macro;

    std::vector<std::vector<ClassCounts>> group_counts;
    for (const auto& [id, g] : groups) group_counts.push_back(confusion_counts(g.first, g.second, classes));
    const auto all_counts = confusion_counts(preds, targets, classes);

    for (std::size_t c = 0; c < classes; ++c) {
        ClassReport cr;
        cr.name = reg.name(level, static_cast<int>(c));
        cr.support = all_counts[c].tp + all_counts[c].fn;
        std::vector<double> accs, f1s;
        for (const auto& gc : group_counts) {
            const auto& k = gc[c];
            if (k.tp + k.fp + k.fn == 0) continue;
            accs.push_back(one_vs_rest_accuracy(k));
            const double p = ratio(k.tp, k.tp + k.fp);
            const double r = ratio(k.tp, k.tp + k.fn);
            f1s.push_back((p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0);
        }
        cr.groups = accs.size();
        if (!accs.empty()) {
            cr.accuracy = per_class_summary(accs);
            cr.f1 = per_class_summary(f1s);
        }
        if (scored && cr.support > 0 && cr.support < samples.size()) {
            std::vector<double> s;
            std::vector<bool> positive;
            for (const auto& smp : samples) {
                s.push_back(smp.scores[c]);
                positive.push_back(smp.target == static_cast<int>(c));
            }
            cr.roc = roc_auc(s, positive);
        }
        report.classes.push_back(std::move(cr));
    }
    return report;
}

std::string report_to_json(std::span<const LevelReport> levels, const TaxonomyRegistry&) {
    nlohmann::ordered_json doc;
    doc["schema"] = "esv-forge.evaluation";
    doc["version"] = 1;
    doc["conventions"] = {{"f1_macro", "unweighted mean over classes present in targets"},
                          {"class_accuracy", "one-vs-rest binary accuracy"},
                          {"deviation", "population standard deviation across surgeries"},
                          {"zero_division", 0}};
    auto& out = doc["levels"];
    out = nlohmann::ordered_json::array();
    for (const auto& lr : levels) {
        nlohmann::ordered_json l;
        l["level"] = std::string(to_string(lr.level));
        l["samples"] = lr.samples;
        l["accuracy"] = lr.accuracy;
        l["macro_f1"] = lr.macro_f1;
        auto& rows = l["classes"];
        rows = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < lr.classes.size(); ++i) {
            const auto& c = lr.classes[i];
            char label[128];
            std::snprintf(label, sizeof label, "[%02zu] %s", i + 1, c.name.c_str());
            nlohmann::ordered_json row;
            row["name"] = label;
            row["support"] = c.support;
            row["surgeries"] = c.groups;
            row["accuracy_mean"] = c.accuracy.mean;
            row["accuracy_dev"] = c.accuracy.deviation;
            row["f1_mean"] = c.f1.mean;
            row["f1_dev"] = c.f1.deviation;
            if (c.roc) row["auc"] = c.roc->auc;
            else row["auc"] = nullptr;
            rows.push_back(std::move(row));
        }
        out.push_back(std::move(l));
    }
    return doc.dump(2) + "\n";
}

std::string roc_points_csv(std::span<const LevelReport> levels, const TaxonomyRegistry&) {
    std::string out = "level,class,fpr,tpr\n";
    char buf[64];
    for (const auto& lr : levels) {
        for (const auto& c : lr.classes) {
            if (!c.roc) continue;
            for (const auto& p : c.roc->points) {
                std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", p.fpr, p.tpr);
                out += std::string(to_string(lr.level)) + ',' + slugify(c.name) + buf;
            }
        }
    }
    return out;
}

}  // namespace esvforge
