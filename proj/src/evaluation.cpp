#include "gaborcomp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

namespace gaborcomp {

long ConfusionMatrix::total() const {
    long n = 0;
    for (const auto& row : counts)
        for (const long v : row) n += v;
    return n;
}

void ConfusionMatrix::add(int actual, int predicted) {
    if (actual < 0 || actual >= kNumClasses || predicted < 0 || predicted >= kNumClasses)
        throw InvalidLabel("confusion: class index outside [0, " +
                           std::to_string(kNumClasses) + ")");
    ++counts[static_cast<size_t>(actual)][static_cast<size_t>(predicted)];
}

ConfusionMatrix confusion(const std::vector<int>& actual,
                          const std::vector<int>& predicted) {
    if (actual.size() != predicted.size())
        throw DimError("confusion: " + std::to_string(actual.size()) + " labels vs " +
                       std::to_string(predicted.size()) + " predictions");
    if (actual.empty()) throw EmptyInput("confusion: no samples");
    ConfusionMatrix cm;
    for (size_t i = 0; i < actual.size(); ++i) cm.add(actual[i], predicted[i]);
    return cm;
}

PerClassMetrics per_class_metrics(const ConfusionMatrix& cm) {
    const long total = cm.total();
    PerClassMetrics out;
    for (int c = 0; c < kNumClasses; ++c) {
        const long tp = cm.counts[c][c];
        long fp = 0, fn = 0;
        for (int o = 0; o < kNumClasses; ++o) {
            if (o == c) continue;
            fp += cm.counts[o][c];
            fn += cm.counts[c][o];
        }
        const long tn = total - tp - fp - fn;
        if (tn + fp > 0)
            out.specificity[c] = static_cast<double>(tn) / static_cast<double>(tn + fp);
        if (2 * tp + fp + fn > 0)
            out.f1[c] = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
        if (total > 0)
            out.accuracy[c] = static_cast<double>(tp + tn) / static_cast<double>(total);
    }
    return out;
}

MetricsReport macro_metrics(const ConfusionMatrix& cm, std::optional<int> fold_id) {
    MetricsReport report;
    report.per_class = per_class_metrics(cm);
    report.fold_id = fold_id;
    const auto mean_of = [&report](const std::array<std::optional<double>, kNumClasses>& v) {
        double sum = 0.0;
        for (const auto& x : v) {
            if (x) sum += *x;
            else report.has_undefined = true;
        }
        return sum / kNumClasses;
    };
    report.macro_specificity = mean_of(report.per_class.specificity);
    report.macro_f1 = mean_of(report.per_class.f1);
    report.macro_accuracy = mean_of(report.per_class.accuracy);
    return report;
}

FoldPlan stratified_kfold(const std::vector<int>& labels, int k, uint64_t seed) {
    if (k < 2) throw InvalidK("stratified_kfold: k must be at least 2");
    if (labels.empty()) throw EmptyInput("stratified_kfold: no labels");
    if (static_cast<size_t>(k) > labels.size())
        throw InvalidK("stratified_kfold: k exceeds the sample count");

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignment.assign(labels.size(), -1);

    Rng rng(mix_seed(seed, 0xf01d5));
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0 || labels[i] >= kNumClasses)
                throw InvalidLabel("stratified_kfold: label " + std::to_string(labels[i]) +
                                   " outside [0, " + std::to_string(kNumClasses) + ")");
            if (labels[i] == c) idx.push_back(i);
        }
        if (idx.empty()) continue;
        if (idx.size() < static_cast<size_t>(k))
            std::cerr << "warning: class " << c << " has " << idx.size()
                      << " samples for " << k << " folds; some folds will miss it\n";
        for (size_t i = idx.size() - 1; i > 0; --i) {
            const size_t j = rng.next_below(i + 1);
            std::swap(idx[i], idx[j]);
        }
        for (size_t i = 0; i < idx.size(); ++i)
            plan.assignment[idx[i]] = static_cast<int>(i % static_cast<size_t>(k));
    }
    return plan;
}

FoldPlan stratified_group_kfold(const std::vector<int>& labels,
                                const std::vector<std::string>& groups, int k,
                                uint64_t seed) {
    if (labels.size() != groups.size())
        throw DimError("stratified_group_kfold: label and group counts differ");
    if (k < 2) throw InvalidK("stratified_group_kfold: k must be at least 2");
    if (labels.empty()) throw EmptyInput("stratified_group_kfold: no labels");

    // Groups keyed by first appearance; each carries its first label.
    std::vector<std::string> group_order;
    std::map<std::string, int> group_id;
    std::vector<int> group_label;
    std::vector<int> sample_group(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        auto it = group_id.find(groups[i]);
        if (it == group_id.end()) {
            it = group_id.emplace(groups[i], static_cast<int>(group_order.size())).first;
            group_order.push_back(groups[i]);
            group_label.push_back(labels[i]);
        }
        sample_group[i] = it->second;
    }
    if (group_order.size() < static_cast<size_t>(k))
        throw InvalidK("stratified_group_kfold: only " +
                       std::to_string(group_order.size()) + " groups for k=" +
                       std::to_string(k));

    FoldPlan groups_plan = stratified_kfold(group_label, k, seed);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignment.resize(labels.size());
    for (size_t i = 0; i < labels.size(); ++i)
        plan.assignment[i] = groups_plan.assignment[static_cast<size_t>(sample_group[i])];
    return plan;
}

CvResult cross_validate(const std::vector<FeatureStack>& dataset, int k,
                        const Trainer& trainer, uint64_t seed,
                        const FoldPlan* plan_override) {
    if (dataset.empty()) throw EmptyInput("cross_validate: empty dataset");
    std::vector<int> labels;
    labels.reserve(dataset.size());
    for (const FeatureStack& s : dataset) {
        if (!s.label)
            throw InvalidLabel("cross_validate: stack '" + s.segment_ref +
                               "' has no label");
        labels.push_back(static_cast<int>(*s.label));
    }

    FoldPlan plan;
    if (plan_override) {
        plan = *plan_override;
        if (plan.assignment.size() != dataset.size())
            throw DimError("cross_validate: fold plan does not cover the dataset");
    } else {
        plan = stratified_kfold(labels, k, seed);
    }

    CvResult result;
    for (int fold = 0; fold < plan.k; ++fold) {
        std::vector<const FeatureStack*> train_split;
        std::vector<size_t> test_idx;
        for (size_t i = 0; i < dataset.size(); ++i) {
            if (plan.assignment[i] == fold) test_idx.push_back(i);
            else train_split.push_back(&dataset[i]);
        }
        if (test_idx.empty() || train_split.empty())
            throw DegenerateDataset("cross_validate: fold " + std::to_string(fold) +
                                    " has an empty split");
        const Predictor predictor = trainer(train_split);
        std::vector<int> actual, predicted;
        actual.reserve(test_idx.size());
        predicted.reserve(test_idx.size());
        for (const size_t i : test_idx) {
            actual.push_back(labels[i]);
            predicted.push_back(predictor(dataset[i]));
        }
        const ConfusionMatrix cm = confusion(actual, predicted);
        result.fold_confusions.push_back(cm);
        result.folds.push_back(macro_metrics(cm, fold));
    }

    const auto summarize = [&](double MetricsReport::* field) {
        MetricSummary s;
        for (const MetricsReport& r : result.folds) s.mean += r.*field;
        s.mean /= static_cast<double>(result.folds.size());
        double var = 0.0;
        for (const MetricsReport& r : result.folds) {
            const double d = r.*field - s.mean;
            var += d * d;
        }
        s.stddev = std::sqrt(var / static_cast<double>(result.folds.size()));
        return s;
    };
    result.macro_specificity = summarize(&MetricsReport::macro_specificity);
    result.macro_f1 = summarize(&MetricsReport::macro_f1);
    result.macro_accuracy = summarize(&MetricsReport::macro_accuracy);
    return result;
}

CvResult cross_validate_transformer(const std::vector<FeatureStack>& dataset, int k,
                                    int heads, int d_head, const TrainConfig& cfg,
                                    uint64_t seed, const FoldPlan* plan_override) {
    if (dataset.empty()) throw EmptyInput("cross_validate: empty dataset");
    const ModelArch arch = ModelArch::make(dataset.front().m, heads, d_head);
    const Trainer trainer = [&arch, &cfg](const std::vector<const FeatureStack*>& split) {
        const Model model = train(split, {}, arch, cfg);
        return Predictor([model](const FeatureStack& s) { return predict(s, model).first; });
    };
    return cross_validate(dataset, k, trainer, seed, plan_override);
}

}  // namespace gaborcomp
