#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "gaborcomp/classifier.hpp"

namespace gaborcomp {

// counts[actual][predicted] over the four classes.
struct ConfusionMatrix {
    std::array<std::array<long, kNumClasses>, kNumClasses> counts{};

    long total() const;
    void add(int actual, int predicted);
};

ConfusionMatrix confusion(const std::vector<int>& actual,
                          const std::vector<int>& predicted);

// One-vs-rest metrics per class. A metric whose denominator is zero is
// left empty (not defined) rather than forced to a number.
struct PerClassMetrics {
    std::array<std::optional<double>, kNumClasses> specificity;
    std::array<std::optional<double>, kNumClasses> f1;
    std::array<std::optional<double>, kNumClasses> accuracy;
};

PerClassMetrics per_class_metrics(const ConfusionMatrix& cm);

// Macro averages over classes; undefined per-class values contribute
// zero and set has_undefined.
struct MetricsReport {
    PerClassMetrics per_class;
    double macro_specificity = 0.0;
    double macro_f1 = 0.0;
    double macro_accuracy = 0.0;
    bool has_undefined = false;
    std::optional<int> fold_id;
};

MetricsReport macro_metrics(const ConfusionMatrix& cm,
                            std::optional<int> fold_id = std::nullopt);

// Stratified fold assignment: indices of each class are shuffled with
// the seed and dealt round-robin over the k folds, so per-class counts
// differ by at most one between folds.
struct FoldPlan {
    int k = 0;
    uint64_t seed = 0;
    std::vector<int> assignment;  // fold id per sample
};

FoldPlan stratified_kfold(const std::vector<int>& labels, int k, uint64_t seed);

// Group-aware variant: all samples sharing a group id land in the same
// fold; groups are stratified by their first sample's label.
FoldPlan stratified_group_kfold(const std::vector<int>& labels,
                                const std::vector<std::string>& groups, int k,
                                uint64_t seed);

// A trainer maps a training subset to a predictor. The seam lets tests
// drive cross-validation with oracle or stub classifiers.
using Predictor = std::function<int(const FeatureStack&)>;
using Trainer = std::function<Predictor(const std::vector<const FeatureStack*>&)>;

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // population std over folds
};

struct CvResult {
    std::vector<MetricsReport> folds;
    std::vector<ConfusionMatrix> fold_confusions;
    MetricSummary macro_specificity;
    MetricSummary macro_f1;
    MetricSummary macro_accuracy;
};

CvResult cross_validate(const std::vector<FeatureStack>& dataset, int k,
                        const Trainer& trainer, uint64_t seed,
                        const FoldPlan* plan_override = nullptr);

// Convenience wrapper training the transformer on every fold.
CvResult cross_validate_transformer(const std::vector<FeatureStack>& dataset, int k,
                                    int heads, int d_head, const TrainConfig& cfg,
                                    uint64_t seed,
                                    const FoldPlan* plan_override = nullptr);

}  // namespace gaborcomp
