#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fast/tensor.hpp"

namespace fast::metrics {

struct ConfusionMatrix {
    int classes = 0;
    std::vector<std::int64_t> counts;  // rows = true class, columns = predicted

    std::int64_t& at(int t, int p) { return counts[static_cast<size_t>(t) * classes + p]; }
    std::int64_t at(int t, int p) const { return counts[static_cast<size_t>(t) * classes + p]; }
    std::int64_t total() const;
};

struct MetricsReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double kappa = 0.0;
    double auc_ovr = 0.0;
    int auc_skipped_classes = 0;
    std::int64_t n = 0;
    int classes = 0;
};

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                          int classes);

double accuracy(const ConfusionMatrix& m);
double macro_precision(const ConfusionMatrix& m);
double macro_recall(const ConfusionMatrix& m);
// Mean over classes of 2PR/(P+R); undefined class terms contribute 0.
double macro_f1(const ConfusionMatrix& m);
// kappa = (p_o - p_e) / (1 - p_e); errors when p_e == 1.
double cohen_kappa(const ConfusionMatrix& m);

// Unweighted mean over classes of the rank-based binary ROC AUC (ties get
// half credit). Classes absent from the truth (or without negatives) are
// skipped; the skip count is reported.
struct AucResult {
    double value = 0.0;
    int skipped_classes = 0;
};
AucResult auc_ovr(const std::vector<int>& truth, const std::vector<std::vector<double>>& scores,
                  int classes);

// Normal-approximation band around random-guess accuracy: p +- z*sqrt(p(1-p)/n).
std::pair<double, double> chance_interval(double p, std::int64_t n, double z);

// Two-sided Wilcoxon signed-rank test on paired differences. Zero differences
// are dropped; statistic is the positive-rank sum T+. Exact enumeration for
// n <= exact_threshold, otherwise normal approximation with tie correction.
struct WilcoxonResult {
    double statistic = 0.0;  // T+
    double p_value = 1.0;
    int n_used = 0;
    bool exact = false;
};
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences, int exact_threshold = 15);

MetricsReport compute_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                             const std::vector<std::vector<double>>& scores, int classes);

}  // namespace fast::metrics
