#include "fast/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace fast::metrics {

std::int64_t ConfusionMatrix::total() const {
    std::int64_t n = 0;
    for (std::int64_t c : counts) n += c;
    return n;
}

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                          int classes) {
    if (truth.size() != predicted.size())
        throw ConfigError("confusion: label vectors differ in length");
    if (classes < 1) throw ConfigError("confusion: need at least one class");
    ConfusionMatrix m;
    m.classes = classes;
    m.counts.assign(static_cast<size_t>(classes) * classes, 0);
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes)
            throw ConfigError("confusion: label out of range at sample " + std::to_string(i));
        m.at(truth[i], predicted[i]) += 1;
    }
    return m;
}

double accuracy(const ConfusionMatrix& m) {
    const std::int64_t n = m.total();
    if (n == 0) throw ConfigError("accuracy: empty confusion matrix");
    std::int64_t diag = 0;
    for (int c = 0; c < m.classes; ++c) diag += m.at(c, c);
    return static_cast<double>(diag) / static_cast<double>(n);
}

namespace {

// per-class precision/recall with the zero-division-means-zero convention
void per_class_pr(const ConfusionMatrix& m, std::vector<double>& prec, std::vector<double>& rec) {
    prec.assign(static_cast<size_t>(m.classes), 0.0);
    rec.assign(static_cast<size_t>(m.classes), 0.0);
    for (int c = 0; c < m.classes; ++c) {
        std::int64_t tp = m.at(c, c), pred = 0, support = 0;
        for (int t = 0; t < m.classes; ++t) {
            pred += m.at(t, c);
            support += m.at(c, t);
        }
        prec[static_cast<size_t>(c)] = pred > 0 ? static_cast<double>(tp) / pred : 0.0;
        rec[static_cast<size_t>(c)] = support > 0 ? static_cast<double>(tp) / support : 0.0;
    }
}

}  // namespace

double macro_precision(const ConfusionMatrix& m) {
    std::vector<double> p, r;
    per_class_pr(m, p, r);
    double acc = 0.0;
    for (double v : p) acc += v;
    return acc / m.classes;
}

double macro_recall(const ConfusionMatrix& m) {
    std::vector<double> p, r;
    per_class_pr(m, p, r);
    double acc = 0.0;
    for (double v : r) acc += v;
    return acc / m.classes;
}

double macro_f1(const ConfusionMatrix& m) {
    if (m.classes < 2) throw ConfigError("macro_f1: need at least 2 classes");
    std::vector<double> p, r;
    per_class_pr(m, p, r);
    double acc = 0.0;
    for (int c = 0; c < m.classes; ++c) {
        const double pc = p[static_cast<size_t>(c)], rc = r[static_cast<size_t>(c)];
        acc += (pc + rc > 0.0) ? 2.0 * pc * rc / (pc + rc) : 0.0;
    }
    return acc / m.classes;
}

double cohen_kappa(const ConfusionMatrix& m) {
    const std::int64_t n = m.total();
    if (n < 1) throw ConfigError("cohen_kappa: empty confusion matrix");
    double po = 0.0, pe = 0.0;
    for (int c = 0; c < m.classes; ++c) po += static_cast<double>(m.at(c, c));
    po /= static_cast<double>(n);
    for (int c = 0; c < m.classes; ++c) {
        std::int64_t nk = 0, mk = 0;
        for (int t = 0; t < m.classes; ++t) {
            nk += m.at(c, t);
            mk += m.at(t, c);
        }
        pe += (static_cast<double>(nk) / n) * (static_cast<double>(mk) / n);
    }
    if (pe >= 1.0) throw NumericError("cohen_kappa: expected agreement is 1 (degenerate single-class case)");
    return (po - pe) / (1.0 - pe);
}

AucResult auc_ovr(const std::vector<int>& truth, const std::vector<std::vector<double>>& scores,
                  int classes) {
    if (truth.size() != scores.size()) throw ConfigError("auc_ovr: length mismatch");
    const size_t n = truth.size();
    for (const auto& row : scores) {
        if (static_cast<int>(row.size()) != classes) throw ConfigError("auc_ovr: score row size");
        for (double v : row)
            if (!std::isfinite(v)) throw NumericError("auc_ovr: non-finite score");
    }
    AucResult out;
    double acc = 0.0;
    int used = 0;
    for (int c = 0; c < classes; ++c) {
        std::int64_t n_pos = 0;
        for (size_t i = 0; i < n; ++i) n_pos += (truth[i] == c) ? 1 : 0;
        const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
        if (n_pos == 0 || n_neg == 0) {
            out.skipped_classes += 1;
            continue;
        }
        // rank-based Mann-Whitney with average ranks for ties
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            return scores[a][static_cast<size_t>(c)] < scores[b][static_cast<size_t>(c)];
        });
        double rank_sum_pos = 0.0;
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && scores[idx[j + 1]][static_cast<size_t>(c)] ==
                                    scores[idx[i]][static_cast<size_t>(c)])
                ++j;
            const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (size_t q = i; q <= j; ++q)
                if (truth[idx[q]] == c) rank_sum_pos += avg_rank;
            i = j + 1;
        }
        const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
        acc += u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
        used += 1;
    }
    if (used == 0) throw ConfigError("auc_ovr: no class has both positives and negatives");
    out.value = acc / used;
    return out;
}

std::pair<double, double> chance_interval(double p, std::int64_t n, double z) {
    if (!(p > 0.0) || !(p < 1.0)) throw ConfigError("chance_interval: p must be in (0,1)");
    if (n < 1) throw ConfigError("chance_interval: n must be >= 1");
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    return {p - z * sigma, p + z * sigma};
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences, int exact_threshold) {
    std::vector<double> mags;
    std::vector<int> signs;
    for (double d : differences) {
        if (!std::isfinite(d)) throw NumericError("wilcoxon: non-finite difference");
        if (d == 0.0) continue;
        mags.push_back(std::abs(d));
        signs.push_back(d > 0.0 ? 1 : -1);
    }
    const size_t n = mags.size();
    if (n == 0) throw ConfigError("wilcoxon: all differences are zero");

    // average ranks of |d| with ties
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return mags[a] < mags[b]; });
    std::vector<double> rank(n);
    std::vector<std::int64_t> tie_sizes;
    {
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && mags[idx[j + 1]] == mags[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (size_t q = i; q <= j; ++q) rank[idx[q]] = avg;
            tie_sizes.push_back(static_cast<std::int64_t>(j - i + 1));
            i = j + 1;
        }
    }

    double t_plus = 0.0;
    for (size_t i = 0; i < n; ++i)
        if (signs[i] > 0) t_plus += rank[i];

    WilcoxonResult res;
    res.statistic = t_plus;
    res.n_used = static_cast<int>(n);
    if (static_cast<int>(n) <= exact_threshold) {
        res.exact = true;
        std::int64_t ge = 0, le = 0;
        const std::int64_t total = std::int64_t(1) << n;
        for (std::int64_t mask = 0; mask < total; ++mask) {
            double t = 0.0;
            for (size_t b = 0; b < n; ++b)
                if (mask & (std::int64_t(1) << b)) t += rank[b];
            if (t >= t_plus - 1e-12) ge += 1;
            if (t <= t_plus + 1e-12) le += 1;
        }
        res.p_value = std::min(
            1.0, 2.0 * std::min(static_cast<double>(ge), static_cast<double>(le)) /
                     static_cast<double>(total));
    } else {
        const double nd = static_cast<double>(n);
        const double mean = nd * (nd + 1.0) / 4.0;
        double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0;
        for (std::int64_t t : tie_sizes) {
            const double td = static_cast<double>(t);
            var -= (td * td * td - td) / 48.0;
        }
        if (var <= 0.0) throw NumericError("wilcoxon: degenerate variance under ties");
        const double z = (t_plus - mean) / std::sqrt(var);
        res.p_value = std::min(1.0, 2.0 * 0.5 * std::erfc(std::abs(z) / std::sqrt(2.0)));
    }
    return res;
}

MetricsReport compute_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                             const std::vector<std::vector<double>>& scores, int classes) {
    ConfusionMatrix m = confusion(truth, predicted, classes);
    MetricsReport r;
    r.n = m.total();
    r.classes = classes;
    r.accuracy = accuracy(m);
    r.macro_precision = macro_precision(m);
    r.macro_recall = macro_recall(m);
    r.macro_f1 = macro_f1(m);
    r.kappa = cohen_kappa(m);
    AucResult a = auc_ovr(truth, scores, classes);
    r.auc_ovr = a.value;
    r.auc_skipped_classes = a.skipped_classes;
    return r;
}

}  // namespace fast::metrics
