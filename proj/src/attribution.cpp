#include "fast/attribution.hpp"

#include <cmath>
#include <fstream>

namespace fast::attrib {

AttributionMap integrated_gradients(const GradFn& f, const TensorD& x, const TensorD& baseline,
                                    int steps) {
    if (!x.same_shape(baseline))
        throw ShapeError("integrated_gradients: baseline shape " + shape_str(baseline.shape) +
                         " != input shape " + shape_str(x.shape));
    if (steps < 1) throw ConfigError("integrated_gradients: steps must be >= 1");

    TensorD grad_acc = TensorD::zeros(x.shape);
    TensorD point = x;
    TensorD grad_point = TensorD::zeros(x.shape);
    double f_input = 0.0, f_baseline = 0.0;
    for (int k = 0; k <= steps; ++k) {
        const double alpha = static_cast<double>(k) / steps;
        for (std::int64_t i = 0; i < x.size(); ++i)
            point.v[i] = baseline.v[i] + alpha * (x.v[i] - baseline.v[i]);
        std::fill(grad_point.v.begin(), grad_point.v.end(), 0.0);
        const double fv = f(point, grad_point);
        if (k == 0) f_baseline = fv;
        if (k == steps) f_input = fv;
        const double w = (k == 0 || k == steps) ? 0.5 : 1.0;  // trapezoidal weights
        for (std::int64_t i = 0; i < x.size(); ++i) grad_acc.v[i] += w * grad_point.v[i];
    }

    AttributionMap map;
    map.values = TensorD::zeros(x.shape);
    double total = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        map.values.v[i] = (x.v[i] - baseline.v[i]) * grad_acc.v[i] / steps;
        total += map.values.v[i];
    }
    map.steps = steps;
    map.f_input = f_input;
    map.f_baseline = f_baseline;
    map.completeness_gap = std::abs(total - (f_input - f_baseline));
    return map;
}

namespace {

// Eval-mode forward with the raw trial as a differentiable tape leaf:
// segmentation and partitioning become slice/gather ops.
int forward_from_input(model::Session<double>& s, int input, const pre::EEGTrial& meta,
                       const montage::RegionPartition& partition,
                       const montage::ChannelLayout& layout, const pre::SegmentPlan& plan) {
    using namespace fast::num;
    const int S = plan.count(meta.samples(), meta.sample_rate);
    const int w = plan.window_samples(meta.sample_rate);
    const int stride = plan.stride_samples(meta.sample_rate);
    if (layout.channel_count() != s.tape.val(input).extent(0))
        throw ShapeError("forward_from_input: channel count mismatch");

    std::vector<int> seg_rows;
    seg_rows.reserve(static_cast<size_t>(S));
    for (int k = 0; k < S; ++k) {
        const int window = slice_cols(s.tape, input, k * stride, w);
        std::vector<int> blocks;
        blocks.reserve(partition.region_channels.size());
        for (const auto& chans : partition.region_channels)
            blocks.push_back(gather_rows(s.tape, window, chans));
        int grid = model::st_forward(s, blocks);
        grid = model::spatial_projection(s, grid);
        seg_rows.push_back(reshape(s.tape, grid, {1, s.cfg.model_dim()}));
    }
    return model::temporal_forward(s, concat_rows(s.tape, seg_rows));
}

}  // namespace

AttributionMap integrated_gradients_model(model::ParamStore& store, const model::FastConfig& cfg,
                                          const pre::EEGTrial& x, const pre::EEGTrial& baseline,
                                          const std::vector<double>& target_weights, int steps,
                                          const montage::RegionPartition& partition,
                                          const montage::ChannelLayout& layout,
                                          const pre::SegmentPlan& plan) {
    if (static_cast<int>(target_weights.size()) != cfg.n_classes)
        throw ConfigError("integrated_gradients: target weights must have n_classes entries");
    auto store_d = store.cast<double>();
    GradFn f = [&](const TensorD& point, TensorD& grad_out) {
        num::Tape<double> tape;
        model::Session<double> s{tape, store_d, cfg};
        const int input = tape.leaf(point);
        const int logits = forward_from_input(s, input, x, partition, layout, plan);
        const int target = num::dot_const(tape, logits, target_weights);
        tape.backward(target);
        if (tape.has_grad(input)) {
            const TensorD& g = tape.grad(input);
            for (std::int64_t i = 0; i < g.size(); ++i) grad_out.v[i] += g.v[i];
        }
        return tape.val(target).v[0];
    };
    AttributionMap map = integrated_gradients(f, x.data.cast<double>(), baseline.data.cast<double>(),
                                              steps);
    map.target_weights = target_weights;
    map.sample_rate = x.sample_rate;
    map.cue_onset = x.cue_onset;
    return map;
}

AttributionMap integrated_gradients_class(model::ParamStore& store, const model::FastConfig& cfg,
                                          const pre::EEGTrial& x, int target_class, int steps,
                                          const montage::RegionPartition& partition,
                                          const montage::ChannelLayout& layout,
                                          const pre::SegmentPlan& plan) {
    if (target_class < 0 || target_class >= cfg.n_classes)
        throw ConfigError("integrated_gradients: target class out of range");
    std::vector<double> w(static_cast<size_t>(cfg.n_classes), 0.0);
    w[static_cast<size_t>(target_class)] = 1.0;
    pre::EEGTrial zero = x;
    std::fill(zero.data.v.begin(), zero.data.v.end(), 0.0f);
    AttributionMap map = integrated_gradients_model(store, cfg, x, zero, w, steps, partition,
                                                    layout, plan);
    map.baseline_id = "zero";
    return map;
}

ActivationTimeline activation_timeline(model::ParamStore& store, const model::FastConfig& cfg,
                                       const pre::EEGTrial& trial,
                                       const montage::RegionPartition& partition,
                                       const montage::ChannelLayout& layout, double window_s,
                                       double step_s) {
    pre::SegmentPlan plan{window_s, step_s};
    const int W = plan.count(trial.samples(), trial.sample_rate);
    const int w = plan.window_samples(trial.sample_rate);
    const int stride = plan.stride_samples(trial.sample_rate);

    ActivationTimeline tl;
    tl.windows = W;
    tl.regions = cfg.n_regions;
    tl.features = cfg.token_width;
    tl.window_s = window_s;
    tl.step_s = step_s;
    tl.start_s = 0.0;
    tl.region_names = partition.region_names;
    tl.values.resize(static_cast<size_t>(W) * cfg.n_regions * cfg.token_width);

    for (int k = 0; k < W; ++k) {
        TensorF seg({trial.channels(), w});
        for (int c = 0; c < trial.channels(); ++c)
            for (int t = 0; t < w; ++t) seg.at(c, t) = trial.data.at(c, k * stride + t);
        num::Tape<float> tape;
        model::Session<float> s{tape, store, cfg};
        const auto blocks = montage::apply_partition(partition, layout, seg);
        std::vector<int> ids;
        ids.reserve(blocks.size());
        for (const auto& b : blocks) ids.push_back(tape.leaf(b.data));
        const int grid = model::st_forward(s, ids);  // [M x F]
        const TensorF& g = tape.val(grid);
        for (int r = 0; r < cfg.n_regions; ++r)
            for (int f = 0; f < cfg.token_width; ++f) tl.at(k, r, f) = g.at(r, f);
    }
    return tl;
}

namespace {

void zscore_time_axis(ActivationTimeline& t, double eps = 1e-12) {
    for (int r = 0; r < t.regions; ++r)
        for (int f = 0; f < t.features; ++f) {
            double mu = 0.0;
            for (int w = 0; w < t.windows; ++w) mu += t.at(w, r, f);
            mu /= t.windows;
            double var = 0.0;
            for (int w = 0; w < t.windows; ++w) {
                const double d = t.at(w, r, f) - mu;
                var += d * d;
            }
            var /= t.windows;
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int w = 0; w < t.windows; ++w)
                t.at(w, r, f) = static_cast<float>((t.at(w, r, f) - mu) * inv);
        }
    t.zscored = true;
}

}  // namespace

ClassMaps normalize_and_average(const std::vector<ActivationTimeline>& timelines,
                                const std::vector<int>& labels, int n_classes) {
    if (timelines.size() != labels.size())
        throw ConfigError("normalize_and_average: timeline/label count mismatch");
    if (timelines.empty()) throw ConfigError("normalize_and_average: no timelines");
    std::vector<int> counts(static_cast<size_t>(n_classes), 0);
    for (int l : labels) {
        if (l < 0 || l >= n_classes) throw ConfigError("normalize_and_average: label out of range");
        counts[static_cast<size_t>(l)] += 1;
    }
    for (int c = 0; c < n_classes; ++c)
        if (counts[static_cast<size_t>(c)] == 0)
            throw ConfigError("normalize_and_average: class " + std::to_string(c) +
                              " has no trials");

    ClassMaps out;
    out.per_class.assign(static_cast<size_t>(n_classes), timelines[0]);
    for (int c = 0; c < n_classes; ++c) {
        auto& acc = out.per_class[static_cast<size_t>(c)];
        std::fill(acc.values.begin(), acc.values.end(), 0.0f);
        for (size_t i = 0; i < timelines.size(); ++i) {
            if (labels[i] != c) continue;
            if (timelines[i].values.size() != acc.values.size())
                throw ShapeError("normalize_and_average: timeline shapes differ");
            for (size_t k = 0; k < acc.values.size(); ++k) acc.values[k] += timelines[i].values[k];
        }
        for (auto& v : acc.values) v /= static_cast<float>(counts[static_cast<size_t>(c)]);
        zscore_time_axis(acc);
    }

    out.contrasts.assign(static_cast<size_t>(n_classes), out.per_class[0]);
    for (int c = 0; c < n_classes; ++c) {
        auto& con = out.contrasts[static_cast<size_t>(c)];
        con = out.per_class[static_cast<size_t>(c)];
        for (size_t k = 0; k < con.values.size(); ++k) {
            double rest = 0.0;
            for (int o = 0; o < n_classes; ++o)
                if (o != c) rest += out.per_class[static_cast<size_t>(o)].values[k];
            con.values[k] -= static_cast<float>(rest / (n_classes - 1));
        }
    }
    return out;
}

ChannelSaliency channel_saliency(const std::vector<AttributionMap>& maps,
                                 const montage::ChannelLayout& layout, double utterance_s,
                                 int utterances) {
    if (maps.empty()) throw ConfigError("channel_saliency: no attribution maps");
    const int C = layout.channel_count();
    ChannelSaliency out;
    out.labels = layout.labels;
    out.utterances = utterances;
    out.per_channel.assign(static_cast<size_t>(C), 0.0);
    out.per_utterance.assign(static_cast<size_t>(utterances),
                             std::vector<double>(static_cast<size_t>(C), 0.0));
    std::vector<std::vector<std::int64_t>> utt_counts(
        static_cast<size_t>(utterances), std::vector<std::int64_t>(static_cast<size_t>(C), 0));
    std::vector<std::int64_t> counts(static_cast<size_t>(C), 0);

    for (const auto& map : maps) {
        if (map.values.extent(0) != C)
            throw ShapeError("channel_saliency: map channels do not match the layout");
        const std::int64_t n = map.values.extent(1);
        const std::int64_t span =
            static_cast<std::int64_t>(std::lround(utterance_s * map.sample_rate));
        for (int c = 0; c < C; ++c) {
            for (std::int64_t t = 0; t < n; ++t) {
                const double a = std::abs(map.values.at(c, static_cast<int>(t)));
                out.per_channel[static_cast<size_t>(c)] += a;
                counts[static_cast<size_t>(c)] += 1;
                const std::int64_t rel = t - map.cue_onset;
                if (rel >= 0 && span > 0) {
                    const std::int64_t u = rel / span;
                    if (u < utterances) {
                        out.per_utterance[static_cast<size_t>(u)][static_cast<size_t>(c)] += a;
                        utt_counts[static_cast<size_t>(u)][static_cast<size_t>(c)] += 1;
                    }
                }
            }
        }
    }
    for (int c = 0; c < C; ++c) {
        out.per_channel[static_cast<size_t>(c)] /= static_cast<double>(counts[static_cast<size_t>(c)]);
        for (int u = 0; u < utterances; ++u) {
            const std::int64_t k = utt_counts[static_cast<size_t>(u)][static_cast<size_t>(c)];
            if (k > 0) out.per_utterance[static_cast<size_t>(u)][static_cast<size_t>(c)] /= k;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

void write_timeline_csv(const std::string& path, const ActivationTimeline& t) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "window_time,region,feature,value\n";
    for (int w = 0; w < t.windows; ++w) {
        const double time = t.start_s + w * t.step_s;
        for (int r = 0; r < t.regions; ++r)
            for (int f = 0; f < t.features; ++f)
                out << time << ',' << t.region_names[static_cast<size_t>(r)] << ',' << f << ','
                    << t.at(w, r, f) << '\n';
    }
}

void write_contrast_csv(const std::string& path, const ActivationTimeline& contrast) {
    write_timeline_csv(path, contrast);
}

void write_saliency_csv(const std::string& path, const ChannelSaliency& s) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "label,value,utterance_index\n";
    for (size_t c = 0; c < s.labels.size(); ++c)
        out << s.labels[c] << ',' << s.per_channel[c] << ",\n";
    for (int u = 0; u < s.utterances; ++u)
        for (size_t c = 0; c < s.labels.size(); ++c)
            out << s.labels[c] << ',' << s.per_utterance[static_cast<size_t>(u)][c] << ',' << (u + 1)
                << '\n';
}

}  // namespace fast::attrib
