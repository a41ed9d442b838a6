#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fast/model.hpp"

namespace fast::attrib {

struct AttributionMap {
    TensorD values;  // channels x samples
    std::vector<double> target_weights;  // weights over logits defining the scalar target
    std::string baseline_id;
    int steps = 0;
    double f_input = 0.0;
    double f_baseline = 0.0;
    double completeness_gap = 0.0;  // |sum(IG) - (F(x) - F(x'))|, absolute
    double sample_rate = 200.0;
    std::int64_t cue_onset = 0;

    double relative_gap() const {
        const double denom = std::abs(f_input - f_baseline);
        return denom > 0.0 ? completeness_gap / denom : completeness_gap;
    }
};

// Scalar model functional: returns F(x) and accumulates dF/dx into grad_out
// (grad_out arrives zeroed, same shape as x).
using GradFn = std::function<double(const TensorD& x, TensorD& grad_out)>;

// Trapezoidal Riemann approximation of the straight-line path integral,
// scaled by (x - baseline).
AttributionMap integrated_gradients(const GradFn& f, const TensorD& x, const TensorD& baseline,
                                    int steps);

// F = sum_c target_weights[c] * logit_c of the eval-mode model, differentiated
// with respect to the raw input trial.
AttributionMap integrated_gradients_model(model::ParamStore& store, const model::FastConfig& cfg,
                                          const pre::EEGTrial& x, const pre::EEGTrial& baseline,
                                          const std::vector<double>& target_weights, int steps,
                                          const montage::RegionPartition& partition,
                                          const montage::ChannelLayout& layout,
                                          const pre::SegmentPlan& plan);

// Convenience: target = pre-softmax logit of one class; baseline = zero trial.
AttributionMap integrated_gradients_class(model::ParamStore& store, const model::FastConfig& cfg,
                                          const pre::EEGTrial& x, int target_class, int steps,
                                          const montage::RegionPartition& partition,
                                          const montage::ChannelLayout& layout,
                                          const pre::SegmentPlan& plan);

struct ActivationTimeline {
    int windows = 0;
    int regions = 0;
    int features = 0;
    double window_s = 1.0;
    double step_s = 0.02;
    double start_s = 0.0;  // of window 0, relative to trial start
    std::vector<std::string> region_names;
    std::vector<float> values;  // windows x regions x features
    bool zscored = false;

    float at(int w, int r, int f) const {
        return values[(static_cast<size_t>(w) * regions + r) * features + f];
    }
    float& at(int w, int r, int f) {
        return values[(static_cast<size_t>(w) * regions + r) * features + f];
    }
};

// Dense sliding-window ST activations (eval mode), step defaulting to 20 ms.
ActivationTimeline activation_timeline(model::ParamStore& store, const model::FastConfig& cfg,
                                       const pre::EEGTrial& trial,
                                       const montage::RegionPartition& partition,
                                       const montage::ChannelLayout& layout, double window_s,
                                       double step_s = 0.02);

struct ClassMaps {
    std::vector<ActivationTimeline> per_class;  // z-scored class averages
    std::vector<ActivationTimeline> contrasts;  // one-vs-all differences
};

// Average timelines per class, z-score along the window axis, and form
// one-vs-all contrasts. Every class in 0..n_classes-1 must be present.
ClassMaps normalize_and_average(const std::vector<ActivationTimeline>& timelines,
                                const std::vector<int>& labels, int n_classes);

struct ChannelSaliency {
    std::vector<std::string> labels;
    std::vector<double> per_channel;                        // mean |IG| over time and trials
    std::vector<std::vector<double>> per_utterance;         // [utterance][channel]
    int utterances = 5;
};

// Mean absolute attribution per channel, plus the per-utterance variant over
// the five 2 s spans following the cue.
ChannelSaliency channel_saliency(const std::vector<AttributionMap>& maps,
                                 const montage::ChannelLayout& layout, double utterance_s = 2.0,
                                 int utterances = 5);

// CSV exports
void write_timeline_csv(const std::string& path, const ActivationTimeline& t);
void write_contrast_csv(const std::string& path, const ActivationTimeline& contrast);
void write_saliency_csv(const std::string& path, const ChannelSaliency& s);

}  // namespace fast::attrib
