#pragma once

// Shared fixtures for the model/training/attribution tests: a tiny two-region
// configuration that keeps finite-difference sweeps fast.

#include "fast/model.hpp"
#include "fast/montage.hpp"
#include "fast/preprocess.hpp"
#include "fast/rng.hpp"

namespace helpers {

inline fast::montage::ChannelLayout tiny_layout() {
    return fast::montage::make_layout({"F1", "F3", "F5", "T7", "FT7", "TP7"}, "FCz", "AFz");
}

inline fast::montage::RegionPartition tiny_partition() {
    return fast::montage::build_partition(tiny_layout(), fast::montage::PartitionConfig::M2_FT);
}

// M=2, F=4, L_t=2, L_s=1, L=1, 6 channels; S=3 with the tiny_plan below.
inline fast::model::FastConfig tiny_config() {
    fast::model::FastConfig cfg;
    cfg.n_regions = 2;
    cfg.region_channels = {3, 3};
    cfg.token_width = 4;
    cfg.conv_filters = 2;
    cfg.conv_t_taps = 5;
    cfg.temporal_kernel = 3;
    cfg.pool_window = 2;
    cfg.tokenizer_depth = 2;
    cfg.spatial_depth = 1;
    cfg.temporal_depth = 1;
    cfg.heads_spatial = 2;
    cfg.heads_temporal = 2;
    cfg.ffn_multiplier = 2;
    cfg.head_hidden = 8;
    cfg.s_max = 4;
    cfg.n_classes = 5;
    cfg.dropout = 0.0;
    cfg.validate();
    return cfg;
}

inline fast::pre::SegmentPlan tiny_plan() { return fast::pre::SegmentPlan{0.2, 0.2}; }

inline fast::pre::EEGTrial tiny_trial(std::uint64_t seed, int label = 0) {
    fast::Rng rng(seed);
    fast::pre::EEGTrial t;
    t.data = fast::TensorF({6, 120});
    for (auto& v : t.data.v) v = static_cast<float>(rng.normal());
    t.sample_rate = 200.0;
    t.label = label;
    t.cue_onset = 0;
    return t;
}

// Easily separable task on the tiny layout: class-dependent carrier frequency
// in a class-dependent channel group over background noise.
inline std::vector<fast::pre::EEGTrial> tiny_task(int subjects, int blocks, int per_block,
                                                  std::uint64_t seed, double amp = 3.0) {
    std::vector<fast::pre::EEGTrial> out;
    for (int s = 0; s < subjects; ++s)
        for (int b = 0; b < blocks; ++b)
            for (int i = 0; i < per_block; ++i) {
                const int label = i % 5;
                fast::Rng rng(fast::seed_stream(seed, {static_cast<std::uint64_t>(s),
                                                       static_cast<std::uint64_t>(b),
                                                       static_cast<std::uint64_t>(i)}));
                fast::pre::EEGTrial t;
                t.data = fast::TensorF({6, 120});
                for (auto& v : t.data.v) v = static_cast<float>(rng.normal() * 0.5);
                const double f = 6.0 + 6.0 * label;
                const int lo = (label % 2 == 0) ? 0 : 3, hi = lo + 3;
                for (int c = lo; c < hi; ++c)
                    for (int k = 0; k < 120; ++k)
                        t.data.at(c, k) += static_cast<float>(
                            amp * std::sin(2.0 * M_PI * f * k / 200.0 + 0.7 * c));
                t.sample_rate = 200.0;
                t.label = label;
                t.subject = s;
                t.block = b;
                t.cue_onset = 0;
                out.push_back(std::move(t));
            }
    return out;
}

}  // namespace helpers
