#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fast/metrics.hpp"
#include "fast/model.hpp"
#include "fast/optim.hpp"

namespace fast::train {

struct TrialRef {
    int index = 0;  // position in the trials vector
    int subject = 0;
    int block = 0;
    int label = 0;
};

struct DatasetIndex {
    std::vector<TrialRef> refs;

    static DatasetIndex from_trials(const std::vector<pre::EEGTrial>& trials);
    std::vector<int> subjects() const;
    std::vector<int> blocks_of(int subject) const;
    std::vector<TrialRef> of_subject(int subject) const;
};

// LOSO: train on every other subject, test on the held-out one.
std::pair<std::vector<TrialRef>, std::vector<TrialRef>> loso_split(const DatasetIndex& index,
                                                                   int held_out_subject);

// LOBO within one subject: five folds, each holding out one block.
std::vector<std::pair<std::vector<TrialRef>, std::vector<TrialRef>>> lobo_folds(
    const DatasetIndex& index, int subject);

struct TrainOptions {
    int epochs = 50;
    int batch_size = 32;
    num::Schedule schedule{1e-3, 10, 0, 0.1};  // total_epochs synced to epochs by fit
    double weight_decay = 0.01;
    double clip_norm = 5.0;  // 0 disables clipping
    std::uint64_t seed = 1;
    pre::SegmentPlan plan{1.0, 0.5};
    bool no_te = false;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
};

struct TrainRun {
    std::uint64_t seed = 0;
    int optimizer_steps = 0;
    std::vector<EpochLog> epochs;
    metrics::MetricsReport final_eval;
    bool has_final_eval = false;
};

struct FoldResult {
    std::string fold_id;
    std::string held_out;
    std::vector<int> truth;
    std::vector<int> predicted;
    std::vector<std::vector<double>> scores;  // softmax probabilities, 5 per trial
};

// Seeded mini-batch training with AdamW and the warmup/cosine schedule.
// The test set is never passed in; held-out data cannot influence gradients.
TrainRun fit(model::ParamStore& store, const model::FastConfig& cfg,
             const std::vector<pre::EEGTrial>& trials, const std::vector<TrialRef>& train_set,
             const montage::RegionPartition& partition, const montage::ChannelLayout& layout,
             const TrainOptions& opts);

// Single eval pass over a test set (used exactly once per fold).
FoldResult evaluate(model::ParamStore& store, const model::FastConfig& cfg,
                    const std::vector<pre::EEGTrial>& trials, const std::vector<TrialRef>& test_set,
                    const montage::RegionPartition& partition, const montage::ChannelLayout& layout,
                    const pre::SegmentPlan& plan, bool no_te, const std::string& fold_id,
                    const std::string& held_out);

struct FoldOutcome {
    FoldResult fold;
    TrainRun run;
    model::ParamStore store;
};

// LOBO fine-tuning for one subject. `pretrained` null means random
// initialization per fold (the from-scratch arm).
std::vector<FoldOutcome> lobo_finetune(const std::vector<pre::EEGTrial>& trials,
                                       const DatasetIndex& index, int subject,
                                       const model::ParamStore* pretrained,
                                       const model::FastConfig& cfg,
                                       const montage::RegionPartition& partition,
                                       const montage::ChannelLayout& layout,
                                       const TrainOptions& opts, int jobs = 1);

struct LosoOutcome {
    int subject = 0;
    FoldResult fold;
    TrainRun run;
    model::ParamStore store;
};

// Subject-independent pretraining: one model per held-out subject.
std::vector<LosoOutcome> loso_pretrain(const std::vector<pre::EEGTrial>& trials,
                                       const DatasetIndex& index, const model::FastConfig& cfg,
                                       const montage::RegionPartition& partition,
                                       const montage::ChannelLayout& layout,
                                       const TrainOptions& opts, int jobs = 1);

std::string fold_to_json(const FoldResult& fold);
FoldResult fold_from_json(const std::string& text);
std::string run_to_json(const TrainRun& run);

}  // namespace fast::train
