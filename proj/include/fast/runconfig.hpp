#pragma once

#include <string>

#include "fast/model.hpp"
#include "fast/montage.hpp"
#include "fast/preprocess.hpp"

namespace fast::cli {

// Resolved configuration for the training-family commands. Defaults, then the
// config file, then flag overrides, in that precedence; unknown keys are
// rejected. The resolved copy is written into every run directory.
struct RunConfig {
    std::string data;
    std::string out;
    std::string partition = "M8";
    std::string partition_file;  // optional asset override
    double window_s = 1.0;
    double stride_s = 0.5;
    int utterances = 5;
    std::uint64_t seed = 1;
    int epochs = -1;  // auto: 200 for the full-size model, 50 for the desk preset
    int batch = 32;
    int jobs = 1;
    double base_lr = 1e-3;
    int warmup_epochs = 10;
    double lr_floor = 0.1;
    double weight_decay = 0.01;
    double clip_norm = 5.0;
    bool save_checkpoints = true;
    bool desk_model = true;  // desk-scale preset vs full-size configuration
    bool no_te = false;
    std::string model_overrides = "{}";  // JSON object of FastConfig fields

    std::string to_json() const;
};

// file_text: the config file contents ("" for none); overrides_json: a JSON
// object assembled from command-line flags.
RunConfig resolve_config(const std::string& file_text, const std::string& overrides_json);

// Build the model configuration implied by a run config and a partition
// (applies desk/full defaults, region channel counts, then model_overrides).
model::FastConfig build_model_config(const RunConfig& rc, const montage::RegionPartition& partition);

}  // namespace fast::cli
