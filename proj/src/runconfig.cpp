#include "fast/runconfig.hpp"

#include <set>

#include "json.hpp"

namespace fast::cli {

using nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "data",       "out",           "partition",    "partition_file", "window_s",
        "stride_s",   "utterances",    "seed",         "epochs",         "batch",
        "jobs",       "base_lr",       "warmup_epochs", "lr_floor",      "weight_decay",
        "clip_norm",  "save_checkpoints", "desk_model", "no_te",         "model"};
    return keys;
}

const std::set<std::string>& known_model_keys() {
    static const std::set<std::string> keys{
        "token_width",   "conv_filters",  "conv_t_taps",   "temporal_kernel", "pool_window",
        "tokenizer_depth", "spatial_depth", "temporal_depth", "heads_spatial", "heads_temporal",
        "ffn_multiplier", "head_hidden",  "s_max",         "n_classes",       "dropout",
        "bn_momentum",   "bn_eps",        "ln_eps"};
    return keys;
}

void apply_keys(RunConfig& rc, const json& j) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (!known_keys().count(key))
            throw ConfigError("config: unknown key '" + key + "'");
        if (key == "model") {
            if (!it->is_object()) throw ConfigError("config: 'model' must be an object");
            json merged = json::parse(rc.model_overrides);
            for (auto mt = it->begin(); mt != it->end(); ++mt) {
                if (!known_model_keys().count(mt.key()))
                    throw ConfigError("config: unknown key 'model." + mt.key() + "'");
                merged[mt.key()] = mt.value();
            }
            rc.model_overrides = merged.dump();
        } else if (key == "data")
            rc.data = it->get<std::string>();
        else if (key == "out")
            rc.out = it->get<std::string>();
        else if (key == "partition")
            rc.partition = it->get<std::string>();
        else if (key == "partition_file")
            rc.partition_file = it->get<std::string>();
        else if (key == "window_s")
            rc.window_s = it->get<double>();
        else if (key == "stride_s")
            rc.stride_s = it->get<double>();
        else if (key == "utterances")
            rc.utterances = it->get<int>();
        else if (key == "seed")
            rc.seed = it->get<std::uint64_t>();
        else if (key == "epochs") {
            rc.epochs = it->get<int>();
            if (rc.epochs < 0) throw ConfigError("config: epochs must be >= 0");
        }
        else if (key == "batch")
            rc.batch = it->get<int>();
        else if (key == "jobs")
            rc.jobs = it->get<int>();
        else if (key == "base_lr")
            rc.base_lr = it->get<double>();
        else if (key == "warmup_epochs")
            rc.warmup_epochs = it->get<int>();
        else if (key == "lr_floor")
            rc.lr_floor = it->get<double>();
        else if (key == "weight_decay")
            rc.weight_decay = it->get<double>();
        else if (key == "clip_norm")
            rc.clip_norm = it->get<double>();
        else if (key == "save_checkpoints")
            rc.save_checkpoints = it->get<bool>();
        else if (key == "desk_model")
            rc.desk_model = it->get<bool>();
        else if (key == "no_te")
            rc.no_te = it->get<bool>();
    }
}

}  // namespace

std::string RunConfig::to_json() const {
    return json{{"data", data},
                {"out", out},
                {"partition", partition},
                {"partition_file", partition_file},
                {"window_s", window_s},
                {"stride_s", stride_s},
                {"utterances", utterances},
                {"seed", seed},
                {"epochs", epochs},
                {"batch", batch},
                {"jobs", jobs},
                {"base_lr", base_lr},
                {"warmup_epochs", warmup_epochs},
                {"lr_floor", lr_floor},
                {"weight_decay", weight_decay},
                {"clip_norm", clip_norm},
                {"save_checkpoints", save_checkpoints},
                {"desk_model", desk_model},
                {"no_te", no_te},
                {"model", json::parse(model_overrides)}}
        .dump(2);
}

RunConfig resolve_config(const std::string& file_text, const std::string& overrides_json) {
    RunConfig rc;
    if (const char* env = std::getenv("FAST_SEED")) {
        try {
            rc.seed = std::stoull(env);
        } catch (...) {
            throw ConfigError("FAST_SEED is not an integer");
        }
    }
    if (!file_text.empty()) {
        json j;
        try {
            j = json::parse(file_text);
        } catch (const json::exception& e) {
            throw FormatError(std::string("config: bad JSON: ") + e.what());
        }
        apply_keys(rc, j);
    }
    if (!overrides_json.empty() && overrides_json != "{}") {
        json j;
        try {
            j = json::parse(overrides_json);
        } catch (const json::exception& e) {
            throw FormatError(std::string("config overrides: bad JSON: ") + e.what());
        }
        apply_keys(rc, j);
    }
    return rc;
}

model::FastConfig build_model_config(const RunConfig& rc,
                                     const montage::RegionPartition& partition) {
    model::FastConfig cfg = rc.desk_model ? model::desk_config() : model::FastConfig{};
    cfg.n_regions = partition.region_count();
    cfg.region_channels = partition.channel_counts();

    const json j = json::parse(rc.model_overrides);
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "token_width") cfg.token_width = it->get<int>();
        else if (k == "conv_filters") cfg.conv_filters = it->get<int>();
        else if (k == "conv_t_taps") cfg.conv_t_taps = it->get<int>();
        else if (k == "temporal_kernel") cfg.temporal_kernel = it->get<int>();
        else if (k == "pool_window") cfg.pool_window = it->get<int>();
        else if (k == "tokenizer_depth") cfg.tokenizer_depth = it->get<int>();
        else if (k == "spatial_depth") cfg.spatial_depth = it->get<int>();
        else if (k == "temporal_depth") cfg.temporal_depth = it->get<int>();
        else if (k == "heads_spatial") cfg.heads_spatial = it->get<int>();
        else if (k == "heads_temporal") cfg.heads_temporal = it->get<int>();
        else if (k == "ffn_multiplier") cfg.ffn_multiplier = it->get<int>();
        else if (k == "head_hidden") cfg.head_hidden = it->get<int>();
        else if (k == "s_max") cfg.s_max = it->get<int>();
        else if (k == "n_classes") cfg.n_classes = it->get<int>();
        else if (k == "dropout") cfg.dropout = it->get<double>();
        else if (k == "bn_momentum") cfg.bn_momentum = it->get<double>();
        else if (k == "bn_eps") cfg.bn_eps = it->get<double>();
        else if (k == "ln_eps") cfg.ln_eps = it->get<double>();
        else
            throw ConfigError("config: unknown key 'model." + k + "'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace fast::cli
