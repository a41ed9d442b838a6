#include "fast/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

#include "fast/attribution.hpp"
#include "fast/jobs.hpp"
#include "fast/runconfig.hpp"
#include "fast/synthdata.hpp"
#include "fast/training.hpp"

namespace fast::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

struct LoadedData {
    synth::Manifest manifest;
    std::vector<pre::EEGTrial> trials;
};

LoadedData load_container(const std::string& dir, int utterances) {
    LoadedData d;
    d.manifest = synth::read_manifest(dir);
    d.trials = synth::read_all(dir, d.manifest);
    if (utterances >= 1)
        for (auto& t : d.trials) t = pre::utterance_crop(t, utterances);
    return d;
}

montage::RegionPartition resolve_partition(const RunConfig& rc,
                                           const montage::ChannelLayout& layout) {
    if (!rc.partition_file.empty()) return montage::load_partition_file(rc.partition_file, layout);
    return montage::build_partition(layout, montage::parse_partition_config(rc.partition));
}

int resolved_epochs(const RunConfig& rc) {
    if (rc.epochs >= 0) return rc.epochs;
    return rc.desk_model ? 50 : 200;  // fixed-epoch training, no early stopping
}

train::TrainOptions train_options(const RunConfig& rc) {
    train::TrainOptions o;
    o.epochs = resolved_epochs(rc);
    o.batch_size = rc.batch;
    o.schedule = num::Schedule{rc.base_lr, rc.warmup_epochs, o.epochs, rc.lr_floor};
    o.weight_decay = rc.weight_decay;
    o.clip_norm = rc.clip_norm;
    o.seed = rc.seed;
    o.plan = pre::SegmentPlan{rc.window_s, rc.stride_s};
    o.no_te = rc.no_te;
    return o;
}

// ---------------------------------------------------------------------------
// eval report
// ---------------------------------------------------------------------------

json metrics_to_json(const metrics::MetricsReport& m) {
    return json{{"accuracy", m.accuracy},
                {"macro_precision", m.macro_precision},
                {"macro_recall", m.macro_recall},
                {"macro_f1", m.macro_f1},
                {"kappa", m.kappa},
                {"auc_ovr", m.auc_ovr},
                {"auc_skipped_classes", m.auc_skipped_classes},
                {"n", m.n},
                {"classes", m.classes}};
}

int subject_of_fold(const train::FoldResult& f) {
    // fold ids look like "s3_b1" or "loso_s3"
    const auto pos = f.fold_id.rfind('s');
    if (pos == std::string::npos) return -1;
    try {
        return std::stoi(f.fold_id.substr(pos + 1));
    } catch (...) {
        return -1;
    }
}

struct EvalSummary {
    json report;
    std::string table;
    std::string subjects_csv;
    double pooled_accuracy = 0.0;
    double subject_mean_accuracy = 0.0;
};

EvalSummary summarize_folds(const std::vector<train::FoldResult>& folds, int n_classes) {
    if (folds.empty()) throw ConfigError("eval: no fold results");
    EvalSummary out;
    json fold_reports = json::array();
    std::vector<int> pooled_truth, pooled_pred;
    std::vector<std::vector<double>> pooled_scores;
    std::map<int, std::pair<std::int64_t, std::int64_t>> subject_counts;  // correct, total

    char line[256];
    std::string table;
    std::snprintf(line, sizeof(line), "%-12s %6s %8s %8s %8s %8s\n", "fold", "n", "acc", "f1",
                  "kappa", "auc");
    table += line;
    for (const auto& f : folds) {
        auto rep = metrics::compute_report(f.truth, f.predicted, f.scores, n_classes);
        fold_reports.push_back(json{{"fold_id", f.fold_id},
                                    {"held_out", f.held_out},
                                    {"metrics", metrics_to_json(rep)}});
        std::snprintf(line, sizeof(line), "%-12s %6lld %8.3f %8.3f %8.3f %8.3f\n",
                      f.fold_id.c_str(), static_cast<long long>(rep.n), rep.accuracy, rep.macro_f1,
                      rep.kappa, rep.auc_ovr);
        table += line;
        const int sid = subject_of_fold(f);
        for (size_t i = 0; i < f.truth.size(); ++i) {
            pooled_truth.push_back(f.truth[i]);
            pooled_pred.push_back(f.predicted[i]);
            pooled_scores.push_back(f.scores[i]);
            subject_counts[sid].second += 1;
            subject_counts[sid].first += (f.truth[i] == f.predicted[i]) ? 1 : 0;
        }
    }
    auto pooled = metrics::compute_report(pooled_truth, pooled_pred, pooled_scores, n_classes);
    std::snprintf(line, sizeof(line), "%-12s %6lld %8.3f %8.3f %8.3f %8.3f\n", "pooled",
                  static_cast<long long>(pooled.n), pooled.accuracy, pooled.macro_f1, pooled.kappa,
                  pooled.auc_ovr);
    table += line;

    json per_subject = json::object();
    std::string csv = "subject,n,accuracy\n";
    double mean = 0.0, m2 = 0.0;
    int ns = 0;
    for (const auto& [sid, cnt] : subject_counts) {
        const double acc = static_cast<double>(cnt.first) / static_cast<double>(cnt.second);
        per_subject[std::to_string(sid)] = acc;
        csv += std::to_string(sid) + "," + std::to_string(cnt.second) + "," + std::to_string(acc) +
               "\n";
        ns += 1;
        const double delta = acc - mean;
        mean += delta / ns;
        m2 += delta * (acc - mean);
    }
    const double subj_std = ns > 1 ? std::sqrt(m2 / (ns - 1)) : 0.0;
    const auto [lo, hi] = metrics::chance_interval(1.0 / n_classes, pooled.n, 1.96);

    std::snprintf(line, sizeof(line),
                  "subject-mean accuracy (primary): %.3f +- %.3f over %d subjects\n", mean,
                  subj_std, ns);
    table += line;
    std::snprintf(line, sizeof(line), "chance interval (p=%.2f, n=%lld, z=1.96): [%.4f, %.4f]\n",
                  1.0 / n_classes, static_cast<long long>(pooled.n), lo, hi);
    table += line;

    out.report = json{{"folds", fold_reports},
                      {"pooled", metrics_to_json(pooled)},
                      {"subject_mean_accuracy", mean},
                      {"subject_accuracy_std", subj_std},
                      {"per_subject_accuracy", per_subject},
                      {"chance_interval", json::array({lo, hi})}};
    out.table = table;
    out.subjects_csv = csv;
    out.pooled_accuracy = pooled.accuracy;
    out.subject_mean_accuracy = mean;
    return out;
}

std::vector<train::FoldResult> read_folds_dir(const std::string& dir) {
    std::vector<fs::path> files;
    if (!fs::exists(dir)) throw IoError("no such fold directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<train::FoldResult> folds;
    for (const auto& p : files) folds.push_back(train::fold_from_json(slurp_file(p.string())));
    return folds;
}

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, const std::string& preset, std::int64_t seed,
              const std::string& out_dir, bool dump_spec) {
    synth::SynthSpec spec;
    if (!spec_path.empty()) {
        spec = synth::spec_from_json(slurp_file(spec_path));
    } else {
        spec = synth::default_spec();
        if (preset == "easy") {
            spec.n_subjects = 5;
            spec.trials_per_block = 8;
            spec.snr_db = 20.0;
        } else if (preset == "medium") {
            spec.n_subjects = 3;
            spec.trials_per_block = 8;
            spec.snr_db = 6.0;
        } else if (preset == "demo") {
            spec.n_subjects = 2;
            spec.trials_per_block = 5;
            spec.snr_db = 20.0;
        } else if (!preset.empty()) {
            throw ConfigError("synth: unknown preset '" + preset + "' (easy|medium|demo)");
        }
    }
    if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
    spec.validate();
    if (dump_spec) {
        std::cout << synth::spec_to_json(spec) << "\n";
        return 0;
    }
    auto manifest = synth::generate(spec, out_dir);
    spit_file((fs::path(out_dir) / "spec.json").string(), synth::spec_to_json(spec));
    std::cout << "wrote " << manifest.trials.size() << " trials to " << out_dir << "\n";
    return 0;
}

int cmd_preprocess(const std::string& in_dir, const std::string& out_dir,
                   const pre::PreprocessOptions& opts, int jobs) {
    auto manifest = synth::read_manifest(in_dir);
    auto trials = synth::read_all(in_dir, manifest);
    const size_t n_in = trials.size();

    std::vector<char> keep(trials.size(), 1);
    parallel_for(jobs, static_cast<int>(trials.size()), [&](int i) {
        keep[static_cast<size_t>(i)] =
            pre::preprocess_trial(trials[static_cast<size_t>(i)], opts) ? 1 : 0;
    });

    synth::Manifest out_manifest = manifest;
    out_manifest.trials.clear();
    std::vector<pre::EEGTrial> kept;
    for (size_t i = 0; i < trials.size(); ++i) {
        if (!keep[i]) continue;
        out_manifest.trials.push_back(manifest.trials[i]);
        kept.push_back(std::move(trials[i]));
    }
    if (!kept.empty()) {
        out_manifest.sample_rate = kept.front().sample_rate;
        out_manifest.cue_onset_s = static_cast<double>(kept.front().cue_onset) /
                                   kept.front().sample_rate;
    }
    synth::write_container(out_manifest, kept, out_dir);

    json filters = json::array();
    if (opts.bandpass)
        filters.push_back(json{{"kind", "bandpass"},
                               {"lo_hz", opts.bp_lo_hz},
                               {"hi_hz", opts.bp_hi_hz},
                               {"taps", opts.bp_taps},
                               {"zero_phase", true}});
    if (opts.notch)
        filters.push_back(json{{"kind", "bandstop"},
                               {"lo_hz", opts.notch_lo_hz},
                               {"hi_hz", opts.notch_hi_hz},
                               {"taps", opts.notch_taps},
                               {"zero_phase", true}});
    json report{{"n_trials_in", n_in},
                {"n_dropped", n_in - kept.size()},
                {"filter_specs", filters},
                {"rate_in", manifest.sample_rate},
                {"rate_out", out_manifest.sample_rate},
                {"reject_uv", opts.reject_uv},
                {"baseline_s", opts.baseline_s}};
    spit_file((fs::path(out_dir) / "preprocess_report.json").string(), report.dump(2));
    std::cout << "preprocessed " << n_in << " trials, dropped " << (n_in - kept.size()) << "\n";
    return 0;
}

void write_run_dir(const RunConfig& rc) {
    fs::create_directories(rc.out);
    fs::create_directories(fs::path(rc.out) / "folds");
    RunConfig materialized = rc;  // defaults materialized, including auto epochs
    materialized.epochs = resolved_epochs(rc);
    spit_file((fs::path(rc.out) / "config.json").string(), materialized.to_json());
}

int cmd_pretrain(const RunConfig& rc) {
    if (rc.data.empty() || rc.out.empty()) throw ConfigError("pretrain: --data and --out required");
    write_run_dir(rc);
    auto data = load_container(rc.data, rc.utterances);
    auto partition = resolve_partition(rc, data.manifest.layout);
    auto cfg = build_model_config(rc, partition);
    auto index = train::DatasetIndex::from_trials(data.trials);
    auto opts = train_options(rc);

    auto outcomes = train::loso_pretrain(data.trials, index, cfg, partition, data.manifest.layout,
                                         opts, rc.jobs);
    std::vector<train::FoldResult> folds;
    for (const auto& oc : outcomes) {
        const fs::path sdir = fs::path(rc.out) / "subjects" / ("s" + std::to_string(oc.subject));
        fs::create_directories(sdir);
        model::save_checkpoint(oc.store, cfg, (sdir / "model.ckpt").string());
        spit_file((sdir / "run.json").string(), train::run_to_json(oc.run));
        spit_file((fs::path(rc.out) / "folds" / (oc.fold.fold_id + ".json")).string(),
                  train::fold_to_json(oc.fold));
        folds.push_back(oc.fold);
    }
    auto summary = summarize_folds(folds, cfg.n_classes);
    spit_file((fs::path(rc.out) / "metrics.json").string(), summary.report.dump(2));
    spit_file((fs::path(rc.out) / "subjects.csv").string(), summary.subjects_csv);
    std::cout << summary.table;
    return 0;
}

int cmd_finetune(const RunConfig& rc, const std::string& from, bool scratch) {
    if (rc.data.empty() || rc.out.empty()) throw ConfigError("finetune: --data and --out required");
    if (scratch == !from.empty())
        throw ConfigError("finetune: exactly one of --from or --scratch is required");
    write_run_dir(rc);
    auto data = load_container(rc.data, rc.utterances);
    auto partition = resolve_partition(rc, data.manifest.layout);
    auto cfg = build_model_config(rc, partition);
    auto index = train::DatasetIndex::from_trials(data.trials);
    auto opts = train_options(rc);

    // single checkpoint file or a pretrain run directory with per-subject ones
    model::Checkpoint single;
    bool have_single = false;
    if (!scratch && fs::is_regular_file(from)) {
        single = model::load_checkpoint(from);
        have_single = true;
    }

    std::vector<train::FoldResult> folds;
    for (int subject : index.subjects()) {
        model::ParamStore pretrained;
        const model::ParamStore* init = nullptr;
        if (!scratch) {
            if (have_single) {
                if (model::config_to_json(single.cfg) != model::config_to_json(cfg))
                    throw ConfigError("finetune: checkpoint config does not match the run config");
                init = &single.store;
            } else {
                const fs::path ckpt =
                    fs::path(from) / "subjects" / ("s" + std::to_string(subject)) / "model.ckpt";
                if (!fs::exists(ckpt))
                    throw IoError("finetune: missing pretrained checkpoint " + ckpt.string());
                auto ck = model::load_checkpoint(ckpt.string());
                if (model::config_to_json(ck.cfg) != model::config_to_json(cfg))
                    throw ConfigError("finetune: checkpoint config does not match the run config");
                pretrained = std::move(ck.store);
                init = &pretrained;
            }
        }
        auto outcomes = train::lobo_finetune(data.trials, index, subject, init, cfg, partition,
                                             data.manifest.layout, opts, rc.jobs);
        for (const auto& oc : outcomes) {
            const fs::path fdir = fs::path(rc.out) / "subjects" / ("s" + std::to_string(subject)) /
                                  ("fold_" + oc.fold.fold_id);
            fs::create_directories(fdir);
            spit_file((fdir / "run.json").string(), train::run_to_json(oc.run));
            if (rc.save_checkpoints)
                model::save_checkpoint(oc.store, cfg, (fdir / "model.ckpt").string());
            spit_file((fs::path(rc.out) / "folds" / (oc.fold.fold_id + ".json")).string(),
                      train::fold_to_json(oc.fold));
            folds.push_back(oc.fold);
        }
    }
    auto summary = summarize_folds(folds, cfg.n_classes);
    spit_file((fs::path(rc.out) / "metrics.json").string(), summary.report.dump(2));
    spit_file((fs::path(rc.out) / "subjects.csv").string(), summary.subjects_csv);
    std::cout << summary.table;
    return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& out_path) {
    const fs::path folds_dir = fs::is_directory(fs::path(run_dir) / "folds")
                                   ? fs::path(run_dir) / "folds"
                                   : fs::path(run_dir);
    auto folds = read_folds_dir(folds_dir.string());
    int n_classes = 5;
    for (const auto& f : folds)
        for (const auto& row : f.scores) n_classes = std::max(n_classes, static_cast<int>(row.size()));
    auto summary = summarize_folds(folds, n_classes);
    if (!out_path.empty()) spit_file(out_path, summary.report.dump(2));
    const fs::path csv = out_path.empty() ? fs::path(run_dir) / "subjects.csv"
                                          : fs::path(out_path).parent_path() / "subjects.csv";
    spit_file(csv.string(), summary.subjects_csv);
    std::cout << summary.table;
    return 0;
}

int cmd_attribute(const std::string& ckpt_path, const std::string& data_dir,
                  const std::string& out_dir, const RunConfig& rc, int steps, int target,
                  double scan_window_s, double scan_step_s, int max_trials) {
    auto ck = model::load_checkpoint(ckpt_path);
    auto raw = load_container(data_dir, /*utterances=*/0);  // full trials for the dense scan
    auto partition = resolve_partition(rc, raw.manifest.layout);
    if (partition.channel_counts() != ck.cfg.region_channels)
        throw ConfigError("attribute: checkpoint region channels do not match the partition");
    fs::create_directories(out_dir);

    // subsample round-robin over classes so every class stays represented
    std::vector<pre::EEGTrial> trials;
    if (max_trials > 0 && static_cast<int>(raw.trials.size()) > max_trials) {
        std::map<int, std::vector<size_t>> by_label;
        for (size_t i = 0; i < raw.trials.size(); ++i)
            by_label[raw.trials[i].label].push_back(i);
        size_t round = 0;
        while (static_cast<int>(trials.size()) < max_trials) {
            bool any = false;
            for (auto& [label, idxs] : by_label) {
                if (round < idxs.size() && static_cast<int>(trials.size()) < max_trials) {
                    trials.push_back(raw.trials[idxs[round]]);
                    any = true;
                }
            }
            if (!any) break;
            round += 1;
        }
    } else {
        trials = raw.trials;
    }
    if (trials.empty()) throw ConfigError("attribute: container has no trials");

    // dense ST activation timelines over the full trial extent
    std::vector<attrib::ActivationTimeline> timelines;
    std::vector<int> labels;
    timelines.resize(trials.size());
    parallel_for(rc.jobs, static_cast<int>(trials.size()), [&](int i) {
        timelines[static_cast<size_t>(i)] =
            attrib::activation_timeline(ck.store, ck.cfg, trials[static_cast<size_t>(i)], partition,
                                        raw.manifest.layout, scan_window_s, scan_step_s);
    });
    for (const auto& t : trials) labels.push_back(t.label);
    auto maps = attrib::normalize_and_average(timelines, labels, ck.cfg.n_classes);

    // grand-average timeline across classes
    attrib::ActivationTimeline grand = maps.per_class[0];
    for (size_t k = 0; k < grand.values.size(); ++k) {
        double acc = 0.0;
        for (const auto& m : maps.per_class) acc += m.values[k];
        grand.values[k] = static_cast<float>(acc / maps.per_class.size());
    }
    const double t0 = -raw.manifest.cue_onset_s;
    grand.start_s = t0;
    attrib::write_timeline_csv((fs::path(out_dir) / "timeline.csv").string(), grand);
    for (int c = 0; c < ck.cfg.n_classes; ++c) {
        maps.contrasts[static_cast<size_t>(c)].start_s = t0;
        attrib::write_contrast_csv(
            (fs::path(out_dir) / ("contrast_" + std::to_string(c) + ".csv")).string(),
            maps.contrasts[static_cast<size_t>(c)]);
    }

    // integrated gradients on the task window
    const pre::SegmentPlan plan{rc.window_s, rc.stride_s};
    std::vector<attrib::AttributionMap> ig_maps(trials.size());
    parallel_for(rc.jobs, static_cast<int>(trials.size()), [&](int i) {
        pre::EEGTrial task = pre::utterance_crop(trials[static_cast<size_t>(i)], rc.utterances);
        const int cls = target >= 0 ? target : task.label;
        ig_maps[static_cast<size_t>(i)] = attrib::integrated_gradients_class(
            ck.store, ck.cfg, task, cls, steps, partition, raw.manifest.layout, plan);
    });
    auto saliency = attrib::channel_saliency(ig_maps, raw.manifest.layout);
    attrib::write_saliency_csv((fs::path(out_dir) / "saliency_channels.csv").string(), saliency);

    double mean_gap = 0.0;
    for (const auto& m : ig_maps) mean_gap += m.relative_gap();
    mean_gap /= static_cast<double>(ig_maps.size());
    json report{{"n_trials", trials.size()},
                {"steps", steps},
                {"mean_completeness_gap", mean_gap},
                {"scan_window_s", scan_window_s},
                {"scan_step_s", scan_step_s}};
    spit_file((fs::path(out_dir) / "attribution_report.json").string(), report.dump(2));
    std::cout << "attribution over " << trials.size() << " trials, mean completeness gap "
              << mean_gap << "\n";
    return 0;
}

int cmd_ablate(RunConfig rc, const std::string& mode, int k, const std::string& partition_id) {
    if (mode == "no-te") {
        rc.no_te = true;
    } else if (mode == "no-pretrain") {
        // plain from-scratch fine-tuning
    } else if (mode == "utterances") {
        if (k < 1 || k > 5) throw ConfigError("ablate: utterances mode needs k in 1..5");
        rc.utterances = k;
    } else if (mode == "partition") {
        if (partition_id.empty()) throw ConfigError("ablate: partition mode needs an id");
        rc.partition = partition_id;
    } else {
        throw ConfigError("ablate: unknown mode '" + mode +
                          "' (no-te|no-pretrain|utterances|partition)");
    }
    return cmd_finetune(rc, "", /*scratch=*/true);
}

// assemble flag overrides for resolve_config
struct CommonFlags {
    std::string config_path;
    std::map<std::string, json> values;

    void set(const std::string& key, json v) { values[key] = std::move(v); }
    RunConfig resolve() const {
        json overrides = json::object();
        for (const auto& [k, v] : values) {
            if (k.rfind("model.", 0) == 0) {
                if (!overrides.count("model")) overrides["model"] = json::object();
                overrides["model"][k.substr(6)] = v;
            } else {
                overrides[k] = v;
            }
        }
        const std::string text = config_path.empty() ? "" : slurp_file(config_path);
        return resolve_config(text, overrides.dump());
    }
};

void add_common_train_flags(CLI::App* cmd, std::shared_ptr<CommonFlags> cf) {
    cmd->add_option("--config", cf->config_path, "run config JSON file");
    auto opt = [cf, cmd](const std::string& flag, const std::string& key, const std::string& help) {
        cmd->add_option_function<std::string>(
            flag,
            [cf, key](const std::string& v) {
                // numbers/bools pass through as typed JSON, strings as strings
                try {
                    cf->set(key, json::parse(v));
                } catch (...) {
                    cf->set(key, v);
                }
            },
            help);
    };
    opt("--data", "data", "dataset container directory");
    opt("--out", "out", "run output directory");
    opt("--partition", "partition", "partition config id (M8|M5|M4|M3|M2_FT|M1_F|M1_T)");
    opt("--partition-file", "partition_file", "partition asset file overriding the built-in rules");
    opt("--window", "window_s", "segment window in seconds");
    opt("--stride", "stride_s", "segment stride in seconds");
    opt("--utterances", "utterances", "crop to the first k utterances (1..5)");
    opt("--seed", "seed", "run seed (FAST_SEED fallback)");
    opt("--epochs", "epochs", "training epochs");
    opt("--batch", "batch", "mini-batch size");
    opt("--jobs", "jobs", "parallel fold/subject jobs");
    opt("--lr", "base_lr", "base learning rate");
    opt("--warmup", "warmup_epochs", "warmup epochs");
    opt("--weight-decay", "weight_decay", "AdamW weight decay");
    opt("--clip-norm", "clip_norm", "gradient clipping norm (0 disables)");
    opt("--desk-model", "desk_model", "true: desk-scale model preset, false: full-size");
    opt("--token-width", "model.token_width", "tokenizer output width F");
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"functional-area spatio-temporal EEG decoder"};
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset container");
    std::string synth_spec, synth_preset, synth_out;
    std::int64_t synth_seed = -1;
    bool synth_dump = false;
    synth_cmd->add_option("--spec", synth_spec, "synthesis spec JSON file");
    synth_cmd->add_option("--preset", synth_preset, "built-in spec preset (easy|medium|demo)");
    synth_cmd->add_option("--seed", synth_seed, "override the spec seed");
    synth_cmd->add_option("--out", synth_out, "output container directory");
    synth_cmd->add_flag("--dump-spec", synth_dump, "print the resolved spec instead of generating");

    // preprocess
    auto* prep_cmd = app.add_subcommand("preprocess", "filter, decimate and baseline-correct");
    std::string prep_in, prep_out;
    pre::PreprocessOptions popts;
    int prep_jobs = 1;
    bool no_bandpass = false, no_notch = false;
    prep_cmd->add_option("--in", prep_in, "input container")->required();
    prep_cmd->add_option("--out", prep_out, "output container")->required();
    prep_cmd->add_flag("--no-bandpass", no_bandpass, "skip the 1-40 Hz bandpass");
    prep_cmd->add_flag("--no-notch", no_notch, "skip the 50 Hz notch");
    prep_cmd->add_option("--bp-lo", popts.bp_lo_hz, "bandpass low edge Hz");
    prep_cmd->add_option("--bp-hi", popts.bp_hi_hz, "bandpass high edge Hz");
    prep_cmd->add_option("--bp-taps", popts.bp_taps, "bandpass FIR taps (odd)");
    prep_cmd->add_option("--notch-taps", popts.notch_taps, "notch FIR taps (odd)");
    prep_cmd->add_option("--target-rate", popts.target_rate, "decimation target rate Hz");
    prep_cmd->add_option("--baseline", popts.baseline_s, "baseline window seconds (0 disables)");
    prep_cmd->add_option("--reject-uv", popts.reject_uv, "amplitude rejection threshold uV (0 off)");
    prep_cmd->add_option("--jobs", prep_jobs, "parallel trial jobs");

    // pretrain / finetune / ablate share the training flags
    auto pre_cf = std::make_shared<CommonFlags>();
    auto* pretrain_cmd = app.add_subcommand("pretrain", "LOSO pretraining over subjects");
    add_common_train_flags(pretrain_cmd, pre_cf);

    auto fin_cf = std::make_shared<CommonFlags>();
    auto* finetune_cmd = app.add_subcommand("finetune", "LOBO fine-tuning per subject");
    add_common_train_flags(finetune_cmd, fin_cf);
    std::string fin_from;
    bool fin_scratch = false;
    finetune_cmd->add_option("--from", fin_from, "pretrain run directory or checkpoint file");
    finetune_cmd->add_flag("--scratch", fin_scratch, "random initialization instead of --from");

    auto abl_cf = std::make_shared<CommonFlags>();
    auto* ablate_cmd = app.add_subcommand("ablate", "ablation training runs");
    add_common_train_flags(ablate_cmd, abl_cf);
    std::string abl_mode, abl_partition;
    int abl_k = 0;
    ablate_cmd->add_option("--mode", abl_mode, "no-te|no-pretrain|utterances|partition")->required();
    ablate_cmd->add_option("--k", abl_k, "utterance count for --mode utterances");
    ablate_cmd->add_option("--partition-id", abl_partition, "partition id for --mode partition");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "metrics from fold results");
    std::string eval_run, eval_out;
    eval_cmd->add_option("--run", eval_run, "run directory (or folds directory)")->required();
    eval_cmd->add_option("--out", eval_out, "metrics JSON output path");

    // attribute
    auto att_cf = std::make_shared<CommonFlags>();
    auto* att_cmd = app.add_subcommand("attribute", "activation timelines and IG saliency");
    add_common_train_flags(att_cmd, att_cf);
    std::string att_ckpt;
    int att_steps = 64, att_target = -1, att_max_trials = 0;
    double att_window = 1.0, att_step = 0.02;
    att_cmd->add_option("--ckpt", att_ckpt, "model checkpoint")->required();
    att_cmd->add_option("--steps", att_steps, "IG path steps");
    att_cmd->add_option("--target", att_target, "target class (-1: per-trial true class)");
    att_cmd->add_option("--scan-window", att_window, "timeline window seconds");
    att_cmd->add_option("--scan-step", att_step, "timeline step seconds");
    att_cmd->add_option("--max-trials", att_max_trials, "limit the trial count (0: all)");

    std::vector<const char*> argv;
    argv.push_back("fast");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (synth_cmd->parsed())
            return cmd_synth(synth_spec, synth_preset, synth_seed, synth_out, synth_dump);
        if (prep_cmd->parsed()) {
            popts.bandpass = !no_bandpass;
            popts.notch = !no_notch;
            return cmd_preprocess(prep_in, prep_out, popts, prep_jobs);
        }
        if (pretrain_cmd->parsed()) return cmd_pretrain(pre_cf->resolve());
        if (finetune_cmd->parsed()) return cmd_finetune(fin_cf->resolve(), fin_from, fin_scratch);
        if (ablate_cmd->parsed()) return cmd_ablate(abl_cf->resolve(), abl_mode, abl_k, abl_partition);
        if (eval_cmd->parsed()) return cmd_eval(eval_run, eval_out);
        if (att_cmd->parsed()) {
            auto rc = att_cf->resolve();
            return cmd_attribute(att_ckpt, rc.data, rc.out, rc, att_steps, att_target, att_window,
                                 att_step, att_max_trials);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 2;
}

}  // namespace fast::cli
