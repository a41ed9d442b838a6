#include "fast/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fast/jobs.hpp"
#include "json.hpp"

namespace fast::train {

using nlohmann::json;

DatasetIndex DatasetIndex::from_trials(const std::vector<pre::EEGTrial>& trials) {
    DatasetIndex idx;
    idx.refs.reserve(trials.size());
    for (size_t i = 0; i < trials.size(); ++i)
        idx.refs.push_back(TrialRef{static_cast<int>(i), trials[i].subject, trials[i].block,
                                    trials[i].label});
    return idx;
}

std::vector<int> DatasetIndex::subjects() const {
    std::set<int> s;
    for (const auto& r : refs) s.insert(r.subject);
    return std::vector<int>(s.begin(), s.end());
}

std::vector<int> DatasetIndex::blocks_of(int subject) const {
    std::set<int> s;
    for (const auto& r : refs)
        if (r.subject == subject) s.insert(r.block);
    return std::vector<int>(s.begin(), s.end());
}

std::vector<TrialRef> DatasetIndex::of_subject(int subject) const {
    std::vector<TrialRef> out;
    for (const auto& r : refs)
        if (r.subject == subject) out.push_back(r);
    return out;
}

std::pair<std::vector<TrialRef>, std::vector<TrialRef>> loso_split(const DatasetIndex& index,
                                                                   int held_out_subject) {
    auto subs = index.subjects();
    if (std::find(subs.begin(), subs.end(), held_out_subject) == subs.end())
        throw ConfigError("loso_split: unknown subject " + std::to_string(held_out_subject));
    std::vector<TrialRef> train, test;
    for (const auto& r : index.refs)
        (r.subject == held_out_subject ? test : train).push_back(r);
    return {train, test};
}

std::vector<std::pair<std::vector<TrialRef>, std::vector<TrialRef>>> lobo_folds(
    const DatasetIndex& index, int subject) {
    const auto blocks = index.blocks_of(subject);
    if (blocks.size() != 5)
        throw ConfigError("lobo_folds: subject " + std::to_string(subject) + " has " +
                          std::to_string(blocks.size()) + " blocks, expected 5");
    const auto mine = index.of_subject(subject);
    std::vector<std::pair<std::vector<TrialRef>, std::vector<TrialRef>>> folds;
    for (int b : blocks) {
        std::vector<TrialRef> train, test;
        for (const auto& r : mine) (r.block == b ? test : train).push_back(r);
        folds.emplace_back(std::move(train), std::move(test));
    }
    return folds;
}

namespace {

std::vector<double> softmax(const std::vector<float>& logits) {
    double mx = logits[0];
    for (float v : logits) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    std::vector<double> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(static_cast<double>(logits[i]) - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

}  // namespace

TrainRun fit(model::ParamStore& store, const model::FastConfig& cfg,
             const std::vector<pre::EEGTrial>& trials, const std::vector<TrialRef>& train_set,
             const montage::RegionPartition& partition, const montage::ChannelLayout& layout,
             const TrainOptions& opts) {
    if (train_set.empty()) throw ConfigError("fit: empty training set");
    if (opts.epochs < 0) throw ConfigError("fit: negative epoch count");

    num::Schedule sched = opts.schedule;
    sched.total_epochs = opts.epochs;
    sched.warmup_epochs = std::min(sched.warmup_epochs, opts.epochs);

    // per-parameter optimizer state, in store order
    std::map<std::string, num::OptimizerState<float>> opt_state;
    for (const auto& e : store.entries)
        if (e.trainable) {
            auto st = num::OptimizerState<float>::zeros_like(e.tensor);
            st.weight_decay = opts.weight_decay;
            opt_state.emplace(e.name, std::move(st));
        }

    Rng drop_rng(seed_stream(opts.seed, {0x44524f50ull}));

    TrainRun run;
    run.seed = opts.seed;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        const double lr = num::schedule_lr(sched, epoch);
        std::vector<TrialRef> order = train_set;
        Rng shuffle_rng(seed_stream(opts.seed, {0x53485546ull, static_cast<std::uint64_t>(epoch)}));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(opts.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(opts.batch_size));
            const int bsz = static_cast<int>(stop - start);

            num::Tape<float> tape;
            model::Session<float> s{tape, store, cfg, /*training=*/true, /*update_bn=*/true,
                                    &drop_rng};
            std::vector<const pre::EEGTrial*> bt;
            std::vector<int> labels;
            bt.reserve(static_cast<size_t>(bsz));
            for (size_t bi = start; bi < stop; ++bi) {
                bt.push_back(&trials[static_cast<size_t>(order[bi].index)]);
                labels.push_back(order[bi].label);
            }
            const int logits = model::batch_forward(s, bt, partition, layout, opts.plan, opts.no_te);
            const int loss = num::cross_entropy(tape, logits, labels);
            tape.backward(loss);
            const double batch_loss = static_cast<double>(tape.val(loss).v[0]) * bsz;
            if (!std::isfinite(batch_loss))
                throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch));
            epoch_loss += batch_loss;

            std::map<std::string, TensorF> grads;
            for (const auto& [name, id] : s.bound)
                if (tape.has_grad(id)) grads.emplace(name, tape.grad(id));

            if (opts.clip_norm > 0.0) {
                double sq = 0.0;
                for (const auto& e : store.entries) {
                    if (!e.trainable) continue;
                    auto it = grads.find(e.name);
                    if (it == grads.end()) continue;
                    for (float g : it->second.v) sq += static_cast<double>(g) * g;
                }
                const double norm = std::sqrt(sq);
                if (norm > opts.clip_norm) {
                    const float sc = static_cast<float>(opts.clip_norm / norm);
                    for (auto& [name, g] : grads)
                        for (auto& v : g.v) v *= sc;
                }
            }

            for (auto& e : store.entries) {
                if (!e.trainable) continue;
                auto it = grads.find(e.name);
                if (it == grads.end()) continue;
                num::adamw_step(e.tensor, it->second, opt_state.at(e.name), lr);
            }
            run.optimizer_steps += 1;
        }
        run.epochs.push_back(EpochLog{epoch, lr, epoch_loss / static_cast<double>(order.size())});
    }
    return run;
}

FoldResult evaluate(model::ParamStore& store, const model::FastConfig& cfg,
                    const std::vector<pre::EEGTrial>& trials, const std::vector<TrialRef>& test_set,
                    const montage::RegionPartition& partition, const montage::ChannelLayout& layout,
                    const pre::SegmentPlan& plan, bool no_te, const std::string& fold_id,
                    const std::string& held_out) {
    FoldResult out;
    out.fold_id = fold_id;
    out.held_out = held_out;
    for (const auto& ref : test_set) {
        const auto logits = model::eval_logits(store, cfg, trials[static_cast<size_t>(ref.index)],
                                               partition, layout, plan, no_te);
        int arg = 0;
        for (size_t j = 1; j < logits.size(); ++j)
            if (logits[j] > logits[static_cast<size_t>(arg)]) arg = static_cast<int>(j);
        out.truth.push_back(ref.label);
        out.predicted.push_back(arg);
        out.scores.push_back(softmax(logits));
    }
    return out;
}

std::vector<FoldOutcome> lobo_finetune(const std::vector<pre::EEGTrial>& trials,
                                       const DatasetIndex& index, int subject,
                                       const model::ParamStore* pretrained,
                                       const model::FastConfig& cfg,
                                       const montage::RegionPartition& partition,
                                       const montage::ChannelLayout& layout,
                                       const TrainOptions& opts, int jobs) {
    const auto folds = lobo_folds(index, subject);
    std::vector<FoldOutcome> out(folds.size());
    parallel_for(jobs, static_cast<int>(folds.size()), [&](int f) {
        const auto& [train_set, test_set] = folds[static_cast<size_t>(f)];
        TrainOptions fold_opts = opts;
        fold_opts.seed = seed_stream(opts.seed, {0x464f4c44ull, static_cast<std::uint64_t>(subject),
                                                 static_cast<std::uint64_t>(f)});
        model::ParamStore store =
            pretrained ? *pretrained : model::init_params(cfg, seed_stream(fold_opts.seed, {0x494eull}));
        TrainRun run = fit(store, cfg, trials, train_set, partition, layout, fold_opts);
        const std::string fold_id = "s" + std::to_string(subject) + "_b" +
                                    std::to_string(test_set.front().block);
        FoldResult fold = evaluate(store, cfg, trials, test_set, partition, layout, fold_opts.plan,
                                   fold_opts.no_te, fold_id,
                                   "block " + std::to_string(test_set.front().block));
        run.final_eval = metrics::compute_report(fold.truth, fold.predicted, fold.scores,
                                                 cfg.n_classes);
        run.has_final_eval = true;
        out[static_cast<size_t>(f)] = FoldOutcome{std::move(fold), std::move(run), std::move(store)};
    });
    return out;
}

std::vector<LosoOutcome> loso_pretrain(const std::vector<pre::EEGTrial>& trials,
                                       const DatasetIndex& index, const model::FastConfig& cfg,
                                       const montage::RegionPartition& partition,
                                       const montage::ChannelLayout& layout,
                                       const TrainOptions& opts, int jobs) {
    const auto subjects = index.subjects();
    std::vector<LosoOutcome> out(subjects.size());
    parallel_for(jobs, static_cast<int>(subjects.size()), [&](int si) {
        const int subject = subjects[static_cast<size_t>(si)];
        auto [train_set, test_set] = loso_split(index, subject);
        TrainOptions sub_opts = opts;
        sub_opts.seed = seed_stream(opts.seed, {0x4c4f534full, static_cast<std::uint64_t>(subject)});
        model::ParamStore store = model::init_params(cfg, seed_stream(sub_opts.seed, {0x494eull}));
        TrainRun run = fit(store, cfg, trials, train_set, partition, layout, sub_opts);
        FoldResult fold = evaluate(store, cfg, trials, test_set, partition, layout, sub_opts.plan,
                                   sub_opts.no_te, "loso_s" + std::to_string(subject),
                                   "subject " + std::to_string(subject));
        run.final_eval = metrics::compute_report(fold.truth, fold.predicted, fold.scores,
                                                 cfg.n_classes);
        run.has_final_eval = true;
        out[static_cast<size_t>(si)] =
            LosoOutcome{subject, std::move(fold), std::move(run), std::move(store)};
    });
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

std::string fold_to_json(const FoldResult& fold) {
    return json{{"fold_id", fold.fold_id},
                {"held_out", fold.held_out},
                {"truth", fold.truth},
                {"predicted", fold.predicted},
                {"scores", fold.scores}}
        .dump(2);
}

FoldResult fold_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("fold result: bad JSON: ") + e.what());
    }
    FoldResult f;
    f.fold_id = j.at("fold_id").get<std::string>();
    f.held_out = j.at("held_out").get<std::string>();
    f.truth = j.at("truth").get<std::vector<int>>();
    f.predicted = j.at("predicted").get<std::vector<int>>();
    f.scores = j.at("scores").get<std::vector<std::vector<double>>>();
    if (f.truth.size() != f.predicted.size() || f.truth.size() != f.scores.size())
        throw FormatError("fold result: inconsistent lengths");
    return f;
}

std::string run_to_json(const TrainRun& run) {
    json epochs = json::array();
    for (const auto& e : run.epochs)
        epochs.push_back(json{{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}});
    json j{{"seed", run.seed}, {"optimizer_steps", run.optimizer_steps}, {"epochs", epochs}};
    if (run.has_final_eval) {
        const auto& m = run.final_eval;
        j["final_eval"] = json{{"accuracy", m.accuracy},
                               {"macro_precision", m.macro_precision},
                               {"macro_recall", m.macro_recall},
                               {"macro_f1", m.macro_f1},
                               {"kappa", m.kappa},
                               {"auc_ovr", m.auc_ovr},
                               {"n", m.n},
                               {"classes", m.classes}};
    }
    return j.dump(2);
}

}  // namespace fast::train
