#include <cmath>
#include <set>

#include "doctest.h"
#include "fast/training.hpp"
#include "helpers.hpp"

using namespace fast;
using namespace fast::train;

namespace {

TrainOptions quick_opts(int epochs, std::uint64_t seed) {
    TrainOptions o;
    o.epochs = epochs;
    o.batch_size = 8;
    o.schedule = num::Schedule{3e-3, 2, 0, 0.1};
    o.seed = seed;
    o.plan = helpers::tiny_plan();
    return o;
}

}  // namespace

TEST_CASE("loso split: disjoint, covering, unknown subject errors") {
    auto trials = helpers::tiny_task(5, 1, 10, 3);
    auto index = DatasetIndex::from_trials(trials);
    auto [train, test] = loso_split(index, 3);
    std::set<int> train_subjects;
    for (const auto& r : train) train_subjects.insert(r.subject);
    CHECK(train_subjects.size() == 4);
    CHECK(train_subjects.count(3) == 0);
    for (const auto& r : test) CHECK(r.subject == 3);
    CHECK(train.size() + test.size() == trials.size());

    std::set<int> train_idx, test_idx;
    for (const auto& r : train) train_idx.insert(r.index);
    for (const auto& r : test) test_idx.insert(r.index);
    for (int i : test_idx) CHECK(train_idx.count(i) == 0);

    CHECK_THROWS_AS(loso_split(index, 99), ConfigError);
}

TEST_CASE("lobo folds: 5 folds, 80/20, disjoint union") {
    auto trials = helpers::tiny_task(1, 5, 20, 5);
    auto index = DatasetIndex::from_trials(trials);
    auto folds = lobo_folds(index, 0);
    REQUIRE(folds.size() == 5);
    std::set<int> all_test;
    for (const auto& [train, test] : folds) {
        CHECK(train.size() == 80);
        CHECK(test.size() == 20);
        for (const auto& r : test) {
            CHECK(all_test.insert(r.index).second);  // pairwise disjoint
        }
    }
    CHECK(all_test.size() == 100);

    auto four = helpers::tiny_task(1, 4, 10, 7);
    CHECK_THROWS_AS(lobo_folds(DatasetIndex::from_trials(four), 0), ConfigError);
}

TEST_CASE("fit: optimizer step arithmetic and seeded determinism") {
    auto cfg = helpers::tiny_config();
    auto layout = helpers::tiny_layout();
    auto part = helpers::tiny_partition();
    auto trials = helpers::tiny_task(1, 1, 10, 11);
    auto index = DatasetIndex::from_trials(trials);

    TrainOptions o = quick_opts(1, 21);
    o.batch_size = 4;
    model::ParamStore s1 = model::init_params(cfg, 1);
    TrainRun r1 = fit(s1, cfg, trials, index.refs, part, layout, o);
    CHECK(r1.optimizer_steps == 3);  // ceil(10 / 4)
    CHECK(r1.epochs.size() == 1);

    model::ParamStore s2 = model::init_params(cfg, 1);
    TrainRun r2 = fit(s2, cfg, trials, index.refs, part, layout, o);
    REQUIRE(r1.epochs.size() == r2.epochs.size());
    for (size_t e = 0; e < r1.epochs.size(); ++e)
        CHECK(r1.epochs[e].train_loss == r2.epochs[e].train_loss);
    for (size_t i = 0; i < s1.entries.size(); ++i)
        CHECK(s1.entries[i].tensor.v == s2.entries[i].tensor.v);
}

TEST_CASE("fit: held-out data influences nothing") {
    auto cfg = helpers::tiny_config();
    auto layout = helpers::tiny_layout();
    auto part = helpers::tiny_partition();
    auto trials = helpers::tiny_task(2, 1, 10, 13);
    auto index = DatasetIndex::from_trials(trials);
    auto [train, test] = loso_split(index, 1);

    TrainOptions o = quick_opts(2, 31);
    model::ParamStore with_test = model::init_params(cfg, 2);
    fit(with_test, cfg, trials, train, part, layout, o);

    // same training set, but the container no longer holds the test trials
    std::vector<pre::EEGTrial> only_train;
    std::vector<TrialRef> refs2;
    for (const auto& r : train) {
        refs2.push_back(TrialRef{static_cast<int>(only_train.size()), r.subject, r.block, r.label});
        only_train.push_back(trials[static_cast<size_t>(r.index)]);
    }
    model::ParamStore without_test = model::init_params(cfg, 2);
    fit(without_test, cfg, only_train, refs2, part, layout, o);

    for (size_t i = 0; i < with_test.entries.size(); ++i)
        CHECK(with_test.entries[i].tensor.v == without_test.entries[i].tensor.v);
}

TEST_CASE("fit: loss decreases on an easy separable task") {
    auto cfg = helpers::tiny_config();
    auto layout = helpers::tiny_layout();
    auto part = helpers::tiny_partition();
    auto trials = helpers::tiny_task(1, 1, 20, 17);
    auto index = DatasetIndex::from_trials(trials);

    TrainOptions o = quick_opts(12, 41);
    model::ParamStore store = model::init_params(cfg, 3);
    TrainRun run = fit(store, cfg, trials, index.refs, part, layout, o);
    CHECK(run.epochs.back().train_loss < run.epochs.front().train_loss);
}

TEST_CASE("fit: NaN loss aborts with a numeric error") {
    auto cfg = helpers::tiny_config();
    auto layout = helpers::tiny_layout();
    auto part = helpers::tiny_partition();
    auto trials = helpers::tiny_task(1, 1, 4, 19);
    trials[0].data.at(0, 0) = std::numeric_limits<float>::quiet_NaN();
    auto index = DatasetIndex::from_trials(trials);
    model::ParamStore store = model::init_params(cfg, 4);
    CHECK_THROWS_AS(fit(store, cfg, trials, index.refs, part, layout, quick_opts(1, 3)),
                    NumericError);
}

TEST_CASE("lobo_finetune: fold structure and zero-epoch equivalence") {
    auto cfg = helpers::tiny_config();
    auto layout = helpers::tiny_layout();
    auto part = helpers::tiny_partition();
    auto trials = helpers::tiny_task(1, 5, 10, 23);
    auto index = DatasetIndex::from_trials(trials);

    model::ParamStore pretrained = model::init_params(cfg, 9);
    TrainOptions o = quick_opts(0, 51);  // zero fine-tune epochs
    auto outcomes = lobo_finetune(trials, index, 0, &pretrained, cfg, part, layout, o);
    REQUIRE(outcomes.size() == 5);

    std::set<int> covered;
    int total = 0;
    for (const auto& oc : outcomes) {
        total += static_cast<int>(oc.fold.truth.size());
        for (size_t i = 0; i < oc.fold.truth.size(); ++i) covered.insert(oc.fold.predicted[i]);
    }
    CHECK(total == 50);  // every trial exactly once

    // zero epochs: predictions equal the pretrained model's
    for (const auto& oc : outcomes) {
        auto folds = lobo_folds(index, 0);
        for (const auto& [train, test] : folds) {
            if ("s0_b" + std::to_string(test.front().block) != oc.fold.fold_id) continue;
            FoldResult direct = evaluate(pretrained, cfg, trials, test, part, layout, o.plan, false,
                                         oc.fold.fold_id, oc.fold.held_out);
            CHECK(direct.predicted == oc.fold.predicted);
        }
    }
}

TEST_CASE("lobo_finetune learns the easy task above chance") {
    auto cfg = helpers::tiny_config();
    auto layout = helpers::tiny_layout();
    auto part = helpers::tiny_partition();
    auto trials = helpers::tiny_task(1, 5, 10, 29);
    auto index = DatasetIndex::from_trials(trials);

    TrainOptions o = quick_opts(10, 61);
    auto outcomes = lobo_finetune(trials, index, 0, nullptr, cfg, part, layout, o, /*jobs=*/2);
    int correct = 0, total = 0;
    for (const auto& oc : outcomes)
        for (size_t i = 0; i < oc.fold.truth.size(); ++i) {
            correct += (oc.fold.truth[i] == oc.fold.predicted[i]) ? 1 : 0;
            total += 1;
        }
    const double acc = static_cast<double>(correct) / total;
    const auto [lo, hi] = metrics::chance_interval(0.2, total, 1.96);
    CHECK(acc > hi);
}

TEST_CASE("loso_pretrain produces one outcome per subject") {
    auto cfg = helpers::tiny_config();
    auto layout = helpers::tiny_layout();
    auto part = helpers::tiny_partition();
    auto trials = helpers::tiny_task(3, 1, 5, 31);
    auto index = DatasetIndex::from_trials(trials);

    TrainOptions o = quick_opts(1, 71);
    auto outs = loso_pretrain(trials, index, cfg, part, layout, o, 2);
    REQUIRE(outs.size() == 3);
    for (const auto& oc : outs) {
        CHECK(oc.fold.truth.size() == 5);
        CHECK(oc.run.has_final_eval);
    }
}

TEST_CASE("fold json round trip") {
    FoldResult f;
    f.fold_id = "s0_b2";
    f.held_out = "block 2";
    f.truth = {0, 1, 2};
    f.predicted = {0, 2, 2};
    f.scores = {{0.7, 0.1, 0.1, 0.05, 0.05}, {0.1, 0.2, 0.5, 0.1, 0.1}, {0.0, 0.0, 1.0, 0.0, 0.0}};
    FoldResult back = fold_from_json(fold_to_json(f));
    CHECK(back.fold_id == f.fold_id);
    CHECK(back.truth == f.truth);
    CHECK(back.predicted == f.predicted);
    CHECK(back.scores == f.scores);
    CHECK_THROWS_AS(fold_from_json("{"), FormatError);
}
