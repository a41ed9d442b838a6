#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fast/rng.hpp"
#include "fast/synthdata.hpp"
#include "oracles.hpp"

using namespace fast;
using namespace fast::synth;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec(double snr_db, std::uint64_t seed = 11, int subjects = 3, int blocks = 2,
                     int trials = 10) {
    SynthSpec s = default_spec();
    s.seed = seed;
    s.n_subjects = subjects;
    s.blocks_per_subject = blocks;
    s.trials_per_block = trials;
    s.snr_db = snr_db;
    return s;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// direct DFT magnitude of the mean signal over a channel set (test-side oracle)
double carrier_mag(const pre::EEGTrial& t, const std::vector<int>& chans, double f_hz) {
    std::vector<double> mean(static_cast<size_t>(t.samples()), 0.0);
    for (int c : chans)
        for (std::int64_t i = 0; i < t.samples(); ++i)
            mean[static_cast<size_t>(i)] += t.data.at(c, static_cast<int>(i));
    for (auto& v : mean) v /= static_cast<double>(chans.size());
    return oracle::response_mag(mean, f_hz, t.sample_rate);
}

}  // namespace

TEST_CASE("default spec shapes: 62 channels, 12 s raw, 10 s task window") {
    SynthSpec spec = default_spec();
    spec.validate();
    auto layout = resolve_layout(spec.layout);
    pre::EEGTrial t = generate_trial(spec, layout, 0, 0, 0, 2);
    CHECK(t.channels() == 62);
    CHECK(t.samples() == 2400);
    CHECK(t.cue_onset == 200);
    CHECK(pre::utterance_crop(t, 5).samples() == 2000);
    CHECK(t.data.all_finite());
}

TEST_CASE("generation is a pure function of (spec, seed)") {
    SynthSpec spec = small_spec(10.0);
    auto layout = resolve_layout(spec.layout);
    pre::EEGTrial a = generate_trial(spec, layout, 1, 0, 3, 4);
    pre::EEGTrial b = generate_trial(spec, layout, 1, 0, 3, 4);
    CHECK(a.data.v == b.data.v);
    pre::EEGTrial c = generate_trial(spec, layout, 1, 0, 4, 4);
    CHECK(a.data.v != c.data.v);
}

TEST_CASE("same seed gives a bit-identical container") {
    SynthSpec spec = small_spec(6.0, 77, 1, 1, 5);
    const fs::path da = fs::temp_directory_path() / "fast_synth_a";
    const fs::path db = fs::temp_directory_path() / "fast_synth_b";
    fs::remove_all(da);
    fs::remove_all(db);
    Manifest ma = generate(spec, da.string());
    Manifest mb = generate(spec, db.string());
    REQUIRE(ma.trials.size() == mb.trials.size());
    for (size_t i = 0; i < ma.trials.size(); ++i) {
        CHECK(ma.trials[i].label == mb.trials[i].label);
        CHECK(slurp(da / ma.trials[i].file) == slurp(db / mb.trials[i].file));
    }
    CHECK(slurp(da / "manifest.json") == slurp(db / "manifest.json"));
    fs::remove_all(da);
    fs::remove_all(db);
}

TEST_CASE("planted carrier energy is confined to its regions (>= 10 dB)") {
    SynthSpec spec = small_spec(20.0);
    auto layout = resolve_layout(spec.layout);
    auto m8 = montage::build_partition(layout, montage::PartitionConfig::M8);

    // class 0 -> frontal at 6 Hz
    double sig_db = 0.0, other_db = 0.0;
    int n_sig = 0, n_other = 0;
    for (int rep = 0; rep < 4; ++rep) {
        pre::EEGTrial t = generate_trial(spec, layout, rep % 3, 0, rep, 0);
        for (size_t ri = 0; ri < m8.region_names.size(); ++ri) {
            const double mag = carrier_mag(t, m8.region_channels[ri], 6.0);
            if (m8.region_names[ri] == "frontal") {
                sig_db += oracle::to_db(mag);
                n_sig += 1;
            } else {
                other_db += oracle::to_db(mag);
                n_other += 1;
            }
        }
    }
    CHECK(sig_db / n_sig - other_db / n_other >= 10.0);
}

TEST_CASE("per-utterance burst energy is non-increasing for decay < 1") {
    SynthSpec spec = small_spec(30.0);
    auto layout = resolve_layout(spec.layout);
    auto m8 = montage::build_partition(layout, montage::PartitionConfig::M8);
    const auto& frontal =
        m8.region_channels[static_cast<size_t>(std::find(m8.region_names.begin(), m8.region_names.end(),
                                                         "frontal") -
                                                m8.region_names.begin())];
    pre::EEGTrial t = generate_trial(spec, layout, 0, 0, 0, 0);
    std::vector<double> energy(5, 0.0);
    for (int u = 0; u < 5; ++u) {
        const std::int64_t a = t.cue_onset + 400LL * u;
        for (int c : frontal)
            for (std::int64_t i = a; i < a + 200; ++i)  // burst spans the first second
                energy[static_cast<size_t>(u)] +=
                    static_cast<double>(t.data.at(c, static_cast<int>(i))) *
                    t.data.at(c, static_cast<int>(i));
    }
    for (int u = 1; u < 5; ++u) CHECK(energy[static_cast<size_t>(u)] <= energy[static_cast<size_t>(u - 1)]);
}

TEST_CASE("container round trip and validation errors") {
    SynthSpec spec = small_spec(6.0, 5, 1, 1, 10);
    const fs::path dir = fs::temp_directory_path() / "fast_synth_rt";
    fs::remove_all(dir);
    Manifest m = generate(spec, dir.string());
    CHECK(m.trials.size() == 10);

    auto trials = read_all(dir.string(), m);
    CHECK(trials.size() == 10);
    for (size_t i = 0; i < trials.size(); ++i) {
        pre::EEGTrial orig = generate_trial(spec, m.layout, m.trials[i].subject, m.trials[i].block,
                                            static_cast<int>(i) % spec.trials_per_block,
                                            m.trials[i].label);
        CHECK(trials[i].data.v == orig.data.v);
        CHECK(trials[i].label == orig.label);
        CHECK(trials[i].cue_onset == orig.cue_onset);
    }

    // missing file
    fs::remove(dir / m.trials[3].file);
    CHECK_THROWS_AS(read_all(dir.string(), m), FormatError);

    // empty container is valid
    Manifest empty = m;
    empty.trials.clear();
    const fs::path edir = fs::temp_directory_path() / "fast_synth_empty";
    fs::remove_all(edir);
    fs::create_directories(edir);
    write_manifest(empty, edir.string());
    Manifest back = read_manifest(edir.string());
    CHECK(back.trials.empty());
    CHECK(read_all(edir.string(), back).empty());

    // bad magic
    const fs::path bad = dir / "bad.bin";
    std::ofstream(bad, std::ios::binary) << "NOTATRIALxxxxxxxxxxxxxxxxxxxx";
    CHECK_THROWS_AS(read_trial(bad.string()), FormatError);

    fs::remove_all(dir);
    fs::remove_all(edir);
}

TEST_CASE("spec json round trip rejects unknown keys") {
    SynthSpec spec = small_spec(12.0);
    SynthSpec back = spec_from_json(spec_to_json(spec));
    CHECK(spec_to_json(back) == spec_to_json(spec));
    CHECK_THROWS_AS(spec_from_json("{\"snr\": 3}"), ConfigError);
    CHECK_THROWS_AS(spec_from_json("{nope"), FormatError);
}

TEST_CASE("separability probe: easy spec learnable, shuffled labels at chance") {
    SynthSpec spec = small_spec(20.0, 31);
    auto layout = resolve_layout(spec.layout);
    std::vector<pre::EEGTrial> trials;
    for (int s = 0; s < spec.n_subjects; ++s)
        for (int b = 0; b < spec.blocks_per_subject; ++b)
            for (int i = 0; i < spec.trials_per_block; ++i)
                trials.push_back(generate_trial(spec, layout, s, b, i, (s + b + i) % 5));

    const double acc = separability_probe(trials, layout);
    CHECK(acc >= 0.7);

    // shuffled labels: accuracy within the chance interval for n trials
    Rng rng(99);
    std::vector<int> labels;
    for (const auto& t : trials) labels.push_back(t.label);
    rng.shuffle(labels);
    auto shuffled = trials;
    for (size_t i = 0; i < shuffled.size(); ++i) shuffled[i].label = labels[i];
    const double chance_acc = separability_probe(shuffled, layout);
    const double n = static_cast<double>(trials.size());
    const double sigma = std::sqrt(0.2 * 0.8 / n);
    CHECK(chance_acc <= 0.2 + 3.0 * sigma);  // generous z for a single draw

    // single-class container errors
    auto mono = trials;
    for (auto& t : mono) t.label = 2;
    CHECK_THROWS_AS(separability_probe(mono, layout), ConfigError);
}
