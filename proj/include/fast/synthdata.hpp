#pragma once

#include <string>
#include <vector>

#include "fast/montage.hpp"
#include "fast/preprocess.hpp"

namespace fast::synth {

// Planted class signature: an oscillatory burst at each utterance onset in a
// set of M8 regions.
struct ClassSignature {
    std::vector<std::string> regions;
    double carrier_hz = 10.0;
    double burst_seconds = 1.0;
    double decay = 0.9;  // per-utterance amplitude factor, in (0,1]
};

struct SynthSpec {
    std::uint64_t seed = 1;
    int n_subjects = 5;
    int blocks_per_subject = 5;
    int trials_per_block = 20;
    int n_classes = 5;
    std::string layout = "std62";  // layout id or path to a layout file
    double sample_rate = 200.0;
    double task_seconds = 10.0;  // five 2 s utterances
    double pre_seconds = 1.0;    // pre-cue baseline
    double post_seconds = 1.0;
    double snr_db = 20.0;        // burst amplitude over background rms
    double noise_rms_uv = 10.0;
    double common_mode_frac = 0.1;
    double subject_variability = 0.1;
    std::vector<ClassSignature> signatures;  // size n_classes

    void validate() const;
    std::int64_t trial_samples() const;
    std::int64_t cue_onset_samples() const;
};

SynthSpec default_spec();
SynthSpec spec_from_json(const std::string& text);
std::string spec_to_json(const SynthSpec& spec);

struct TrialMeta {
    std::string file;
    int subject = 0;
    int block = 0;
    int label = 0;
};

struct Manifest {
    montage::ChannelLayout layout;
    double sample_rate = 200.0;
    double cue_onset_s = 1.0;
    int n_classes = 5;
    std::vector<TrialMeta> trials;
};

// Resolve the spec's layout id (built-in "std62" or a file path).
montage::ChannelLayout resolve_layout(const std::string& id);

// Deterministic generation: one trial's stream is seeded from
// (spec seed, subject, block, trial), so concurrent generation partitions the
// seed space.
pre::EEGTrial generate_trial(const SynthSpec& spec, const montage::ChannelLayout& layout,
                             int subject, int block, int trial_in_block, int label);

// Generate the full container on disk and return its manifest.
Manifest generate(const SynthSpec& spec, const std::string& out_dir);

void write_manifest(const Manifest& m, const std::string& dir);
Manifest read_manifest(const std::string& dir);

void write_trial(const std::string& path, const pre::EEGTrial& t);
pre::EEGTrial read_trial(const std::string& path);

// Load every trial in manifest order, with subject/block/cue metadata filled.
std::vector<pre::EEGTrial> read_all(const std::string& dir, const Manifest& m);

void write_container(const Manifest& m, const std::vector<pre::EEGTrial>& trials,
                     const std::string& dir);

// Nearest-centroid classifier on per-region log-bandpower features
// (4-40 Hz in 4 Hz bins), held-out by subject. An independent check that the
// planted task is learnable at all.
double separability_probe(const std::vector<pre::EEGTrial>& trials,
                          const montage::ChannelLayout& layout);

// Mean per-channel band power around a carrier, for the planted-energy checks.
double bandpower(const pre::EEGTrial& t, const std::vector<int>& channels, double lo_hz,
                 double hi_hz);

}  // namespace fast::synth
