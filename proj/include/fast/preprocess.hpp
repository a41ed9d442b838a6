#pragma once

#include <string>
#include <vector>

#include "fast/tensor.hpp"

namespace fast::pre {

// One labeled epoch: channels x samples in microvolts, cue at a known sample.
struct EEGTrial {
    TensorF data;          // channels x samples
    double sample_rate = 200.0;
    int label = 0;         // class id 0..4
    int subject = 0;
    int block = 0;
    std::int64_t cue_onset = 0;  // sample index of t = 0

    int channels() const { return data.extent(0); }
    std::int64_t samples() const { return data.extent(1); }
};

enum class FilterKind { bandpass, bandstop };

struct FilterSpec {
    FilterKind kind = FilterKind::bandpass;
    double lo_hz = 1.0;
    double hi_hz = 40.0;
    int taps = 601;  // odd (linear phase type I)
    bool zero_phase = true;
};

struct SegmentPlan {
    double window_s = 1.0;
    double stride_s = 0.5;

    int window_samples(double rate) const;
    int stride_samples(double rate) const;
    // S = floor((T - window) / stride) + 1
    int count(std::int64_t total_samples, double rate) const;
};

// Hamming-windowed sinc FIR design; bandstop via spectral inversion of the
// matching bandpass.
std::vector<double> design_fir(const FilterSpec& spec, double sample_rate);

// Forward-backward application with reflection padding (zero net group delay).
EEGTrial apply_zero_phase(const std::vector<double>& coeffs, const EEGTrial& x);

// Keep every k-th sample; requires an integer rate ratio.
EEGTrial decimate(const EEGTrial& x, double target_rate);

// Subtract the per-channel mean of [cue - baseline, cue) from the whole trial.
EEGTrial baseline_correct(const EEGTrial& x, double baseline_s);

// Sliding-window segmentation in temporal order.
std::vector<TensorF> segment(const EEGTrial& x, const SegmentPlan& plan);

// Crop to the first k utterances: [cue, cue + k*2s). k = 5 keeps the full
// 10 s task window.
EEGTrial utterance_crop(const EEGTrial& x, int k);

// Keep/drop decision: drop when any |sample| strictly exceeds the threshold.
bool reject_artifacts(const EEGTrial& x, double threshold_uv);

struct PreprocessOptions {
    bool bandpass = true;
    double bp_lo_hz = 1.0;
    double bp_hi_hz = 40.0;
    int bp_taps = 601;
    bool notch = true;
    double notch_lo_hz = 49.0;
    double notch_hi_hz = 51.0;
    int notch_taps = 401;
    double target_rate = 0.0;  // 0 = keep the input rate
    double baseline_s = 1.0;
    double reject_uv = 0.0;  // 0 = rejection disabled
};

// Full conditioning pipeline for one trial:
// bandpass -> notch -> decimate -> baseline-correct. Returns false when the
// trial is rejected by the amplitude threshold.
bool preprocess_trial(EEGTrial& trial, const PreprocessOptions& opts);

}  // namespace fast::pre
