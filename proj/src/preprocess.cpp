#include "fast/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace fast::pre {

namespace {

// Hamming-windowed sinc lowpass with cutoff at the -6 dB point.
std::vector<double> lowpass(double fc_hz, int taps, double fs) {
    const int M = (taps - 1) / 2;
    const double fc = fc_hz / fs;
    std::vector<double> h(static_cast<size_t>(taps));
    for (int n = 0; n < taps; ++n) {
        const int k = n - M;
        double s = (k == 0) ? 2.0 * fc : std::sin(2.0 * M_PI * fc * k) / (M_PI * k);
        const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (taps - 1));
        h[static_cast<size_t>(n)] = s * w;
    }
    return h;
}

void convolve_causal(const std::vector<double>& x, const std::vector<double>& h,
                     std::vector<double>& y) {
    const int N = static_cast<int>(x.size()), K = static_cast<int>(h.size());
    y.assign(x.size(), 0.0);
    for (int i = 0; i < N; ++i) {
        double acc = 0.0;
        const int kmax = std::min(K - 1, i);
        for (int k = 0; k <= kmax; ++k) acc += h[static_cast<size_t>(k)] * x[static_cast<size_t>(i - k)];
        y[static_cast<size_t>(i)] = acc;
    }
}

}  // namespace

int SegmentPlan::window_samples(double rate) const {
    return static_cast<int>(std::lround(window_s * rate));
}

int SegmentPlan::stride_samples(double rate) const {
    return static_cast<int>(std::lround(stride_s * rate));
}

int SegmentPlan::count(std::int64_t total_samples, double rate) const {
    const int w = window_samples(rate), st = stride_samples(rate);
    if (w < 1 || st < 1) throw ConfigError("segment plan: window/stride below one sample");
    if (total_samples < w)
        throw ShapeError("segment plan: window " + std::to_string(w) + " longer than trial " +
                         std::to_string(total_samples));
    return static_cast<int>((total_samples - w) / st) + 1;
}

std::vector<double> design_fir(const FilterSpec& spec, double sample_rate) {
    const double nyquist = sample_rate / 2.0;
    if (spec.taps < 3 || spec.taps % 2 == 0)
        throw ConfigError("design_fir: tap count must be odd and >= 3, got " + std::to_string(spec.taps));
    if (!(spec.lo_hz > 0.0) || !(spec.hi_hz > spec.lo_hz) || spec.hi_hz >= nyquist)
        throw ConfigError("design_fir: band edges must satisfy 0 < lo < hi < Nyquist");
    std::vector<double> hi = lowpass(spec.hi_hz, spec.taps, sample_rate);
    std::vector<double> lo = lowpass(spec.lo_hz, spec.taps, sample_rate);
    std::vector<double> h(static_cast<size_t>(spec.taps));
    for (int n = 0; n < spec.taps; ++n)
        h[static_cast<size_t>(n)] = hi[static_cast<size_t>(n)] - lo[static_cast<size_t>(n)];
    if (spec.kind == FilterKind::bandstop) {
        // spectral inversion: delta at center minus the bandpass
        for (auto& v : h) v = -v;
        h[static_cast<size_t>((spec.taps - 1) / 2)] += 1.0;
    }
    return h;
}

EEGTrial apply_zero_phase(const std::vector<double>& coeffs, const EEGTrial& x) {
    const int taps = static_cast<int>(coeffs.size());
    if (taps < 1) throw ConfigError("apply_zero_phase: empty filter");
    const std::int64_t n = x.samples();
    if (n <= 3LL * taps)
        throw ShapeError("apply_zero_phase: trial of " + std::to_string(n) +
                         " samples is not longer than 3x filter length " + std::to_string(3 * taps));
    if (taps == 1) {
        EEGTrial out = x;
        for (auto& v : out.data.v) v = static_cast<float>(coeffs[0] * coeffs[0] * v);
        return out;
    }
    const int P = taps - 1;
    EEGTrial out = x;
    std::vector<double> ext(static_cast<size_t>(n + 2 * P));
    std::vector<double> buf;
    for (int c = 0; c < x.channels(); ++c) {
        // reflection padding on both ends
        for (int i = 0; i < P; ++i)
            ext[static_cast<size_t>(i)] = x.data.at(c, P - i);
        for (std::int64_t i = 0; i < n; ++i)
            ext[static_cast<size_t>(P + i)] = x.data.at(c, static_cast<int>(i));
        for (int i = 0; i < P; ++i)
            ext[static_cast<size_t>(P + n + i)] = x.data.at(c, static_cast<int>(n - 2 - i));
        convolve_causal(ext, coeffs, buf);
        std::reverse(buf.begin(), buf.end());
        convolve_causal(buf, coeffs, ext);
        std::reverse(ext.begin(), ext.end());
        for (std::int64_t i = 0; i < n; ++i)
            out.data.at(c, static_cast<int>(i)) = static_cast<float>(ext[static_cast<size_t>(P + i)]);
    }
    return out;
}

EEGTrial decimate(const EEGTrial& x, double target_rate) {
    if (!(target_rate > 0.0)) throw ConfigError("decimate: target rate must be positive");
    const double ratio = x.sample_rate / target_rate;
    const int factor = static_cast<int>(std::lround(ratio));
    if (std::abs(ratio - factor) > 1e-9 || factor < 1)
        throw ConfigError("decimate: source rate " + std::to_string(x.sample_rate) +
                          " not an integer multiple of target " + std::to_string(target_rate));
    if (factor == 1) return x;
    const std::int64_t n_out = (x.samples() + factor - 1) / factor;
    EEGTrial out = x;
    out.data = TensorF({x.channels(), static_cast<int>(n_out)});
    for (int c = 0; c < x.channels(); ++c)
        for (std::int64_t i = 0; i < n_out; ++i)
            out.data.at(c, static_cast<int>(i)) = x.data.at(c, static_cast<int>(i * factor));
    out.sample_rate = target_rate;
    out.cue_onset = x.cue_onset / factor;
    return out;
}

EEGTrial baseline_correct(const EEGTrial& x, double baseline_s) {
    const std::int64_t blen = static_cast<std::int64_t>(std::lround(baseline_s * x.sample_rate));
    if (blen < 1) throw ConfigError("baseline_correct: baseline window below one sample");
    if (x.cue_onset < blen)
        throw ShapeError("baseline_correct: cue at sample " + std::to_string(x.cue_onset) +
                         " leaves less than " + std::to_string(blen) + " pre-cue samples");
    EEGTrial out = x;
    for (int c = 0; c < x.channels(); ++c) {
        double mean = 0.0;
        for (std::int64_t i = x.cue_onset - blen; i < x.cue_onset; ++i)
            mean += x.data.at(c, static_cast<int>(i));
        mean /= static_cast<double>(blen);
        for (std::int64_t i = 0; i < x.samples(); ++i)
            out.data.at(c, static_cast<int>(i)) =
                static_cast<float>(x.data.at(c, static_cast<int>(i)) - mean);
    }
    return out;
}

std::vector<TensorF> segment(const EEGTrial& x, const SegmentPlan& plan) {
    const int S = plan.count(x.samples(), x.sample_rate);
    const int w = plan.window_samples(x.sample_rate);
    const int st = plan.stride_samples(x.sample_rate);
    std::vector<TensorF> out;
    out.reserve(static_cast<size_t>(S));
    for (int s = 0; s < S; ++s) {
        TensorF seg({x.channels(), w});
        const int start = s * st;
        for (int c = 0; c < x.channels(); ++c)
            for (int t = 0; t < w; ++t) seg.at(c, t) = x.data.at(c, start + t);
        out.push_back(std::move(seg));
    }
    return out;
}

EEGTrial utterance_crop(const EEGTrial& x, int k) {
    if (k < 1 || k > 5) throw ConfigError("utterance_crop: k must be in 1..5, got " + std::to_string(k));
    const std::int64_t len = static_cast<std::int64_t>(std::lround(2.0 * k * x.sample_rate));
    if (x.cue_onset + len > x.samples())
        throw ShapeError("utterance_crop: trial too short for " + std::to_string(k) + " utterances");
    EEGTrial out = x;
    out.data = TensorF({x.channels(), static_cast<int>(len)});
    for (int c = 0; c < x.channels(); ++c)
        for (std::int64_t i = 0; i < len; ++i)
            out.data.at(c, static_cast<int>(i)) = x.data.at(c, static_cast<int>(x.cue_onset + i));
    out.cue_onset = 0;
    return out;
}

bool reject_artifacts(const EEGTrial& x, double threshold_uv) {
    if (!(threshold_uv > 0.0)) throw ConfigError("reject_artifacts: threshold must be positive");
    for (float v : x.data.v)
        if (std::abs(static_cast<double>(v)) > threshold_uv) return true;
    return false;
}

bool preprocess_trial(EEGTrial& trial, const PreprocessOptions& opts) {
    if (opts.bandpass) {
        FilterSpec bp{FilterKind::bandpass, opts.bp_lo_hz, opts.bp_hi_hz, opts.bp_taps, true};
        trial = apply_zero_phase(design_fir(bp, trial.sample_rate), trial);
    }
    if (opts.notch) {
        FilterSpec ns{FilterKind::bandstop, opts.notch_lo_hz, opts.notch_hi_hz, opts.notch_taps, true};
        trial = apply_zero_phase(design_fir(ns, trial.sample_rate), trial);
    }
    if (opts.target_rate > 0.0 && opts.target_rate != trial.sample_rate)
        trial = decimate(trial, opts.target_rate);
    if (opts.baseline_s > 0.0) trial = baseline_correct(trial, opts.baseline_s);
    if (opts.reject_uv > 0.0 && reject_artifacts(trial, opts.reject_uv)) return false;
    return true;
}

}  // namespace fast::pre
