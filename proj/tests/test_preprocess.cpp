#include <cmath>

#include "doctest.h"
#include "fast/preprocess.hpp"
#include "fast/rng.hpp"
#include "oracles.hpp"

using namespace fast;
using namespace fast::pre;

namespace {

EEGTrial make_trial(int channels, std::int64_t samples, double rate, std::int64_t cue) {
    EEGTrial t;
    t.data = TensorF({channels, static_cast<int>(samples)});
    t.sample_rate = rate;
    t.cue_onset = cue;
    return t;
}

EEGTrial sine_trial(double freq, double rate, std::int64_t samples, double amp = 1.0) {
    EEGTrial t = make_trial(1, samples, rate, 0);
    for (std::int64_t i = 0; i < samples; ++i)
        t.data.at(0, static_cast<int>(i)) =
            static_cast<float>(amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / rate));
    return t;
}

double rms_interior(const EEGTrial& t, int margin) {
    double acc = 0.0;
    std::int64_t n = 0;
    for (std::int64_t i = margin; i < t.samples() - margin; ++i) {
        acc += static_cast<double>(t.data.at(0, static_cast<int>(i))) *
               static_cast<double>(t.data.at(0, static_cast<int>(i)));
        ++n;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace

TEST_CASE("FIR design meets the band targets (FFT-of-impulse-response oracle)") {
    FilterSpec bp{FilterKind::bandpass, 1.0, 40.0, 601, true};
    auto h = design_fir(bp, 200.0);
    CHECK(static_cast<int>(h.size()) == 601);
    // passband within +-1 dB at 10 and 25 Hz
    CHECK(std::abs(oracle::to_db(oracle::response_mag(h, 10.0, 200.0))) <= 1.0);
    CHECK(std::abs(oracle::to_db(oracle::response_mag(h, 25.0, 200.0))) <= 1.0);
    // stopbands at least 40 dB down at 0.1 and 80 Hz
    CHECK(oracle::to_db(oracle::response_mag(h, 0.1, 200.0)) <= -40.0);
    CHECK(oracle::to_db(oracle::response_mag(h, 80.0, 200.0)) <= -40.0);

    FilterSpec ns{FilterKind::bandstop, 49.0, 51.0, 401, true};
    auto g = design_fir(ns, 200.0);
    CHECK(oracle::to_db(oracle::response_mag(g, 50.0, 200.0)) <= -40.0);
    CHECK(std::abs(oracle::to_db(oracle::response_mag(g, 10.0, 200.0))) <= 0.1);

    CHECK_THROWS_AS(design_fir(FilterSpec{FilterKind::bandpass, 1.0, 120.0, 601, true}, 200.0),
                    ConfigError);
    CHECK_THROWS_AS(design_fir(FilterSpec{FilterKind::bandpass, 1.0, 40.0, 600, true}, 200.0),
                    ConfigError);
}

TEST_CASE("bandpass passes a 10 Hz sine within 1 dB") {
    FilterSpec bp{FilterKind::bandpass, 1.0, 40.0, 601, true};
    auto h = design_fir(bp, 200.0);
    EEGTrial t = sine_trial(10.0, 200.0, 4000);
    EEGTrial y = apply_zero_phase(h, t);
    const double gain_db = 20.0 * std::log10(rms_interior(y, 700) / rms_interior(t, 700));
    CHECK(std::abs(gain_db) <= 1.0);
}

TEST_CASE("notch attenuates a 50 Hz sine by at least 40 dB") {
    FilterSpec ns{FilterKind::bandstop, 49.0, 51.0, 401, true};
    auto h = design_fir(ns, 200.0);
    EEGTrial t = sine_trial(50.0, 200.0, 4000);
    EEGTrial y = apply_zero_phase(h, t);
    const double gain_db = 20.0 * std::log10(rms_interior(y, 500) / rms_interior(t, 500));
    CHECK(gain_db <= -40.0);
}

TEST_CASE("zero-phase application basics") {
    FilterSpec bp{FilterKind::bandpass, 1.0, 40.0, 601, true};
    auto h = design_fir(bp, 200.0);

    // all-zero in, all-zero out
    EEGTrial z = make_trial(2, 2400, 200.0, 200);
    EEGTrial zy = apply_zero_phase(h, z);
    for (float v : zy.data.v) CHECK(v == 0.0f);

    // DC offset is in the stopband: interior mean ~ 0
    EEGTrial dc = make_trial(1, 2400, 200.0, 200);
    for (auto& v : dc.data.v) v = 10.0f;
    EEGTrial dy = apply_zero_phase(h, dc);
    double mean = 0.0;
    for (std::int64_t i = 700; i < 1700; ++i) mean += dy.data.at(0, static_cast<int>(i));
    mean /= 1000.0;
    CHECK(std::abs(mean) < 1e-3);

    // single unit tap applied twice is the identity
    Rng rng(3);
    EEGTrial r = make_trial(1, 100, 200.0, 0);
    for (auto& v : r.data.v) v = static_cast<float>(rng.normal());
    EEGTrial ry = apply_zero_phase({1.0}, r);
    EEGTrial ry2 = apply_zero_phase({1.0}, ry);
    for (std::int64_t i = 0; i < r.samples(); ++i)
        CHECK(ry2.data.at(0, static_cast<int>(i)) == r.data.at(0, static_cast<int>(i)));

    // trial shorter than 3x filter length errors
    EEGTrial shorty = make_trial(1, 1800, 200.0, 0);
    CHECK_THROWS_AS(apply_zero_phase(h, shorty), ShapeError);
}

TEST_CASE("zero phase preserves the peak index of a symmetric pulse") {
    FilterSpec bp{FilterKind::bandpass, 1.0, 40.0, 401, true};
    auto h = design_fir(bp, 200.0);
    EEGTrial t = make_trial(1, 2400, 200.0, 0);
    const int center = 1200;
    for (int i = -60; i <= 60; ++i) {
        const double w = std::cos(M_PI * i / 120.0);
        t.data.at(0, center + i) = static_cast<float>(w * w);
    }
    EEGTrial y = apply_zero_phase(h, t);
    int argmax = 0;
    for (std::int64_t i = 0; i < y.samples(); ++i)
        if (y.data.at(0, static_cast<int>(i)) > y.data.at(0, argmax)) argmax = static_cast<int>(i);
    CHECK(argmax == center);
}

TEST_CASE("decimate") {
    EEGTrial t = make_trial(2, 50000, 5000.0, 5000);
    EEGTrial d = decimate(t, 200.0);
    CHECK(d.samples() == 2000);
    CHECK(d.sample_rate == 200.0);
    CHECK(d.cue_onset == 200);

    // factor 1 -> identity
    EEGTrial same = decimate(d, 200.0);
    CHECK(same.data.v == d.data.v);

    // 10 Hz sine decimated x25 keeps its spectral peak at 10 Hz
    EEGTrial s = sine_trial(10.0, 5000.0, 50000);
    EEGTrial sd = decimate(s, 200.0);
    std::vector<double> sig(sd.data.v.begin(), sd.data.v.end());
    const double p10 = oracle::response_mag(sig, 10.0, 200.0);
    for (double f : {2.0, 5.0, 20.0, 40.0})
        CHECK(p10 > 10.0 * oracle::response_mag(sig, f, 200.0));

    CHECK_THROWS_AS(decimate(t, 300.0), ConfigError);
}

TEST_CASE("decimate composition on bandlimited input") {
    // decimate(a) then decimate(b) equals decimate(a*b)
    EEGTrial s = sine_trial(5.0, 6000.0, 60000);
    EEGTrial once = decimate(s, 200.0);                    // factor 30
    EEGTrial twice = decimate(decimate(s, 1200.0), 200.0); // factors 5 then 6
    REQUIRE(once.samples() == twice.samples());
    CHECK(once.data.v == twice.data.v);
    CHECK(once.sample_rate == twice.sample_rate);
}

TEST_CASE("segment count matches the plan formula for random shapes") {
    Rng rng(77);
    for (int rep = 0; rep < 200; ++rep) {
        const double rate = 100.0;
        const int total = 50 + static_cast<int>(rng.below(2000));
        const int w = 10 + static_cast<int>(rng.below(100));
        const int st = 1 + static_cast<int>(rng.below(60));
        SegmentPlan plan{w / rate, st / rate};
        if (total < w) {
            EEGTrial t = make_trial(1, total, rate, 0);
            CHECK_THROWS_AS(segment(t, plan), ShapeError);
            continue;
        }
        EEGTrial t = make_trial(1, total, rate, 0);
        const int want = (total - w) / st + 1;
        CHECK(static_cast<int>(segment(t, plan).size()) == want);
    }
}

TEST_CASE("baseline_correct") {
    // constant channel -> all zeros
    EEGTrial t = make_trial(1, 1000, 200.0, 200);
    for (auto& v : t.data.v) v = 4.5f;
    EEGTrial y = baseline_correct(t, 1.0);
    for (float v : y.data.v) CHECK(v == 0.0f);

    // zero-mean baseline -> unchanged
    EEGTrial z = make_trial(1, 1000, 200.0, 200);
    for (int i = 0; i < 200; ++i) z.data.at(0, i) = (i % 2 == 0) ? 1.0f : -1.0f;
    for (int i = 200; i < 1000; ++i) z.data.at(0, i) = static_cast<float>(i);
    EEGTrial zy = baseline_correct(z, 1.0);
    for (std::int64_t i = 0; i < z.samples(); ++i)
        CHECK(zy.data.at(0, static_cast<int>(i)) == z.data.at(0, static_cast<int>(i)));

    // ramp channel: shift equals the direct-sum mean of the baseline window
    EEGTrial r = make_trial(1, 1000, 200.0, 200);
    for (int i = 0; i < 1000; ++i) r.data.at(0, i) = 0.25f * static_cast<float>(i);
    double mean = 0.0;
    for (int i = 0; i < 200; ++i) mean += 0.25 * i;
    mean /= 200.0;
    EEGTrial ry = baseline_correct(r, 1.0);
    for (int i = 0; i < 1000; i += 97)
        CHECK(ry.data.at(0, i) == doctest::Approx(0.25 * i - mean).epsilon(1e-5));

    // idempotent
    EEGTrial ry2 = baseline_correct(ry, 1.0);
    for (std::int64_t i = 0; i < ry.samples(); ++i)
        CHECK(ry2.data.at(0, static_cast<int>(i)) ==
              doctest::Approx(ry.data.at(0, static_cast<int>(i))).epsilon(1e-6));

    // insufficient pre-cue data
    EEGTrial bad = make_trial(1, 1000, 200.0, 100);
    CHECK_THROWS_AS(baseline_correct(bad, 1.0), ShapeError);
}

TEST_CASE("segment counts follow the plan formula") {
    SegmentPlan plan{1.0, 0.5};
    EEGTrial t10 = make_trial(3, 2000, 200.0, 0);
    CHECK(segment(t10, plan).size() == 19);

    SegmentPlan whole{10.0, 0.5};
    CHECK(segment(t10, whole).size() == 1);

    EEGTrial t2 = make_trial(3, 400, 200.0, 0);
    CHECK(segment(t2, plan).size() == 3);

    // segments are stride-spaced views in temporal order
    EEGTrial r = make_trial(1, 700, 100.0, 0);
    for (int i = 0; i < 700; ++i) r.data.at(0, i) = static_cast<float>(i);
    SegmentPlan p2{2.0, 1.0};
    auto segs = segment(r, p2);
    CHECK(static_cast<int>(segs.size()) == (700 - 200) / 100 + 1);
    for (size_t s = 0; s < segs.size(); ++s) {
        CHECK(segs[s].shape == Shape{1, 200});
        CHECK(segs[s].at(0, 0) == static_cast<float>(100 * s));
    }

    SegmentPlan toolong{60.0, 0.5};
    CHECK_THROWS_AS(segment(t2, toolong), ShapeError);
}

TEST_CASE("utterance_crop") {
    EEGTrial t = make_trial(2, 2400, 200.0, 200);
    for (int i = 0; i < 2400; ++i) t.data.at(0, i) = static_cast<float>(i);
    EEGTrial k5 = utterance_crop(t, 5);
    CHECK(k5.samples() == 2000);
    CHECK(k5.cue_onset == 0);
    CHECK(k5.data.at(0, 0) == 200.0f);
    CHECK(utterance_crop(t, 1).samples() == 400);
    CHECK(utterance_crop(t, 3).samples() == 1200);
    CHECK_THROWS_AS(utterance_crop(t, 0), ConfigError);
    CHECK_THROWS_AS(utterance_crop(t, 6), ConfigError);
}

TEST_CASE("reject_artifacts strict-threshold rule") {
    EEGTrial t = make_trial(1, 100, 200.0, 0);
    CHECK_FALSE(reject_artifacts(t, 100.0));  // all-zero: keep
    t.data.at(0, 50) = 500.0f;
    CHECK(reject_artifacts(t, 100.0));  // spike: drop
    t.data.at(0, 50) = 100.0f;
    CHECK_FALSE(reject_artifacts(t, 100.0));  // exactly at threshold: keep
    CHECK_THROWS_AS(reject_artifacts(t, 0.0), ConfigError);
}
