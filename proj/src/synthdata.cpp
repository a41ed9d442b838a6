#include "fast/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fast/rng.hpp"
#include "json.hpp"

namespace fast::synth {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// spec
// ---------------------------------------------------------------------------

void SynthSpec::validate() const {
    if (n_subjects < 1 || blocks_per_subject < 1 || trials_per_block < 1)
        throw ConfigError("synth spec: counts must be >= 1");
    if (n_classes < 2) throw ConfigError("synth spec: need at least 2 classes");
    if (static_cast<int>(signatures.size()) != n_classes)
        throw ConfigError("synth spec: need one signature per class");
    if (!(sample_rate > 0.0) || !(task_seconds > 0.0))
        throw ConfigError("synth spec: bad rate or duration");
    if (!std::isfinite(snr_db)) throw ConfigError("synth spec: snr_db must be finite");
    std::set<std::pair<std::string, double>> seen;
    for (const auto& sig : signatures) {
        if (sig.regions.empty()) throw ConfigError("synth spec: signature with no regions");
        if (!(sig.decay > 0.0) || sig.decay > 1.0)
            throw ConfigError("synth spec: decay must be in (0,1]");
        for (const auto& r : sig.regions)
            if (!seen.insert({r, sig.carrier_hz}).second)
                throw ConfigError("synth spec: class signatures must be pairwise distinct in "
                                  "(region, carrier) space");
    }
}

std::int64_t SynthSpec::trial_samples() const {
    return static_cast<std::int64_t>(std::lround((pre_seconds + task_seconds + post_seconds) *
                                                 sample_rate));
}

std::int64_t SynthSpec::cue_onset_samples() const {
    return static_cast<std::int64_t>(std::lround(pre_seconds * sample_rate));
}

SynthSpec default_spec() {
    SynthSpec s;
    s.signatures = {
        {{"frontal"}, 6.0, 1.0, 0.9},        {{"left_temporal"}, 10.0, 1.0, 0.9},
        {{"right_temporal"}, 14.0, 1.0, 0.9}, {{"precentral"}, 18.0, 1.0, 0.9},
        {{"parietal"}, 24.0, 1.0, 0.9},
    };
    return s;
}

SynthSpec spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("synth spec: bad JSON: ") + e.what());
    }
    SynthSpec s = default_spec();
    static const std::set<std::string> known{
        "seed",         "n_subjects",       "blocks_per_subject", "trials_per_block",
        "n_classes",    "layout",           "sample_rate",        "task_seconds",
        "pre_seconds",  "post_seconds",     "snr_db",             "noise_rms_uv",
        "common_mode_frac", "subject_variability", "signatures"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("synth spec: unknown key '" + it.key() + "'");
    if (j.count("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.count("n_subjects")) s.n_subjects = j["n_subjects"].get<int>();
    if (j.count("blocks_per_subject")) s.blocks_per_subject = j["blocks_per_subject"].get<int>();
    if (j.count("trials_per_block")) s.trials_per_block = j["trials_per_block"].get<int>();
    if (j.count("n_classes")) s.n_classes = j["n_classes"].get<int>();
    if (j.count("layout")) s.layout = j["layout"].get<std::string>();
    if (j.count("sample_rate")) s.sample_rate = j["sample_rate"].get<double>();
    if (j.count("task_seconds")) s.task_seconds = j["task_seconds"].get<double>();
    if (j.count("pre_seconds")) s.pre_seconds = j["pre_seconds"].get<double>();
    if (j.count("post_seconds")) s.post_seconds = j["post_seconds"].get<double>();
    if (j.count("snr_db")) s.snr_db = j["snr_db"].get<double>();
    if (j.count("noise_rms_uv")) s.noise_rms_uv = j["noise_rms_uv"].get<double>();
    if (j.count("common_mode_frac")) s.common_mode_frac = j["common_mode_frac"].get<double>();
    if (j.count("subject_variability")) s.subject_variability = j["subject_variability"].get<double>();
    if (j.count("signatures")) {
        s.signatures.clear();
        for (const auto& sj : j["signatures"]) {
            ClassSignature sig;
            sig.regions = sj.at("regions").get<std::vector<std::string>>();
            sig.carrier_hz = sj.at("carrier_hz").get<double>();
            if (sj.count("burst_seconds")) sig.burst_seconds = sj["burst_seconds"].get<double>();
            if (sj.count("decay")) sig.decay = sj["decay"].get<double>();
            s.signatures.push_back(std::move(sig));
        }
    }
    s.validate();
    return s;
}

std::string spec_to_json(const SynthSpec& s) {
    json sigs = json::array();
    for (const auto& g : s.signatures)
        sigs.push_back(json{{"regions", g.regions},
                            {"carrier_hz", g.carrier_hz},
                            {"burst_seconds", g.burst_seconds},
                            {"decay", g.decay}});
    return json{{"seed", s.seed},
                {"n_subjects", s.n_subjects},
                {"blocks_per_subject", s.blocks_per_subject},
                {"trials_per_block", s.trials_per_block},
                {"n_classes", s.n_classes},
                {"layout", s.layout},
                {"sample_rate", s.sample_rate},
                {"task_seconds", s.task_seconds},
                {"pre_seconds", s.pre_seconds},
                {"post_seconds", s.post_seconds},
                {"snr_db", s.snr_db},
                {"noise_rms_uv", s.noise_rms_uv},
                {"common_mode_frac", s.common_mode_frac},
                {"subject_variability", s.subject_variability},
                {"signatures", sigs}}
        .dump(2);
}

montage::ChannelLayout resolve_layout(const std::string& id) {
    if (id == "std62") return montage::standard62();
    return montage::load_layout_file(id);
}

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

namespace {

// Paul Kellet's economy pink-noise filter over seeded white noise.
struct PinkNoise {
    Rng& rng;
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    explicit PinkNoise(Rng& r) : rng(r) {}
    double next() {
        const double white = rng.normal();
        b0 = 0.99765 * b0 + white * 0.0990460;
        b1 = 0.96300 * b1 + white * 0.2965164;
        b2 = 0.57000 * b2 + white * 1.0526913;
        return b0 + b1 + b2 + white * 0.1848;
    }
};

std::vector<double> pink_series(Rng& rng, std::int64_t n, double rms) {
    PinkNoise pn(rng);
    std::vector<double> out(static_cast<size_t>(n));
    double acc = 0.0;
    for (auto& v : out) {
        v = pn.next();
        acc += v * v;
    }
    const double scale = rms / std::max(std::sqrt(acc / static_cast<double>(n)), 1e-12);
    for (auto& v : out) v *= scale;
    return out;
}

// radix-2 complex FFT, in place
void fft(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

std::vector<double> power_spectrum(const std::vector<double>& x) {
    size_t n = 1;
    while (n < x.size()) n <<= 1;
    std::vector<std::complex<double>> a(n, {0.0, 0.0});
    for (size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
    fft(a);
    std::vector<double> p(n / 2 + 1);
    for (size_t i = 0; i <= n / 2; ++i) p[i] = std::norm(a[i]);
    return p;
}

double band_sum(const std::vector<double>& spectrum, size_t padded_n, double fs, double lo,
                double hi) {
    double acc = 0.0;
    for (size_t i = 0; i < spectrum.size(); ++i) {
        const double f = fs * static_cast<double>(i) / static_cast<double>(padded_n);
        if (f >= lo && f < hi) acc += spectrum[i];
    }
    return acc;
}

}  // namespace

pre::EEGTrial generate_trial(const SynthSpec& spec, const montage::ChannelLayout& layout,
                             int subject, int block, int trial_in_block, int label) {
    const std::int64_t n = spec.trial_samples();
    const std::int64_t cue = spec.cue_onset_samples();
    const int C = layout.channel_count();

    pre::EEGTrial t;
    t.data = TensorF({C, static_cast<int>(n)});
    t.sample_rate = spec.sample_rate;
    t.label = label;
    t.subject = subject;
    t.block = block;
    t.cue_onset = cue;

    // per-trial noise streams
    Rng rng(seed_stream(spec.seed, {0x4e4f495345ull, static_cast<std::uint64_t>(subject),
                                    static_cast<std::uint64_t>(block),
                                    static_cast<std::uint64_t>(trial_in_block)}));
    std::vector<double> common = pink_series(rng, n, spec.noise_rms_uv * spec.common_mode_frac);
    std::vector<std::vector<double>> chan(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
        chan[static_cast<size_t>(c)] = pink_series(rng, n, spec.noise_rms_uv);
        for (std::int64_t i = 0; i < n; ++i)
            chan[static_cast<size_t>(c)][static_cast<size_t>(i)] += common[static_cast<size_t>(i)];
    }

    // subject-specific perturbations are functions of (seed, subject, ...)
    const auto& sig = spec.signatures[static_cast<size_t>(label)];
    const auto m8 = montage::build_partition(layout, montage::PartitionConfig::M8);
    const double A = spec.noise_rms_uv * std::pow(10.0, spec.snr_db / 20.0);
    const std::int64_t burst_len =
        static_cast<std::int64_t>(std::lround(sig.burst_seconds * spec.sample_rate));
    for (const std::string& region : sig.regions) {
        auto it = std::find(m8.region_names.begin(), m8.region_names.end(), region);
        if (it == m8.region_names.end())
            throw ConfigError("synth: signature region '" + region + "' not an M8 region");
        const size_t ri = static_cast<size_t>(it - m8.region_names.begin());
        Rng srng(seed_stream(spec.seed,
                             {0x5355424aull, static_cast<std::uint64_t>(subject), ri}));
        const double gain = std::exp(spec.subject_variability * srng.normal());
        for (int ci : m8.region_channels[ri]) {
            const double phase = srng.uniform(0.0, 2.0 * M_PI);
            auto& x = chan[static_cast<size_t>(ci)];
            for (int u = 0; u < 5; ++u) {
                const std::int64_t onset =
                    cue + static_cast<std::int64_t>(std::lround(2.0 * u * spec.sample_rate));
                const double amp = A * gain * std::pow(sig.decay, u);
                for (std::int64_t k = 0; k < burst_len && onset + k < n; ++k) {
                    const double tau = static_cast<double>(k) / spec.sample_rate;
                    const double env = std::sin(M_PI * static_cast<double>(k) /
                                                static_cast<double>(burst_len));
                    x[static_cast<size_t>(onset + k)] +=
                        amp * env * env * std::sin(2.0 * M_PI * sig.carrier_hz * tau + phase);
                }
            }
        }
    }

    for (int c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < n; ++i)
            t.data.at(c, static_cast<int>(i)) =
                static_cast<float>(chan[static_cast<size_t>(c)][static_cast<size_t>(i)]);
    return t;
}

// ---------------------------------------------------------------------------
// container I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kTrialMagic[8] = {'E', 'E', 'G', 'T', 'R', 'I', 'A', 'L'};
constexpr std::uint32_t kTrialVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("trial file: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint32_t f32_bits(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    return u;
}

float bits_f32(std::uint32_t u) {
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

}  // namespace

void write_trial(const std::string& path, const pre::EEGTrial& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write trial file: " + path);
    out.write(kTrialMagic, 8);
    write_u32(out, kTrialVersion);
    write_u32(out, static_cast<std::uint32_t>(t.channels()));
    write_u32(out, static_cast<std::uint32_t>(t.samples()));
    write_u32(out, f32_bits(static_cast<float>(t.sample_rate)));
    const unsigned char label = static_cast<unsigned char>(t.label);
    out.write(reinterpret_cast<const char*>(&label), 1);
    for (float v : t.data.v) write_u32(out, f32_bits(v));
    if (!out) throw IoError("trial write failed: " + path);
}

pre::EEGTrial read_trial(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trial file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kTrialMagic, 8) != 0)
        throw FormatError("trial file: bad magic in " + path);
    const std::uint32_t version = read_u32(in);
    if (version != kTrialVersion)
        throw FormatError("trial file: unsupported version " + std::to_string(version));
    const std::uint32_t channels = read_u32(in);
    const std::uint32_t samples = read_u32(in);
    const float rate = bits_f32(read_u32(in));
    unsigned char label;
    in.read(reinterpret_cast<char*>(&label), 1);
    if (!in) throw FormatError("trial file: truncated header in " + path);
    pre::EEGTrial t;
    t.data = TensorF({static_cast<int>(channels), static_cast<int>(samples)});
    t.sample_rate = rate;
    t.label = label;
    for (auto& v : t.data.v) v = bits_f32(read_u32(in));
    in.peek();
    if (!in.eof()) throw FormatError("trial file: trailing bytes in " + path);
    return t;
}

void write_manifest(const Manifest& m, const std::string& dir) {
    json trials = json::array();
    for (const auto& t : m.trials)
        trials.push_back(json{{"file", t.file},
                              {"subject", t.subject},
                              {"block", t.block},
                              {"label", t.label}});
    json j{{"version", 1},
           {"layout",
            json{{"reference", m.layout.reference},
                 {"ground", m.layout.ground},
                 {"labels", m.layout.labels}}},
           {"sample_rate", m.sample_rate},
           {"cue_onset_s", m.cue_onset_s},
           {"n_classes", m.n_classes},
           {"trials", trials}};
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw IoError("cannot write manifest in " + dir);
    out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw IoError("cannot open manifest in " + dir);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: bad JSON: ") + e.what());
    }
    Manifest m;
    m.layout = montage::make_layout(j.at("layout").at("labels").get<std::vector<std::string>>(),
                                    j.at("layout").at("reference").get<std::string>(),
                                    j.at("layout").at("ground").get<std::string>());
    m.sample_rate = j.at("sample_rate").get<double>();
    m.cue_onset_s = j.at("cue_onset_s").get<double>();
    m.n_classes = j.at("n_classes").get<int>();
    for (const auto& t : j.at("trials"))
        m.trials.push_back(TrialMeta{t.at("file").get<std::string>(), t.at("subject").get<int>(),
                                     t.at("block").get<int>(), t.at("label").get<int>()});
    return m;
}

std::vector<pre::EEGTrial> read_all(const std::string& dir, const Manifest& m) {
    std::vector<pre::EEGTrial> out;
    out.reserve(m.trials.size());
    const std::int64_t cue =
        static_cast<std::int64_t>(std::lround(m.cue_onset_s * m.sample_rate));
    for (const auto& meta : m.trials) {
        const fs::path p = fs::path(dir) / meta.file;
        if (!fs::exists(p))
            throw FormatError("container: manifest lists missing file " + meta.file);
        pre::EEGTrial t = read_trial(p.string());
        if (t.channels() != m.layout.channel_count())
            throw FormatError("container: trial " + meta.file + " has " +
                              std::to_string(t.channels()) + " channels, layout has " +
                              std::to_string(m.layout.channel_count()));
        if (t.label != meta.label)
            throw FormatError("container: label mismatch for " + meta.file);
        t.subject = meta.subject;
        t.block = meta.block;
        t.cue_onset = cue;
        out.push_back(std::move(t));
    }
    return out;
}

void write_container(const Manifest& m, const std::vector<pre::EEGTrial>& trials,
                     const std::string& dir) {
    if (m.trials.size() != trials.size())
        throw ConfigError("write_container: manifest/trial count mismatch");
    fs::create_directories(dir);
    for (size_t i = 0; i < trials.size(); ++i)
        write_trial((fs::path(dir) / m.trials[i].file).string(), trials[i]);
    write_manifest(m, dir);
}

Manifest generate(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    const montage::ChannelLayout layout = resolve_layout(spec.layout);
    fs::create_directories(out_dir);

    Manifest m;
    m.layout = layout;
    m.sample_rate = spec.sample_rate;
    m.cue_onset_s = spec.pre_seconds;
    m.n_classes = spec.n_classes;

    int counter = 0;
    for (int s = 0; s < spec.n_subjects; ++s) {
        for (int b = 0; b < spec.blocks_per_subject; ++b) {
            // balanced pseudo-random label order within each block
            std::vector<int> labels;
            for (int i = 0; i < spec.trials_per_block; ++i) labels.push_back(i % spec.n_classes);
            Rng lrng(seed_stream(spec.seed, {0x4c41424c53ull, static_cast<std::uint64_t>(s),
                                             static_cast<std::uint64_t>(b)}));
            lrng.shuffle(labels);
            for (int i = 0; i < spec.trials_per_block; ++i) {
                char name[64];
                std::snprintf(name, sizeof(name), "trial_%05d.bin", counter++);
                const int label = labels[static_cast<size_t>(i)];
                pre::EEGTrial t = generate_trial(spec, layout, s, b, i, label);
                write_trial((fs::path(out_dir) / name).string(), t);
                m.trials.push_back(TrialMeta{name, s, b, label});
            }
        }
    }
    write_manifest(m, out_dir);
    return m;
}

// ---------------------------------------------------------------------------
// separability probe
// ---------------------------------------------------------------------------

double bandpower(const pre::EEGTrial& t, const std::vector<int>& channels, double lo_hz,
                 double hi_hz) {
    size_t padded = 1;
    while (padded < static_cast<size_t>(t.samples())) padded <<= 1;
    double acc = 0.0;
    for (int c : channels) {
        std::vector<double> x(static_cast<size_t>(t.samples()));
        for (std::int64_t i = 0; i < t.samples(); ++i) x[static_cast<size_t>(i)] =
            t.data.at(c, static_cast<int>(i));
        auto spec = power_spectrum(x);
        acc += band_sum(spec, padded, t.sample_rate, lo_hz, hi_hz);
    }
    return acc / static_cast<double>(channels.size());
}

double separability_probe(const std::vector<pre::EEGTrial>& trials,
                          const montage::ChannelLayout& layout) {
    if (trials.empty()) throw ConfigError("separability_probe: empty container");
    std::set<int> classes, subjects;
    for (const auto& t : trials) {
        classes.insert(t.label);
        subjects.insert(t.subject);
    }
    if (classes.size() < 2) throw ConfigError("separability_probe: need at least 2 classes");

    const auto m8 = montage::build_partition(layout, montage::PartitionConfig::M8);
    const int n_bands = 9;  // 4-40 Hz in 4 Hz bins

    // features per trial: regions x bands log-bandpower
    std::vector<std::vector<double>> feats(trials.size());
    for (size_t i = 0; i < trials.size(); ++i) {
        std::vector<double>& f = feats[i];
        for (size_t ri = 0; ri < m8.region_names.size(); ++ri)
            for (int b = 0; b < n_bands; ++b) {
                const double lo = 4.0 + 4.0 * b, hi = lo + 4.0;
                f.push_back(std::log10(bandpower(trials[i], m8.region_channels[ri], lo, hi) + 1e-12));
            }
    }

    int correct = 0, total = 0;
    const int n_classes = *classes.rbegin() + 1;
    for (int held : subjects) {
        std::vector<std::vector<double>> centroid(static_cast<size_t>(n_classes),
                                                  std::vector<double>(feats[0].size(), 0.0));
        std::vector<int> count(static_cast<size_t>(n_classes), 0);
        for (size_t i = 0; i < trials.size(); ++i) {
            if (trials[i].subject == held) continue;
            auto& c = centroid[static_cast<size_t>(trials[i].label)];
            for (size_t k = 0; k < c.size(); ++k) c[k] += feats[i][k];
            count[static_cast<size_t>(trials[i].label)] += 1;
        }
        for (int cl = 0; cl < n_classes; ++cl) {
            if (count[static_cast<size_t>(cl)] == 0) continue;
            for (auto& v : centroid[static_cast<size_t>(cl)])
                v /= static_cast<double>(count[static_cast<size_t>(cl)]);
        }
        for (size_t i = 0; i < trials.size(); ++i) {
            if (trials[i].subject != held) continue;
            double best = 1e300;
            int arg = 0;
            for (int cl = 0; cl < n_classes; ++cl) {
                if (count[static_cast<size_t>(cl)] == 0) continue;
                double d = 0.0;
                for (size_t k = 0; k < feats[i].size(); ++k) {
                    const double diff = feats[i][k] - centroid[static_cast<size_t>(cl)][k];
                    d += diff * diff;
                }
                if (d < best) {
                    best = d;
                    arg = cl;
                }
            }
            correct += (arg == trials[i].label) ? 1 : 0;
            total += 1;
        }
    }
    if (total == 0) throw ConfigError("separability_probe: degenerate subject split");
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace fast::synth
