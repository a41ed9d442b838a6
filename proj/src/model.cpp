#include "fast/model.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace fast::model {

using nlohmann::json;

void FastConfig::validate() const {
    if (n_regions < 1) throw ConfigError("config: n_regions must be >= 1");
    if (static_cast<int>(region_channels.size()) != n_regions)
        throw ConfigError("config: region_channels must have n_regions entries");
    for (int c : region_channels)
        if (c < 1) throw ConfigError("config: region channel counts must be >= 1");
    if (token_width < 1 || conv_filters < 1) throw ConfigError("config: widths must be >= 1");
    if (tokenizer_depth < 2)
        throw ConfigError("config: tokenizer depth must be >= 2 (one spatial-temporal layer plus "
                          "at least one temporal layer)");
    if (spatial_depth < 0 || temporal_depth < 1) throw ConfigError("config: bad transformer depths");
    if (token_width % heads_spatial != 0)
        throw ConfigError("config: token_width not divisible by heads_spatial");
    if (model_dim() % heads_temporal != 0)
        throw ConfigError("config: model dim not divisible by heads_temporal");
    if (s_max < 1 || n_classes < 2) throw ConfigError("config: bad s_max/n_classes");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must be in [0,1)");
    if (conv_t_taps < 1 || temporal_kernel < 1 || pool_window < 1)
        throw ConfigError("config: kernel/pool extents must be >= 1");
}

FastConfig desk_config() {
    FastConfig cfg;
    cfg.token_width = 8;
    cfg.conv_filters = 4;
    cfg.conv_t_taps = 9;
    cfg.temporal_kernel = 5;
    cfg.tokenizer_depth = 2;
    cfg.spatial_depth = 1;
    cfg.temporal_depth = 1;
    cfg.heads_spatial = 2;
    cfg.heads_temporal = 2;
    cfg.head_hidden = 32;
    cfg.dropout = 0.0;
    return cfg;
}

namespace {

TensorF uniform_fan_in(Shape shape, std::int64_t fan_in, Rng& rng) {
    TensorF t(std::move(shape));
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.v) v = static_cast<float>(rng.uniform(-limit, limit));
    return t;
}

TensorF scaled_normal(Shape shape, double sigma, Rng& rng) {
    TensorF t(std::move(shape));
    for (auto& v : t.v) v = static_cast<float>(rng.normal(0.0, sigma));
    return t;
}

void add_bn(ParamStore& ps, const std::string& prefix, int c) {
    ps.add(prefix + ".gamma", TensorF::full({c}, 1.0f));
    ps.add(prefix + ".beta", TensorF::zeros({c}));
    ps.add(prefix + ".run_mean", TensorF::zeros({c}), /*trainable=*/false);
    ps.add(prefix + ".run_var", TensorF::full({c}, 1.0f), /*trainable=*/false);
}

void add_transformer_layer(ParamStore& ps, const std::string& prefix, int d, int mult, Rng& rng) {
    ps.add(prefix + ".attn.wq", uniform_fan_in({d, d}, d, rng));
    ps.add(prefix + ".attn.wk", uniform_fan_in({d, d}, d, rng));
    ps.add(prefix + ".attn.wv", uniform_fan_in({d, d}, d, rng));
    ps.add(prefix + ".attn.wo", uniform_fan_in({d, d}, d, rng));
    ps.add(prefix + ".ffn.w1", uniform_fan_in({d, d * mult}, d, rng));
    ps.add(prefix + ".ffn.b1", TensorF::zeros({d * mult}));
    ps.add(prefix + ".ffn.w2", uniform_fan_in({d * mult, d}, static_cast<std::int64_t>(d) * mult, rng));
    ps.add(prefix + ".ffn.b2", TensorF::zeros({d}));
    ps.add(prefix + ".ln.gamma", TensorF::full({d}, 1.0f));
    ps.add(prefix + ".ln.beta", TensorF::zeros({d}));
}

}  // namespace

ParamStore init_params(const FastConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed_stream(seed, {0x494e4954}));
    ParamStore ps;
    for (int r = 0; r < cfg.n_regions; ++r) {
        const std::string base = "st.r" + std::to_string(r);
        const int ch = cfg.region_channels[static_cast<size_t>(r)];
        ps.add(base + ".l1.conv_t.w",
               uniform_fan_in({cfg.conv_filters, 1, cfg.conv_t_taps}, cfg.conv_t_taps, rng));
        ps.add(base + ".l1.conv_s.w",
               uniform_fan_in({cfg.token_width, cfg.conv_filters, ch},
                              static_cast<std::int64_t>(cfg.conv_filters) * ch, rng));
        add_bn(ps, base + ".l1.bn", cfg.token_width);
        for (int l = 2; l <= cfg.tokenizer_depth; ++l) {
            const std::string lb = base + ".l" + std::to_string(l);
            ps.add(lb + ".conv.w",
                   uniform_fan_in({cfg.token_width, cfg.token_width, cfg.temporal_kernel},
                                  static_cast<std::int64_t>(cfg.token_width) * cfg.temporal_kernel,
                                  rng));
            add_bn(ps, lb + ".bn", cfg.token_width);
        }
    }
    for (int l = 1; l <= cfg.spatial_depth; ++l)
        add_transformer_layer(ps, "sp.l" + std::to_string(l), cfg.token_width, cfg.ffn_multiplier, rng);
    for (int l = 1; l <= cfg.temporal_depth; ++l)
        add_transformer_layer(ps, "te.l" + std::to_string(l), cfg.model_dim(), cfg.ffn_multiplier, rng);
    ps.add("te.pos", scaled_normal({cfg.s_max + 1, cfg.model_dim()}, 0.02, rng));
    ps.add("te.cls", scaled_normal({1, cfg.model_dim()}, 0.02, rng));
    ps.add("head.ln.gamma", TensorF::full({cfg.model_dim()}, 1.0f));
    ps.add("head.ln.beta", TensorF::zeros({cfg.model_dim()}));
    ps.add("head.w1", uniform_fan_in({cfg.model_dim(), cfg.head_hidden}, cfg.model_dim(), rng));
    ps.add("head.b1", TensorF::zeros({cfg.head_hidden}));
    ps.add("head.w2", uniform_fan_in({cfg.head_hidden, cfg.n_classes}, cfg.head_hidden, rng));
    ps.add("head.b2", TensorF::zeros({cfg.n_classes}));
    return ps;
}

std::vector<float> eval_logits(ParamStore& store, const FastConfig& cfg, const pre::EEGTrial& trial,
                               const montage::RegionPartition& partition,
                               const montage::ChannelLayout& layout, const pre::SegmentPlan& plan,
                               bool no_te) {
    num::Tape<float> tape;
    Session<float> s{tape, store, cfg};
    const int logits = no_te ? ablate_no_te(s, trial, partition, layout, plan)
                             : fast_forward(s, trial, partition, layout, plan);
    const TensorF& out = tape.val(logits);
    if (!out.all_finite()) throw NumericError("eval_logits: non-finite logits");
    return std::vector<float>(out.v.begin(), out.v.end());
}

// --------------------------------------------------------------------------
// config JSON and checkpoint I/O
// --------------------------------------------------------------------------

namespace {

json config_to_json_obj(const FastConfig& c) {
    return json{{"n_regions", c.n_regions},
                {"region_channels", c.region_channels},
                {"token_width", c.token_width},
                {"conv_filters", c.conv_filters},
                {"conv_t_taps", c.conv_t_taps},
                {"temporal_kernel", c.temporal_kernel},
                {"pool_window", c.pool_window},
                {"tokenizer_depth", c.tokenizer_depth},
                {"spatial_depth", c.spatial_depth},
                {"temporal_depth", c.temporal_depth},
                {"heads_spatial", c.heads_spatial},
                {"heads_temporal", c.heads_temporal},
                {"ffn_multiplier", c.ffn_multiplier},
                {"head_hidden", c.head_hidden},
                {"s_max", c.s_max},
                {"n_classes", c.n_classes},
                {"dropout", c.dropout},
                {"bn_momentum", c.bn_momentum},
                {"bn_eps", c.bn_eps},
                {"ln_eps", c.ln_eps}};
}

FastConfig config_from_json_obj(const json& j) {
    FastConfig c;
    c.n_regions = j.at("n_regions").get<int>();
    c.region_channels = j.at("region_channels").get<std::vector<int>>();
    c.token_width = j.at("token_width").get<int>();
    c.conv_filters = j.at("conv_filters").get<int>();
    c.conv_t_taps = j.at("conv_t_taps").get<int>();
    c.temporal_kernel = j.at("temporal_kernel").get<int>();
    c.pool_window = j.at("pool_window").get<int>();
    c.tokenizer_depth = j.at("tokenizer_depth").get<int>();
    c.spatial_depth = j.at("spatial_depth").get<int>();
    c.temporal_depth = j.at("temporal_depth").get<int>();
    c.heads_spatial = j.at("heads_spatial").get<int>();
    c.heads_temporal = j.at("heads_temporal").get<int>();
    c.ffn_multiplier = j.at("ffn_multiplier").get<int>();
    c.head_hidden = j.at("head_hidden").get<int>();
    c.s_max = j.at("s_max").get<int>();
    c.n_classes = j.at("n_classes").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.bn_eps = j.at("bn_eps").get<double>();
    c.ln_eps = j.at("ln_eps").get<double>();
    c.validate();
    return c;
}

constexpr char kMagic[8] = {'F', 'A', 'S', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

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
    if (!in) throw FormatError("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32le(std::ostream& out, const std::vector<float>& vs) {
    for (float f : vs) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(out, bits);
    }
}

}  // namespace

std::string config_to_json(const FastConfig& cfg) { return config_to_json_obj(cfg).dump(2); }

FastConfig config_from_json(const std::string& text) {
    return config_from_json_obj(json::parse(text));
}

void save_checkpoint(const ParamStore& store, const FastConfig& cfg, const std::string& path) {
    json tensors = json::array();
    std::int64_t offset = 0;
    for (const auto& e : store.entries) {
        tensors.push_back(json{{"name", e.name},
                               {"shape", e.tensor.shape},
                               {"dtype", "float32"},
                               {"offset", offset},
                               {"trainable", e.trainable}});
        offset += e.tensor.size() * 4;
    }
    const std::string header =
        json{{"config", config_to_json_obj(cfg)}, {"tensors", tensors}}.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& e : store.entries) write_f32le(out, e.tensor.v);
    if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("checkpoint: bad magic in " + path);
    const std::uint32_t version = read_u32(in);
    if (version != kVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t header_len = read_u32(in);
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw FormatError("checkpoint: truncated header");
    json j;
    try {
        j = json::parse(header);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: bad header JSON: ") + e.what());
    }
    Checkpoint ck;
    ck.cfg = config_from_json_obj(j.at("config"));
    for (const auto& t : j.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        const Shape shape = t.at("shape").get<Shape>();
        if (t.at("dtype").get<std::string>() != "float32")
            throw FormatError("checkpoint: unsupported dtype for " + name);
        TensorF tensor(shape);
        for (auto& v : tensor.v) {
            std::uint32_t bits = read_u32(in);
            float f;
            std::memcpy(&f, &bits, 4);
            v = f;
        }
        ck.store.add(name, std::move(tensor), t.at("trainable").get<bool>());
    }
    // must be exactly at EOF
    in.peek();
    if (!in.eof()) throw FormatError("checkpoint: trailing bytes in " + path);
    return ck;
}

}  // namespace fast::model
