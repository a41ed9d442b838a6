#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "fast/montage.hpp"
#include "fast/ops.hpp"
#include "fast/preprocess.hpp"
#include "fast/rng.hpp"

namespace fast::model {

// Full hyperparameter set. Parameter shapes are a pure function of this
// struct, so region_channels (which depends on layout + partition) is part
// of it.
struct FastConfig {
    int n_regions = 8;                    // M
    std::vector<int> region_channels;     // per-region channel counts, size M
    int token_width = 32;                 // F
    int conv_filters = 16;                // Conv_T output channels
    int conv_t_taps = 15;                 // k_t (75 ms at 200 Hz)
    int temporal_kernel = 7;              // ConvT_l taps, layers 2..L_t
    int pool_window = 2;
    int tokenizer_depth = 4;              // L_t
    int spatial_depth = 2;                // L_s
    int temporal_depth = 4;               // L
    int heads_spatial = 4;
    int heads_temporal = 8;
    int ffn_multiplier = 2;
    int head_hidden = 128;
    int s_max = 24;
    int n_classes = 5;
    double dropout = 0.1;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    double ln_eps = 1e-5;

    int model_dim() const { return n_regions * token_width; }
    void validate() const;
};

// Desk-scale preset used by the synthetic-data experiments: same topology,
// much smaller widths.
FastConfig desk_config();

template <typename T>
struct ParamStoreT {
    struct Entry {
        std::string name;
        Tensor<T> tensor;
        bool trainable = true;
    };
    std::vector<Entry> entries;
    std::unordered_map<std::string, int> index;

    void add(const std::string& name, Tensor<T> t, bool trainable = true) {
        if (index.count(name)) throw ConfigError("param store: duplicate name '" + name + "'");
        index[name] = static_cast<int>(entries.size());
        entries.push_back(Entry{name, std::move(t), trainable});
    }
    bool has(const std::string& name) const { return index.count(name) != 0; }
    Tensor<T>& get(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("param store: unknown name '" + name + "'");
        return entries[static_cast<size_t>(it->second)].tensor;
    }
    const Tensor<T>& get(const std::string& name) const {
        return const_cast<ParamStoreT*>(this)->get(name);
    }
    // Total stored values, trainable or not (checkpoint payload size).
    std::int64_t total_values() const {
        std::int64_t n = 0;
        for (const auto& e : entries) n += e.tensor.size();
        return n;
    }
    std::int64_t trainable_values() const {
        std::int64_t n = 0;
        for (const auto& e : entries)
            if (e.trainable) n += e.tensor.size();
        return n;
    }
    template <typename U>
    ParamStoreT<U> cast() const {
        ParamStoreT<U> out;
        for (const auto& e : entries) out.add(e.name, e.tensor.template cast<U>(), e.trainable);
        return out;
    }
};

using ParamStore = ParamStoreT<float>;

// Deterministic initialization: fan-in-scaled uniform for kernels and linear
// maps, gamma/scale 1 and beta/shift 0 for the norms, scaled normal draws for
// the CLS token and temporal encodings.
ParamStore init_params(const FastConfig& cfg, std::uint64_t seed);

// One forward session: a tape plus the store the parameters come from.
// Parameters are bound to tape leaves on first use. In training mode with
// update_bn set, batch-norm running statistics in the store are updated as a
// side effect of the forward pass.
template <typename T>
struct Session {
    num::Tape<T>& tape;
    ParamStoreT<T>& store;
    const FastConfig& cfg;
    bool training;
    bool update_bn;
    Rng* dropout_rng;
    std::unordered_map<std::string, int> bound;

    Session(num::Tape<T>& tape_, ParamStoreT<T>& store_, const FastConfig& cfg_,
            bool training_ = false, bool update_bn_ = false, Rng* dropout_rng_ = nullptr)
        : tape(tape_), store(store_), cfg(cfg_), training(training_), update_bn(update_bn_),
          dropout_rng(dropout_rng_) {}

    int param(const std::string& name) {
        auto it = bound.find(name);
        if (it != bound.end()) return it->second;
        const int id = tape.leaf(store.get(name));
        bound.emplace(name, id);
        return id;
    }
    double effective_dropout() const { return training ? cfg.dropout : 0.0; }
};

// Per-region tokenizer: one segment's M region blocks (tape nodes, each
// [channels x window]) -> [M x F] tokens.
template <typename T>
int st_forward(Session<T>& s, const std::vector<int>& region_blocks);

// L_s transformer layers across the M region tokens of one segment.
template <typename T>
int spatial_projection(Session<T>& s, int tokens);

// Temporal transformer over segment tokens plus CLS; returns [1 x n_classes].
template <typename T>
int temporal_forward(Session<T>& s, int segment_tokens);

// Full network on one preprocessed trial.
template <typename T>
int fast_forward(Session<T>& s, const pre::EEGTrial& trial, const montage::RegionPartition& partition,
                 const montage::ChannelLayout& layout, const pre::SegmentPlan& plan);

// TE-ablated variant: mean-pool the flattened ST tokens, then the head.
template <typename T>
int ablate_no_te(Session<T>& s, const pre::EEGTrial& trial, const montage::RegionPartition& partition,
                 const montage::ChannelLayout& layout, const pre::SegmentPlan& plan);

// Classification head on a [1 x model_dim] vector.
template <typename T>
int head_forward(Session<T>& s, int x);

// Training-path forward over a whole mini-batch. Batch-norm statistics are
// computed over all trials x segments of the batch (the batch and time axes),
// matching what running statistics track for eval mode. Returns logits
// [B x n_classes].
template <typename T>
int batch_forward(Session<T>& s, const std::vector<const pre::EEGTrial*>& batch,
                  const montage::RegionPartition& partition, const montage::ChannelLayout& layout,
                  const pre::SegmentPlan& plan, bool no_te = false);

// Convenience: eval-mode logits for one trial as plain floats.
std::vector<float> eval_logits(ParamStore& store, const FastConfig& cfg, const pre::EEGTrial& trial,
                               const montage::RegionPartition& partition,
                               const montage::ChannelLayout& layout, const pre::SegmentPlan& plan,
                               bool no_te = false);

// Checkpoint file: magic FASTCKPT, u32 version, u32 JSON header length,
// header (config + ordered tensor table), then raw little-endian float32
// payloads.
void save_checkpoint(const ParamStore& store, const FastConfig& cfg, const std::string& path);
struct Checkpoint {
    ParamStore store;
    FastConfig cfg;
};
Checkpoint load_checkpoint(const std::string& path);

std::string config_to_json(const FastConfig& cfg);
FastConfig config_from_json(const std::string& json_text);

// ---------------------------------------------------------------------------
// template implementations
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
int transformer_layer(Session<T>& s, int x, const std::string& prefix, int heads) {
    using namespace fast::num;
    AttnParamIds w{s.param(prefix + ".attn.wq"), s.param(prefix + ".attn.wk"),
                   s.param(prefix + ".attn.wv"), s.param(prefix + ".attn.wo")};
    int delta = multi_head_attention(s.tape, x, x, x, w, heads);
    if (s.effective_dropout() > 0.0) delta = dropout(s.tape, delta, s.cfg.dropout, *s.dropout_rng);
    int ffn = feed_forward(s.tape, delta, s.param(prefix + ".ffn.w1"), s.param(prefix + ".ffn.b1"),
                           s.param(prefix + ".ffn.w2"), s.param(prefix + ".ffn.b2"));
    if (s.effective_dropout() > 0.0) ffn = dropout(s.tape, ffn, s.cfg.dropout, *s.dropout_rng);
    return layer_norm_residual(s.tape, delta, ffn, s.param(prefix + ".ln.gamma"),
                               s.param(prefix + ".ln.beta"), s.cfg.ln_eps);
}

// BN on a stacked activation [N x C x L] (N = trials x segments of the
// current batch), with running-statistic bookkeeping.
template <typename T>
int bn_stacked(Session<T>& s, int stacked, const std::string& prefix) {
    using namespace fast::num;
    const Tensor<T>& X = s.tape.val(stacked);
    const int N = X.extent(0), C = X.extent(1), L = X.extent(2);
    if (s.training) {
        auto bn = batch_norm_train(s.tape, stacked, s.param(prefix + ".gamma"),
                                   s.param(prefix + ".beta"), s.cfg.bn_eps);
        if (s.update_bn) {
            Tensor<T>& rm = s.store.get(prefix + ".run_mean");
            Tensor<T>& rv = s.store.get(prefix + ".run_var");
            const double mom = s.cfg.bn_momentum;
            const double m = static_cast<double>(N) * L;
            for (int c = 0; c < C; ++c) {
                const double ub_var = bn.batch_var[static_cast<size_t>(c)] * m / (m - 1.0);
                rm.at(c) = static_cast<T>((1.0 - mom) * static_cast<double>(rm.at(c)) +
                                          mom * bn.batch_mean[static_cast<size_t>(c)]);
                rv.at(c) = static_cast<T>((1.0 - mom) * static_cast<double>(rv.at(c)) + mom * ub_var);
            }
        }
        return bn.id;
    }
    const Tensor<T>& rm = s.store.get(prefix + ".run_mean");
    const Tensor<T>& rv = s.store.get(prefix + ".run_var");
    std::vector<double> mean(rm.v.begin(), rm.v.end());
    std::vector<double> var(rv.v.begin(), rv.v.end());
    return batch_norm_eval(s.tape, stacked, s.param(prefix + ".gamma"), s.param(prefix + ".beta"),
                           mean, var, s.cfg.bn_eps);
}

// BN over the feature axis of one [C x Ch x T] conv activation.
template <typename T>
int conv_batch_norm(Session<T>& s, int x, const std::string& prefix) {
    using namespace fast::num;
    const Tensor<T>& X = s.tape.val(x);
    const int C = X.extent(0), Ch = X.extent(1), Tn = X.extent(2);
    int flat = reshape(s.tape, x, {1, C, Ch * Tn});
    return reshape(s.tape, bn_stacked(s, flat, prefix), {C, Ch, Tn});
}

// Stack per-item activations (each [C x 1 x T]) into [N x C x T] and back.
template <typename T>
int stack_items(Session<T>& s, const std::vector<int>& items) {
    using namespace fast::num;
    const Tensor<T>& first = s.tape.val(items[0]);
    const int C = first.extent(0), Tn = first.extent(2);
    std::vector<int> rows;
    rows.reserve(items.size());
    for (int id : items) rows.push_back(reshape(s.tape, id, {1, C * Tn}));
    return reshape(s.tape, concat_rows(s.tape, rows), {static_cast<int>(items.size()), C, Tn});
}

template <typename T>
std::vector<int> unstack_items(Session<T>& s, int stacked) {
    using namespace fast::num;
    const Tensor<T>& X = s.tape.val(stacked);
    const int N = X.extent(0), C = X.extent(1), Tn = X.extent(2);
    int flat = reshape(s.tape, stacked, {N, C * Tn});
    std::vector<int> out;
    out.reserve(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i)
        out.push_back(reshape(s.tape, slice_rows(s.tape, flat, i, 1), {C, 1, Tn}));
    return out;
}

}  // namespace detail

template <typename T>
int st_forward(Session<T>& s, const std::vector<int>& region_blocks) {
    using namespace fast::num;
    const FastConfig& cfg = s.cfg;
    if (static_cast<int>(region_blocks.size()) != cfg.n_regions)
        throw ShapeError("st_forward: got " + std::to_string(region_blocks.size()) +
                         " region blocks, config expects " + std::to_string(cfg.n_regions));
    std::vector<int> tokens;
    tokens.reserve(region_blocks.size());
    for (int r = 0; r < cfg.n_regions; ++r) {
        const Tensor<T>& block = s.tape.val(region_blocks[static_cast<size_t>(r)]);
        if (block.rank() != 2 || block.extent(0) != cfg.region_channels[static_cast<size_t>(r)])
            throw ShapeError("st_forward: region " + std::to_string(r) + " block " +
                             shape_str(block.shape) + " does not match configured channel count " +
                             std::to_string(cfg.region_channels[static_cast<size_t>(r)]));
        const std::string base = "st.r" + std::to_string(r);
        const int ch = block.extent(0), w = block.extent(1);
        int x = reshape(s.tape, region_blocks[static_cast<size_t>(r)], {1, ch, w});
        x = conv_temporal(s.tape, x, s.param(base + ".l1.conv_t.w"));
        x = conv_spatial(s.tape, x, s.param(base + ".l1.conv_s.w"));
        x = detail::conv_batch_norm(s, x, base + ".l1.bn");
        x = gelu(s.tape, x);
        x = max_pool_time(s.tape, x, cfg.pool_window);
        for (int l = 2; l <= cfg.tokenizer_depth; ++l) {
            const std::string lb = base + ".l" + std::to_string(l);
            x = conv_temporal(s.tape, x, s.param(lb + ".conv.w"));
            x = detail::conv_batch_norm(s, x, lb + ".bn");
            x = gelu(s.tape, x);
            x = max_pool_time(s.tape, x, cfg.pool_window);
        }
        int pooled = global_max_pool_time(s.tape, x);  // [F]
        tokens.push_back(reshape(s.tape, pooled, {1, cfg.token_width}));
    }
    return concat_rows(s.tape, tokens);  // [M x F]
}

template <typename T>
int spatial_projection(Session<T>& s, int tokens) {
    int x = tokens;
    for (int l = 1; l <= s.cfg.spatial_depth; ++l)
        x = detail::transformer_layer(s, x, "sp.l" + std::to_string(l), s.cfg.heads_spatial);
    return x;
}

template <typename T>
int temporal_forward(Session<T>& s, int segment_tokens) {
    using namespace fast::num;
    const FastConfig& cfg = s.cfg;
    const Tensor<T>& G = s.tape.val(segment_tokens);
    if (G.rank() != 2 || G.extent(1) != cfg.model_dim())
        throw ShapeError("temporal_forward: tokens must be [S x " + std::to_string(cfg.model_dim()) +
                         "]");
    const int S = G.extent(0);
    if (S > cfg.s_max)
        throw ShapeError("temporal_forward: S = " + std::to_string(S) + " exceeds S_max = " +
                         std::to_string(cfg.s_max));
    const int pos = s.param("te.pos");
    int toks = add(s.tape, segment_tokens, slice_rows(s.tape, pos, 0, S));
    int cls = add(s.tape, s.param("te.cls"), row(s.tape, pos, S));
    int x = concat_rows(s.tape, {toks, cls});  // [S+1 x d]
    for (int l = 1; l <= cfg.temporal_depth; ++l)
        x = detail::transformer_layer(s, x, "te.l" + std::to_string(l), cfg.heads_temporal);
    return head_forward(s, row(s.tape, x, S));
}

template <typename T>
int head_forward(Session<T>& s, int x) {
    using namespace fast::num;
    int h = layer_norm(s.tape, x, s.param("head.ln.gamma"), s.param("head.ln.beta"), s.cfg.ln_eps);
    h = gelu(s.tape, add_rowvec(s.tape, matmul(s.tape, h, s.param("head.w1")), s.param("head.b1")));
    return add_rowvec(s.tape, matmul(s.tape, h, s.param("head.w2")), s.param("head.b2"));
}

namespace detail {

template <typename T>
std::vector<int> st_tokens_per_segment(Session<T>& s, const pre::EEGTrial& trial,
                                       const montage::RegionPartition& partition,
                                       const montage::ChannelLayout& layout,
                                       const pre::SegmentPlan& plan, bool project) {
    using namespace fast::num;
    const auto segments = pre::segment(trial, plan);
    std::vector<int> rows;
    rows.reserve(segments.size());
    for (const TensorF& seg : segments) {
        const auto blocks = montage::apply_partition(partition, layout, seg);
        std::vector<int> block_ids;
        block_ids.reserve(blocks.size());
        for (const auto& b : blocks) block_ids.push_back(s.tape.leaf(b.data.template cast<T>()));
        int tok = st_forward(s, block_ids);  // [M x F]
        if (project) tok = spatial_projection(s, tok);
        rows.push_back(reshape(s.tape, tok, {1, s.cfg.model_dim()}));
    }
    return rows;
}

}  // namespace detail

template <typename T>
int fast_forward(Session<T>& s, const pre::EEGTrial& trial, const montage::RegionPartition& partition,
                 const montage::ChannelLayout& layout, const pre::SegmentPlan& plan) {
    auto rows = detail::st_tokens_per_segment(s, trial, partition, layout, plan, true);
    return temporal_forward(s, fast::num::concat_rows(s.tape, rows));
}

template <typename T>
int ablate_no_te(Session<T>& s, const pre::EEGTrial& trial, const montage::RegionPartition& partition,
                 const montage::ChannelLayout& layout, const pre::SegmentPlan& plan) {
    auto rows = detail::st_tokens_per_segment(s, trial, partition, layout, plan, false);
    const int G = fast::num::concat_rows(s.tape, rows);
    return head_forward(s, fast::num::mean_rows(s.tape, G));
}

template <typename T>
int batch_forward(Session<T>& s, const std::vector<const pre::EEGTrial*>& batch,
                  const montage::RegionPartition& partition, const montage::ChannelLayout& layout,
                  const pre::SegmentPlan& plan, bool no_te) {
    using namespace fast::num;
    const FastConfig& cfg = s.cfg;
    const int B = static_cast<int>(batch.size());
    if (B < 1) throw ConfigError("batch_forward: empty batch");

    // leaf region blocks for every (trial, segment)
    int S = -1;
    std::vector<std::vector<int>> item_blocks;  // [B*S][region]
    for (const pre::EEGTrial* trial : batch) {
        const auto segments = pre::segment(*trial, plan);
        if (S < 0)
            S = static_cast<int>(segments.size());
        else if (S != static_cast<int>(segments.size()))
            throw ShapeError("batch_forward: trials disagree on segment count");
        for (const TensorF& seg : segments) {
            const auto blocks = montage::apply_partition(partition, layout, seg);
            std::vector<int> ids;
            ids.reserve(blocks.size());
            for (const auto& b : blocks) ids.push_back(s.tape.leaf(b.data.template cast<T>()));
            item_blocks.push_back(std::move(ids));
        }
    }
    if (S > cfg.s_max)
        throw ShapeError("batch_forward: S = " + std::to_string(S) + " exceeds S_max");
    const int N = B * S;

    // ST stage, batch-norm statistics shared across all N items
    std::vector<std::vector<int>> region_tokens(static_cast<size_t>(N));  // per item: [1 x F] ids
    for (int r = 0; r < cfg.n_regions; ++r) {
        const std::string base = "st.r" + std::to_string(r);
        std::vector<int> cur(static_cast<size_t>(N));
        for (int i = 0; i < N; ++i) {
            const Tensor<T>& blk = s.tape.val(item_blocks[static_cast<size_t>(i)][static_cast<size_t>(r)]);
            int x = reshape(s.tape, item_blocks[static_cast<size_t>(i)][static_cast<size_t>(r)],
                            {1, blk.extent(0), blk.extent(1)});
            x = conv_temporal(s.tape, x, s.param(base + ".l1.conv_t.w"));
            cur[static_cast<size_t>(i)] = conv_spatial(s.tape, x, s.param(base + ".l1.conv_s.w"));
        }
        for (int l = 1; l <= cfg.tokenizer_depth; ++l) {
            const std::string lb = base + ".l" + std::to_string(l);
            if (l >= 2)
                for (int i = 0; i < N; ++i)
                    cur[static_cast<size_t>(i)] =
                        conv_temporal(s.tape, cur[static_cast<size_t>(i)], s.param(lb + ".conv.w"));
            int stacked = detail::stack_items(s, cur);
            stacked = detail::bn_stacked(s, stacked, lb + ".bn");
            stacked = gelu(s.tape, stacked);
            cur = detail::unstack_items(s, stacked);
            for (int i = 0; i < N; ++i)
                cur[static_cast<size_t>(i)] = max_pool_time(s.tape, cur[static_cast<size_t>(i)],
                                                            cfg.pool_window);
        }
        for (int i = 0; i < N; ++i) {
            int pooled = global_max_pool_time(s.tape, cur[static_cast<size_t>(i)]);
            region_tokens[static_cast<size_t>(i)].push_back(
                reshape(s.tape, pooled, {1, cfg.token_width}));
        }
    }

    std::vector<int> logits_rows;
    logits_rows.reserve(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
        std::vector<int> seg_rows;
        seg_rows.reserve(static_cast<size_t>(S));
        for (int k = 0; k < S; ++k) {
            const int item = b * S + k;
            int grid = concat_rows(s.tape, region_tokens[static_cast<size_t>(item)]);  // [M x F]
            if (!no_te) grid = spatial_projection(s, grid);
            seg_rows.push_back(reshape(s.tape, grid, {1, cfg.model_dim()}));
        }
        const int G = concat_rows(s.tape, seg_rows);  // [S x M*F]
        logits_rows.push_back(no_te ? head_forward(s, mean_rows(s.tape, G)) : temporal_forward(s, G));
    }
    return concat_rows(s.tape, logits_rows);  // [B x n_classes]
}

}  // namespace fast::model
