// Copyright 2026 The qgst Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Transformer estimators mapping a group of circuits and their observed
// frequencies to gate error parameters.
//
// One qubit: token and probability branches fused by cross attention, then
// post-norm encoder blocks. Two qubits: patchified token grid, 2D positional
// encoding and adaLN-zero blocks conditioned on the probabilities.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qgst/autodiff.hpp"
#include "qgst/experiment.hpp"

namespace qgst {

using ad::Tensor;

struct ModelConfig {
    int n_qubits = 1;
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 3;
    int ff_width = 128;
    int group_size = 8;
    int patch_size = 2;
    int vocab_size = 0;
    int l_pad = 0;
    double ln_eps = 1e-6;
    std::uint64_t seed = 0;

    int n_kinds() const { return static_cast<int>(parametrized_kinds(n_qubits).size()); }
    int n_outputs() const { return 2 * n_kinds(); }
    int n_outcomes() const { return 1 << n_qubits; }
    /// Rows of the stacked token grid: one per qubit per circuit.
    int grid_rows() const { return group_size * n_qubits; }

    void validate() const {
        if (n_qubits < 1 || n_qubits > 2) throw std::invalid_argument("model: n_qubits must be 1 or 2");
        if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
            throw std::invalid_argument("model: d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                                        std::to_string(n_heads) + ")");
        }
        if (n_layers < 0 || ff_width < 1) throw std::invalid_argument("model: bad layer count or feed-forward width");
        if (group_size < 1) throw std::invalid_argument("model: group_size must be >= 1");
        if (vocab_size < 1 || l_pad < 1) throw std::invalid_argument("model: vocab_size and l_pad must be set");
        if (d_model % 2 != 0) throw std::invalid_argument("model: d_model must be even for positional encoding");
        if (n_qubits >= 2) {
            if (d_model % 4 != 0) throw std::invalid_argument("model: 2D positional encoding needs d_model divisible by 4");
            if (patch_size < 1 || grid_rows() % patch_size != 0 || l_pad % patch_size != 0) {
                throw std::invalid_argument("model: patch size " + std::to_string(patch_size) + " must divide the " +
                                            std::to_string(grid_rows()) + " x " + std::to_string(l_pad) + " token grid");
            }
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"n_qubits", c.n_qubits}, {"d_model", c.d_model},       {"n_heads", c.n_heads},
         {"n_layers", c.n_layers}, {"ff_width", c.ff_width},     {"group_size", c.group_size},
         {"patch_size", c.patch_size}, {"vocab_size", c.vocab_size}, {"l_pad", c.l_pad},
         {"ln_eps", c.ln_eps},     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.n_qubits = j.value("n_qubits", d.n_qubits);
    c.d_model = j.value("d_model", d.d_model);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.n_layers = j.value("n_layers", d.n_layers);
    c.ff_width = j.value("ff_width", d.ff_width);
    c.group_size = j.value("group_size", d.group_size);
    c.patch_size = j.value("patch_size", d.patch_size);
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.l_pad = j.value("l_pad", d.l_pad);
    c.ln_eps = j.value("ln_eps", d.ln_eps);
    c.seed = j.value("seed", d.seed);
}

/// Padding length used by the model for a dataset: the longest circuit,
/// rounded up to a multiple of the patch size for the grid model.
inline int model_l_pad(const Dataset& ds, int patch_size = 2) {
    int l = std::max<int>(1, static_cast<int>(longest_circuit(ds)));
    if (ds.n_qubits >= 2) l = (l + patch_size - 1) / patch_size * patch_size;
    return l;
}

/// Fills the data-dependent fields of `base` from a dataset.
inline ModelConfig config_for_dataset(ModelConfig base, const Dataset& ds) {
    base.n_qubits = ds.n_qubits;
    base.vocab_size = Vocabulary::for_qubits(ds.n_qubits).size();
    base.l_pad = model_l_pad(ds, base.patch_size);
    base.validate();
    return base;
}

/// One model input: `group_size` circuits with their frequencies.
struct GroupInput {
    int group_size = 0;
    int rows = 1;  // token rows per circuit (= n_qubits)
    int l_pad = 0;
    int n_outcomes = 2;
    std::vector<int> tokens;    // (group_size * rows) x l_pad, row-major
    std::vector<double> probs;  // group_size x n_outcomes
    std::vector<std::size_t> members;  // dataset indices, repeats allowed
};

inline GroupInput make_group_input(const TokenizedDataset& tokens, const Dataset& ds,
                                   const std::vector<std::size_t>& members) {
    if (members.empty()) throw std::invalid_argument("group input needs at least one circuit");
    GroupInput g;
    g.group_size = static_cast<int>(members.size());
    g.rows = tokens.rows;
    g.l_pad = tokens.l_pad;
    g.n_outcomes = ds.n_outcomes();
    g.members = members;
    for (std::size_t m : members) {
        if (m >= ds.size() || m >= tokens.circuits.size()) throw std::invalid_argument("group member index out of range");
        const auto& t = tokens.circuits[m].tokens;
        g.tokens.insert(g.tokens.end(), t.begin(), t.end());
        g.probs.insert(g.probs.end(), ds.frequencies[m].begin(), ds.frequencies[m].end());
    }
    return g;
}

// ---------------------------------------------------------------------------
// Positional encodings.

inline std::vector<double> positional_encoding_1d(int length, int d_model) {
    if (d_model <= 0 || d_model % 2 != 0) {
        throw std::invalid_argument("positional_encoding_1d: d_model must be positive and even, got " +
                                    std::to_string(d_model));
    }
    std::vector<double> pe(static_cast<std::size_t>(length) * d_model);
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < d_model / 2; ++i) {
            const double angle = pos / std::pow(10000.0, 2.0 * i / d_model);
            pe[static_cast<std::size_t>(pos) * d_model + 2 * i] = std::sin(angle);
            pe[static_cast<std::size_t>(pos) * d_model + 2 * i + 1] = std::cos(angle);
        }
    }
    return pe;
}

/// Row index in the first half of the channels, column index in the second.
inline std::vector<double> positional_encoding_2d(int h, int w, int d_model) {
    if (d_model <= 0 || d_model % 4 != 0) {
        throw std::invalid_argument("positional_encoding_2d: d_model must be divisible by 4, got " +
                                    std::to_string(d_model));
    }
    const int half = d_model / 2;
    const auto rows = positional_encoding_1d(h, half);
    const auto cols = positional_encoding_1d(w, half);
    std::vector<double> pe(static_cast<std::size_t>(h) * w * d_model);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double* out = pe.data() + (static_cast<std::size_t>(r) * w + c) * d_model;
            std::copy_n(rows.begin() + static_cast<std::size_t>(r) * half, half, out);
            std::copy_n(cols.begin() + static_cast<std::size_t>(c) * half, half, out + half);
        }
    }
    return pe;
}

// ---------------------------------------------------------------------------
// Layers.

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    Tensor operator()(const Tensor& x) const { return ad::add(ad::matmul(x, weight), bias); }
};

inline Linear make_linear(ad::ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng,
                          bool zero = false) {
    const std::size_t n = static_cast<std::size_t>(in) * out;
    Linear l;
    l.weight = store.add(name + ".weight", {in, out}, zero ? std::vector<double>(n, 0.0) : ad::uniform_init(n, in, rng));
    l.bias = store.add(name + ".bias", {out},
                       zero ? std::vector<double>(out, 0.0) : ad::uniform_init(static_cast<std::size_t>(out), in, rng));
    return l;
}

struct LayerNormParams {
    Tensor gamma;
    Tensor beta;
};

inline LayerNormParams make_layer_norm(ad::ParameterStore& store, const std::string& name, int d) {
    return {store.add(name + ".gamma", {d}, std::vector<double>(d, 1.0)),
            store.add(name + ".beta", {d}, std::vector<double>(d, 0.0))};
}

struct Attention {
    Linear q, k, v, o;
    int n_heads = 1;
};

inline Attention make_attention(ad::ParameterStore& store, const std::string& name, int d, int heads,
                                std::mt19937_64& rng) {
    return {make_linear(store, name + ".q", d, d, rng), make_linear(store, name + ".k", d, d, rng),
            make_linear(store, name + ".v", d, d, rng), make_linear(store, name + ".o", d, d, rng), heads};
}

struct AttentionResult {
    Tensor output;   // [Tq, d]
    Tensor weights;  // [heads, Tq, Tk]
};

/// Multi-head attention with queries from `query_source` and keys/values
/// from `kv_source`; both are [T, d].
inline AttentionResult multi_head_attention(const Attention& att, const Tensor& query_source, const Tensor& kv_source) {
    if (query_source.rank() != 2 || kv_source.rank() != 2 || query_source.dim(1) != kv_source.dim(1)) {
        throw std::invalid_argument("attention: query and key/value sources must be [T, d] with equal d, got " +
                                    ad::shape_str(query_source.shape()) + " and " + ad::shape_str(kv_source.shape()));
    }
    const int d = query_source.dim(1);
    const int h = att.n_heads;
    if (d % h != 0 || att.q.weight.dim(0) != d) {
        throw std::invalid_argument("attention: model width " + std::to_string(d) + " does not split into " +
                                    std::to_string(h) + " heads of the layer's size");
    }
    const int dh = d / h;
    const int tq = query_source.dim(0);
    const int tk = kv_source.dim(0);
    auto heads = [&](const Tensor& x, int t) { return ad::transpose(ad::reshape(x, {t, h, dh}), 0, 1); };
    const Tensor q = heads(att.q(query_source), tq);
    const Tensor k = heads(att.k(kv_source), tk);
    const Tensor v = heads(att.v(kv_source), tk);
    const Tensor weights = ad::softmax(ad::matmul(q, ad::transpose(k, 1, 2)), 1.0 / std::sqrt(static_cast<double>(dh)));
    const Tensor mixed = ad::reshape(ad::transpose(ad::matmul(weights, v), 0, 1), {tq, d});
    return {att.o(mixed), weights};
}

struct FeedForward {
    Linear in, out;
    Tensor operator()(const Tensor& x) const { return out(ad::gelu(in(x))); }
};

inline FeedForward make_feed_forward(ad::ParameterStore& store, const std::string& name, int d, int ff,
                                     std::mt19937_64& rng) {
    return {make_linear(store, name + ".in", d, ff, rng), make_linear(store, name + ".out", ff, d, rng)};
}

struct EncoderBlock {
    Attention attention;
    LayerNormParams norm1, norm2;
    FeedForward ff;
};

inline EncoderBlock make_encoder_block(ad::ParameterStore& store, const std::string& name, const ModelConfig& c,
                                       std::mt19937_64& rng) {
    EncoderBlock b;
    b.attention = make_attention(store, name + ".attn", c.d_model, c.n_heads, rng);
    b.norm1 = make_layer_norm(store, name + ".norm1", c.d_model);
    b.ff = make_feed_forward(store, name + ".ff", c.d_model, c.ff_width, rng);
    b.norm2 = make_layer_norm(store, name + ".norm2", c.d_model);
    return b;
}

/// Post-norm block: self attention, add & norm, feed forward, add & norm.
inline Tensor transformer_encoder_block(const EncoderBlock& b, const Tensor& x, double eps = 1e-6) {
    const Tensor h = ad::layer_norm(ad::add(x, multi_head_attention(b.attention, x, x).output), b.norm1.gamma,
                                    b.norm1.beta, eps);
    return ad::layer_norm(ad::add(h, b.ff(h)), b.norm2.gamma, b.norm2.beta, eps);
}

/// Splits an embedded [H, W, d] grid (given flat as [H*W, d]) into
/// non-overlapping p x p patches and projects each to d_model.
inline Tensor patch_embed(const Tensor& grid, int h, int w, int p, const Linear& proj) {
    if (grid.rank() != 2 || grid.dim(0) != h * w) {
        throw std::invalid_argument("patch_embed: grid of shape " + ad::shape_str(grid.shape()) + " is not " +
                                    std::to_string(h) + " x " + std::to_string(w) + " cells");
    }
    if (p < 1 || h % p != 0 || w % p != 0) {
        throw std::invalid_argument("patch_embed: patch size " + std::to_string(p) + " does not divide " +
                                    std::to_string(h) + " x " + std::to_string(w));
    }
    const int d = grid.dim(1);
    const Tensor cells = ad::reshape(grid, {h / p, p, w / p, p, d});
    const Tensor patches = ad::reshape(ad::transpose(cells, 1, 2), {(h / p) * (w / p), p * p * d});
    return proj(patches);
}

struct AdaLnBlock {
    Attention attention;
    FeedForward mlp;
    Linear modulation;  // d -> 6d, zero-initialized
};

inline AdaLnBlock make_adaln_block(ad::ParameterStore& store, const std::string& name, const ModelConfig& c,
                                   std::mt19937_64& rng) {
    AdaLnBlock b;
    b.attention = make_attention(store, name + ".attn", c.d_model, c.n_heads, rng);
    b.mlp = make_feed_forward(store, name + ".mlp", c.d_model, c.ff_width, rng);
    b.modulation = make_linear(store, name + ".modulation", c.d_model, 6 * c.d_model, rng, /*zero=*/true);
    return b;
}

/// x + gate_a * Attn(mod(norm(x))) + gate_m * MLP(mod(norm(x))), with the six
/// modulation signals projected from SiLU(condition).
inline Tensor adaln_zero_block(const AdaLnBlock& b, const Tensor& x, const Tensor& condition, double eps = 1e-6) {
    const int d = x.dim(1);
    if (condition.rank() != 1 || condition.dim(0) != d || b.modulation.weight.dim(0) != d) {
        throw std::invalid_argument("adaln_zero_block: condition of shape " + ad::shape_str(condition.shape()) +
                                    " does not match model width " + std::to_string(d));
    }
    const Tensor mod = b.modulation(ad::reshape(ad::silu(condition), {1, d}));
    auto part = [&](int i) { return ad::reshape(ad::slice(mod, 1, i * d, (i + 1) * d), {d}); };
    const Tensor shift_a = part(0), scale_a = part(1), gate_a = part(2);
    const Tensor shift_m = part(3), scale_m = part(4), gate_m = part(5);
    const Tensor normed = ad::layer_norm(x, {}, {}, eps);
    auto modulate = [&](const Tensor& shift, const Tensor& scale) {
        return ad::add(ad::mul(normed, ad::add_scalar(scale, 1.0)), shift);
    };
    const Tensor ha = modulate(shift_a, scale_a);
    const Tensor attn = multi_head_attention(b.attention, ha, ha).output;
    const Tensor mlp = b.mlp(modulate(shift_m, scale_m));
    return ad::add(x, ad::add(ad::mul(attn, gate_a), ad::mul(mlp, gate_m)));
}

// ---------------------------------------------------------------------------
// Estimators.

/// Inputs and outputs of each block, recorded when requested.
struct ForwardTrace {
    std::vector<Tensor> block_inputs;
    std::vector<Tensor> block_outputs;
};

class Estimator {
   public:
    explicit Estimator(ModelConfig config) : config_(std::move(config)) { config_.validate(); }
    virtual ~Estimator() = default;

    const ModelConfig& config() const { return config_; }
    ad::ParameterStore& parameters() { return store_; }
    const ad::ParameterStore& parameters() const { return store_; }

    /// Outputs [eps_1..eps_K, p_1..p_K] for the kinds of `parametrized_kinds`.
    virtual Tensor forward(const GroupInput& group, ForwardTrace* trace = nullptr) const = 0;

    void check_input(const GroupInput& g) const {
        if (g.group_size != config_.group_size || g.rows != config_.n_qubits || g.l_pad != config_.l_pad ||
            g.n_outcomes != config_.n_outcomes()) {
            throw std::invalid_argument("group input (" + std::to_string(g.group_size) + " circuits, " +
                                        std::to_string(g.rows) + " x " + std::to_string(g.l_pad) +
                                        " tokens) does not match model config (" + std::to_string(config_.group_size) +
                                        " circuits, " + std::to_string(config_.n_qubits) + " x " +
                                        std::to_string(config_.l_pad) + ")");
        }
        if (g.tokens.size() != static_cast<std::size_t>(g.group_size) * g.rows * g.l_pad ||
            g.probs.size() != static_cast<std::size_t>(g.group_size) * g.n_outcomes) {
            throw std::invalid_argument("group input buffers have the wrong size");
        }
        for (int t : g.tokens) {
            if (t < 0 || t >= config_.vocab_size) {
                throw std::invalid_argument("token " + std::to_string(t) + " outside vocabulary of size " +
                                            std::to_string(config_.vocab_size));
            }
        }
    }

   protected:
    ModelConfig config_;
    ad::ParameterStore store_;
};

/// Splits raw head outputs into error parameters.
inline ErrorParams output_to_params(const Tensor& out, int n_qubits) {
    const auto kinds = parametrized_kinds(n_qubits);
    std::vector<double> flat(out.values().begin(), out.values().end());
    return ErrorParams::unflatten(kinds, flat);
}

class TransformerEstimator1q : public Estimator {
   public:
    explicit TransformerEstimator1q(ModelConfig config) : Estimator(std::move(config)) {
        const ModelConfig& c = config_;
        if (c.n_qubits != 1) throw std::invalid_argument("TransformerEstimator1q needs a one-qubit config");
        std::mt19937_64 rng(c.seed);
        const int tokens = c.group_size * c.l_pad;
        token_table_ = store_.add("embed.tokens", {c.vocab_size, c.d_model},
                                  ad::normal_init(static_cast<std::size_t>(c.vocab_size) * c.d_model, 0.02, rng));
        prob_proj_ = make_linear(store_, "embed.probs", c.group_size * c.n_outcomes(), tokens * c.d_model, rng);
        cross_ = make_attention(store_, "cross", c.d_model, c.n_heads, rng);
        cross_norm_ = make_layer_norm(store_, "cross.norm", c.d_model);
        for (int i = 0; i < c.n_layers; ++i) blocks_.push_back(make_encoder_block(store_, "block" + std::to_string(i), c, rng));
        trunk_ = make_linear(store_, "head.trunk", c.d_model, c.d_model, rng);
        head_ = make_linear(store_, "head.out", c.d_model, c.n_outputs(), rng);
        pe_ = Tensor::constant({tokens, c.d_model}, positional_encoding_1d(tokens, c.d_model));
    }

    /// Sequence and probability branches, each [group_size * l_pad, d_model].
    std::pair<Tensor, Tensor> embed(const GroupInput& g) const {
        check_input(g);
        const ModelConfig& c = config_;
        const int tokens = c.group_size * c.l_pad;
        const Tensor seq = ad::add(ad::embedding_lookup(token_table_, g.tokens), pe_);
        const Tensor probs = Tensor::constant({1, c.group_size * c.n_outcomes()}, g.probs);
        const Tensor prob_branch = ad::add(ad::reshape(prob_proj_(probs), {tokens, c.d_model}), pe_);
        return {seq, prob_branch};
    }

    Tensor forward(const GroupInput& g, ForwardTrace* trace = nullptr) const override {
        const ModelConfig& c = config_;
        auto [seq, prob_branch] = embed(g);
        const Tensor fused = multi_head_attention(cross_, seq, prob_branch).output;
        Tensor x = ad::layer_norm(ad::add(seq, fused), cross_norm_.gamma, cross_norm_.beta, c.ln_eps);
        for (const auto& b : blocks_) {
            if (trace) trace->block_inputs.push_back(x);
            x = transformer_encoder_block(b, x, c.ln_eps);
            if (trace) trace->block_outputs.push_back(x);
        }
        const Tensor pooled = ad::reshape(ad::mean(x, 0), {1, c.d_model});
        const Tensor raw = ad::reshape(head_(ad::gelu(trunk_(pooled))), {c.n_outputs()});
        const int k = c.n_kinds();
        return ad::concat({ad::tanh(ad::slice(raw, 0, 0, k)), ad::abs(ad::tanh(ad::slice(raw, 0, k, 2 * k)))}, 0);
    }

    const Attention& cross_attention() const { return cross_; }

   private:
    Tensor token_table_;
    Linear prob_proj_;
    Attention cross_;
    LayerNormParams cross_norm_;
    std::vector<EncoderBlock> blocks_;
    Linear trunk_, head_;
    Tensor pe_;
};

class VitEstimator2q : public Estimator {
   public:
    explicit VitEstimator2q(ModelConfig config) : Estimator(std::move(config)) {
        const ModelConfig& c = config_;
        if (c.n_qubits != 2) throw std::invalid_argument("VitEstimator2q needs a two-qubit config");
        std::mt19937_64 rng(c.seed);
        const int p = c.patch_size;
        cell_table_ = store_.add("embed.cells", {c.vocab_size, c.d_model},
                                 ad::normal_init(static_cast<std::size_t>(c.vocab_size) * c.d_model, 0.02, rng));
        patch_proj_ = make_linear(store_, "embed.patch", p * p * c.d_model, c.d_model, rng);
        cond_proj_ = make_linear(store_, "embed.condition", c.group_size * c.n_outcomes(), c.d_model, rng);
        for (int i = 0; i < c.n_layers; ++i) blocks_.push_back(make_adaln_block(store_, "block" + std::to_string(i), c, rng));
        final_norm_ = make_layer_norm(store_, "final.norm", c.d_model);
        trunk_ = make_linear(store_, "head.trunk", c.d_model, c.d_model, rng);
        head_ = make_linear(store_, "head.out", c.d_model, c.n_outputs(), rng);
        pe_ = Tensor::constant({patch_rows() * patch_cols(), c.d_model},
                               positional_encoding_2d(patch_rows(), patch_cols(), c.d_model));
    }

    int patch_rows() const { return config_.grid_rows() / config_.patch_size; }
    int patch_cols() const { return config_.l_pad / config_.patch_size; }

    /// Patch tokens [n_patches, d_model] with positional encoding.
    Tensor embed(const GroupInput& g) const {
        check_input(g);
        const ModelConfig& c = config_;
        const Tensor cells = ad::embedding_lookup(cell_table_, g.tokens);
        return ad::add(patch_embed(cells, c.grid_rows(), c.l_pad, c.patch_size, patch_proj_), pe_);
    }

    Tensor condition(const GroupInput& g) const {
        const ModelConfig& c = config_;
        const Tensor probs = Tensor::constant({1, c.group_size * c.n_outcomes()}, g.probs);
        return ad::reshape(cond_proj_(probs), {c.d_model});
    }

    Tensor forward(const GroupInput& g, ForwardTrace* trace = nullptr) const override {
        const ModelConfig& c = config_;
        Tensor x = embed(g);
        const Tensor cond = condition(g);
        for (const auto& b : blocks_) {
            if (trace) trace->block_inputs.push_back(x);
            x = adaln_zero_block(b, x, cond, c.ln_eps);
            if (trace) trace->block_outputs.push_back(x);
        }
        x = ad::layer_norm(x, final_norm_.gamma, final_norm_.beta, c.ln_eps);
        const Tensor pooled = ad::reshape(ad::mean(x, 0), {1, c.d_model});
        const Tensor raw = ad::reshape(head_(ad::gelu(trunk_(pooled))), {c.n_outputs()});
        const int k = c.n_kinds();
        return ad::concat({ad::tanh(ad::slice(raw, 0, 0, k)), ad::sigmoid(ad::slice(raw, 0, k, 2 * k))}, 0);
    }

   private:
    Tensor cell_table_;
    Linear patch_proj_, cond_proj_;
    std::vector<AdaLnBlock> blocks_;
    LayerNormParams final_norm_;
    Linear trunk_, head_;
    Tensor pe_;
};

inline std::unique_ptr<Estimator> make_estimator(const ModelConfig& config) {
    config.validate();
    if (config.n_qubits == 1) return std::make_unique<TransformerEstimator1q>(config);
    return std::make_unique<VitEstimator2q>(config);
}

inline constexpr const char* kModelKind1q = "transformer-1q";
inline constexpr const char* kModelKind2q = "vit-adaln-2q";

/// Checkpoint with the model config recorded in the manifest.
inline void save_model(const Estimator& model, const std::filesystem::path& dir, nlohmann::json extra = {}) {
    if (extra.is_null()) extra = nlohmann::json::object();
    extra["model"] = model.config();
    extra["model_kind"] = model.config().n_qubits == 1 ? kModelKind1q : kModelKind2q;
    ad::save_checkpoint(model.parameters(), dir, extra);
}

inline ModelConfig read_model_config(const std::filesystem::path& dir) {
    const nlohmann::json manifest = ad::read_manifest(dir);
    if (!manifest.contains("extra") || !manifest["extra"].contains("model")) {
        throw std::invalid_argument("checkpoint " + dir.string() + " records no model config");
    }
    return manifest["extra"]["model"].get<ModelConfig>();
}

/// Rebuilds the model described by a checkpoint and loads its weights.
inline std::unique_ptr<Estimator> load_model(const std::filesystem::path& dir) {
    auto model = make_estimator(read_model_config(dir));
    ad::load_checkpoint(model->parameters(), dir);
    return model;
}

}  // namespace qgst
