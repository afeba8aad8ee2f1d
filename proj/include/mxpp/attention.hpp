#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mxpp/ops.hpp"
#include "mxpp/rng.hpp"
#include "mxpp/tensor.hpp"

namespace mxpp {

inline constexpr double kLayerNormEps = 1e-5;

// Geometry of one aggregation block: feature map (c_bar, h_bar, w_bar),
// spatial pooling factor s for the keys/values, FFN expansion ratio.
struct HaaConfig {
    int c_bar = 16;
    int h_bar = 8;
    int w_bar = 8;
    int s = 2;
    int ffn_mult = 2;

    void validate() const {
        if (c_bar < 2 || c_bar % 2 != 0) throw shape_error("HaaConfig: c_bar must be even and >= 2");
        if (h_bar < 1 || w_bar < 1) throw shape_error("HaaConfig: spatial extents must be positive");
        if (s < 1 || h_bar % s != 0 || w_bar % s != 0)
            throw shape_error("HaaConfig: pooling factor " + std::to_string(s) + " must divide " +
                              std::to_string(h_bar) + "x" + std::to_string(w_bar));
        if (ffn_mult < 1) throw shape_error("HaaConfig: ffn_mult must be >= 1");
    }

    int half() const { return c_bar / 2; }
    int hw() const { return h_bar * w_bar; }
    int pooled_hw() const { return (h_bar / s) * (w_bar / s); }
};

template <typename S>
struct AttnBranchParams {
    Tensor<S> wq, wk, wv, wo; // square projections over the token feature dim
};

template <typename S>
struct HaeBlockParams {
    Tensor<S> ln1_gain, ln1_bias;
    Tensor<S> ln2_gain, ln2_bias;
    AttnBranchParams<S> spatial;  // token dim = c_bar/2
    AttnBranchParams<S> channel;  // token dim = h_bar*w_bar
    Tensor<S> ffn_w1, ffn_b1;     // (c_bar, ffn_mult*c_bar), (ffn_mult*c_bar)
    Tensor<S> ffn_w2, ffn_b2;     // (ffn_mult*c_bar, c_bar), (c_bar)

    static Tensor<S> init_square(int dim, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
        Tensor<S> t = Tensor<S>::zeros({dim, dim}, true);
        for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
        return t;
    }

    static Tensor<S> init_matrix(int in, int out, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Tensor<S> t = Tensor<S>::zeros({in, out}, true);
        for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
        return t;
    }

    static HaeBlockParams init(const HaaConfig& cfg, Rng& rng) {
        cfg.validate();
        HaeBlockParams p;
        p.ln1_gain = Tensor<S>::full({cfg.c_bar}, S(1), true);
        p.ln1_bias = Tensor<S>::zeros({cfg.c_bar}, true);
        p.ln2_gain = Tensor<S>::full({cfg.c_bar}, S(1), true);
        p.ln2_bias = Tensor<S>::zeros({cfg.c_bar}, true);
        p.spatial.wq = init_square(cfg.half(), rng);
        p.spatial.wk = init_square(cfg.half(), rng);
        p.spatial.wv = init_square(cfg.half(), rng);
        p.spatial.wo = init_square(cfg.half(), rng);
        p.channel.wq = init_square(cfg.hw(), rng);
        p.channel.wk = init_square(cfg.hw(), rng);
        p.channel.wv = init_square(cfg.hw(), rng);
        p.channel.wo = init_square(cfg.hw(), rng);
        p.ffn_w1 = init_matrix(cfg.c_bar, cfg.ffn_mult * cfg.c_bar, rng);
        p.ffn_b1 = Tensor<S>::zeros({cfg.ffn_mult * cfg.c_bar}, true);
        p.ffn_w2 = init_matrix(cfg.ffn_mult * cfg.c_bar, cfg.c_bar, rng);
        p.ffn_b2 = Tensor<S>::zeros({cfg.c_bar}, true);
        return p;
    }

    void named(const std::string& prefix, std::vector<std::pair<std::string, Tensor<S>>>& out) const {
        out.emplace_back(prefix + ".ln1.gain", ln1_gain);
        out.emplace_back(prefix + ".ln1.bias", ln1_bias);
        out.emplace_back(prefix + ".ln2.gain", ln2_gain);
        out.emplace_back(prefix + ".ln2.bias", ln2_bias);
        out.emplace_back(prefix + ".sp.wq", spatial.wq);
        out.emplace_back(prefix + ".sp.wk", spatial.wk);
        out.emplace_back(prefix + ".sp.wv", spatial.wv);
        out.emplace_back(prefix + ".sp.wo", spatial.wo);
        out.emplace_back(prefix + ".ch.wq", channel.wq);
        out.emplace_back(prefix + ".ch.wk", channel.wk);
        out.emplace_back(prefix + ".ch.wv", channel.wv);
        out.emplace_back(prefix + ".ch.wo", channel.wo);
        out.emplace_back(prefix + ".ffn.w1", ffn_w1);
        out.emplace_back(prefix + ".ffn.b1", ffn_b1);
        out.emplace_back(prefix + ".ffn.w2", ffn_w2);
        out.emplace_back(prefix + ".ffn.b2", ffn_b2);
    }
};

template <typename S>
struct AttnResult {
    Tensor<S> out;  // same shape as the branch input
    Tensor<S> attn; // row-stochastic attention map
};

// Channel branch: tokens are channels, each a flattened spatial map. The
// attention map scores channel against channel, shape (C/2, C/2).
template <typename S>
AttnResult<S> channel_attention(const Tensor<S>& z_c, const AttnBranchParams<S>& p) {
    if (z_c.rank() != 3) throw shape_error("channel_attention: expected (C/2,H,W)");
    const int c = z_c.extent(0), h = z_c.extent(1), w = z_c.extent(2);
    const int d = h * w;
    if (p.wq.extent(0) != d)
        throw shape_error("channel_attention: projections expect token dim " + std::to_string(p.wq.extent(0)) +
                          ", input has " + std::to_string(d));
    Tensor<S> x = ops::reshape(z_c, {c, d});
    Tensor<S> q = ops::matmul(x, p.wq);
    Tensor<S> k = ops::matmul(x, p.wk);
    Tensor<S> v = ops::matmul(x, p.wv);
    Tensor<S> logits = ops::mul_scalar(ops::matmul(q, ops::transpose2d(k)),
                                       static_cast<S>(1.0 / std::sqrt(static_cast<double>(d))));
    Tensor<S> attn = ops::softmax(logits, 1);
    Tensor<S> mixed = ops::matmul(ops::matmul(attn, v), p.wo);
    return {ops::reshape(mixed, {c, h, w}), attn};
}

// Spatial branch: tokens are positions. Keys and values come from the
// s-pooled map, queries stay unpooled, so the attention map has shape
// (H*W, H*W/s^2).
template <typename S>
AttnResult<S> spatial_attention(const Tensor<S>& z_s, const AttnBranchParams<S>& p, int s) {
    if (z_s.rank() != 3) throw shape_error("spatial_attention: expected (C/2,H,W)");
    const int c = z_s.extent(0), h = z_s.extent(1), w = z_s.extent(2);
    if (s < 1 || h % s != 0 || w % s != 0)
        throw shape_error("spatial_attention: pool factor " + std::to_string(s) + " does not divide input");
    if (p.wq.extent(0) != c)
        throw shape_error("spatial_attention: projections expect token dim " + std::to_string(p.wq.extent(0)) +
                          ", input has " + std::to_string(c));
    const int n = h * w;
    const int np = (h / s) * (w / s);
    Tensor<S> x = ops::transpose2d(ops::reshape(z_s, {c, n}));          // (N, C/2)
    Tensor<S> pooled = ops::avg_pool2d(z_s, s);
    Tensor<S> xp = ops::transpose2d(ops::reshape(pooled, {c, np}));     // (N/s^2, C/2)
    Tensor<S> q = ops::matmul(x, p.wq);
    Tensor<S> k = ops::matmul(xp, p.wk);
    Tensor<S> v = ops::matmul(xp, p.wv);
    Tensor<S> logits = ops::mul_scalar(ops::matmul(q, ops::transpose2d(k)),
                                       static_cast<S>(1.0 / std::sqrt(static_cast<double>(c))));
    Tensor<S> attn = ops::softmax(logits, 1);
    Tensor<S> mixed = ops::matmul(ops::matmul(attn, v), p.wo);          // (N, C/2)
    return {ops::reshape(ops::transpose2d(mixed), {c, h, w}), attn};
}

// Dual-branch aggregation: first channel half goes through the spatial
// branch, second half through the channel branch, outputs concatenated in
// that order. The halves never mix inside this op.
template <typename S>
Tensor<S> haa_forward(const Tensor<S>& z, const HaeBlockParams<S>& p, const HaaConfig& cfg) {
    if (z.rank() != 3 || z.extent(0) != cfg.c_bar || z.extent(1) != cfg.h_bar || z.extent(2) != cfg.w_bar)
        throw shape_error("haa_forward: input shape does not match config");
    auto [z_s, z_c] = ops::chunk_channels(z);
    Tensor<S> s_out = spatial_attention(z_s, p.spatial, cfg.s).out;
    Tensor<S> c_out = channel_attention(z_c, p.channel).out;
    return ops::concat_channels<S>({s_out, c_out});
}

// Pre-norm encoder block: z' = z + HAA(LN(z)); f = z' + FFN(LN(z')).
template <typename S>
Tensor<S> hae_block_forward(const Tensor<S>& z, const HaeBlockParams<S>& p, const HaaConfig& cfg) {
    Tensor<S> h1 = ops::layer_norm(z, p.ln1_gain, p.ln1_bias, static_cast<S>(kLayerNormEps), 0);
    Tensor<S> z_prime = ops::add(z, haa_forward(h1, p, cfg));
    Tensor<S> h2 = ops::layer_norm(z_prime, p.ln2_gain, p.ln2_bias, static_cast<S>(kLayerNormEps), 0);
    // FFN is per-position: rows are spatial positions, columns channels.
    Tensor<S> tokens = ops::transpose2d(ops::reshape(h2, {cfg.c_bar, cfg.hw()}));
    Tensor<S> hidden = ops::gelu(ops::add_row_bias(ops::matmul(tokens, p.ffn_w1), p.ffn_b1));
    Tensor<S> ffn_out = ops::add_row_bias(ops::matmul(hidden, p.ffn_w2), p.ffn_b2);
    Tensor<S> ffn_map = ops::reshape(ops::transpose2d(ffn_out), {cfg.c_bar, cfg.h_bar, cfg.w_bar});
    return ops::add(z_prime, ffn_map);
}

} // namespace mxpp
