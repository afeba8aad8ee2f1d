#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mxpp/attention.hpp"
#include "mxpp/ops.hpp"
#include "mxpp/rng.hpp"
#include "mxpp/tensor.hpp"

namespace mxpp {

inline constexpr int kImageSize = 32;
inline constexpr double kLeakySlope = 0.2;

struct EncoderConfig {
    int k = 3;
    HaaConfig haa{};
    int blocks_per_expert = 2;

    void validate() const {
        if (k < 2) throw shape_error("EncoderConfig: a mixture needs k >= 2 experts");
        if (blocks_per_expert < 1) throw shape_error("EncoderConfig: blocks_per_expert must be >= 1");
        haa.validate();
        // Two stride-2 convs take 32x32 down to 8x8; the block geometry must agree.
        if (haa.h_bar != kImageSize / 4 || haa.w_bar != kImageSize / 4)
            throw shape_error("EncoderConfig: stem produces 8x8 maps; haa.h_bar/w_bar must be 8");
    }
};

// Applies the 1x1 channel-linear map W^T to a feature map: (C_in,H,W) ->
// (C_out,H,W) with out[c'] = sum_c W[c][c'] * f[c].
template <typename S>
Tensor<S> channel_linear(const Tensor<S>& f, const Tensor<S>& w) {
    if (f.rank() != 3 || w.rank() != 2 || w.extent(0) != f.extent(0))
        throw shape_error("channel_linear: weight rows must equal input channels");
    const int h = f.extent(1), wd = f.extent(2);
    Tensor<S> fmat = ops::reshape(f, {f.extent(0), h * wd});
    Tensor<S> out = ops::matmul(ops::transpose2d(w), fmat);
    return ops::reshape(out, {w.extent(1), h, wd});
}

template <typename S>
struct StemParams {
    Tensor<S> w1, b1; // (8,1,3,3), (8)
    Tensor<S> w2, b2; // (c_bar,8,3,3), (c_bar)

    static StemParams init(int c_bar, Rng& rng) {
        StemParams p;
        p.w1 = init_conv(8, 1, 3, rng);
        p.b1 = Tensor<S>::zeros({8}, true);
        p.w2 = init_conv(c_bar, 8, 3, rng);
        p.b2 = Tensor<S>::zeros({c_bar}, true);
        return p;
    }

    static Tensor<S> init_conv(int co, int ci, int kk, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(ci * kk * kk));
        Tensor<S> t = Tensor<S>::zeros({co, ci, kk, kk}, true);
        for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
        return t;
    }

    void named(const std::string& prefix, std::vector<std::pair<std::string, Tensor<S>>>& out) const {
        out.emplace_back(prefix + ".conv1.w", w1);
        out.emplace_back(prefix + ".conv1.b", b1);
        out.emplace_back(prefix + ".conv2.w", w2);
        out.emplace_back(prefix + ".conv2.b", b2);
    }
};

// Plain convolutional expert block used by the attention-ablated variant.
template <typename S>
struct ConvBlockParams {
    Tensor<S> w, b; // (c_bar,c_bar,3,3), (c_bar)

    static ConvBlockParams init(int c_bar, Rng& rng) {
        ConvBlockParams p;
        p.w = StemParams<S>::init_conv(c_bar, c_bar, 3, rng);
        p.b = Tensor<S>::zeros({c_bar}, true);
        return p;
    }

    void named(const std::string& prefix, std::vector<std::pair<std::string, Tensor<S>>>& out) const {
        out.emplace_back(prefix + ".conv.w", w);
        out.emplace_back(prefix + ".conv.b", b);
    }
};

template <typename S>
using ExpertBlockParams = std::variant<HaeBlockParams<S>, ConvBlockParams<S>>;

template <typename S>
Tensor<S> expert_block_forward(const Tensor<S>& z, const ExpertBlockParams<S>& block, const HaaConfig& cfg) {
    if (std::holds_alternative<HaeBlockParams<S>>(block))
        return hae_block_forward(z, std::get<HaeBlockParams<S>>(block), cfg);
    const auto& conv = std::get<ConvBlockParams<S>>(block);
    return ops::leaky_relu(ops::add_channel_bias(ops::conv2d(z, conv.w, 1, 1), conv.b),
                           static_cast<S>(kLeakySlope));
}

template <typename S>
struct HeadPair {
    Tensor<S> content_w, style_w; // (c_bar, c_bar) each
};

template <typename S>
struct ExpertBundle {
    Tensor<S> f;   // raw expert feature
    Tensor<S> f_c; // content projection
    Tensor<S> f_s; // style projection
};

template <typename S>
struct EncoderParams {
    StemParams<S> stem;
    std::vector<std::vector<ExpertBlockParams<S>>> experts; // k x blocks_per_expert
    std::vector<HeadPair<S>> heads;                         // k pairs

    static EncoderParams init(const EncoderConfig& cfg, Rng& rng, bool attention_experts) {
        cfg.validate();
        EncoderParams p;
        p.stem = StemParams<S>::init(cfg.haa.c_bar, rng);
        p.experts.resize(cfg.k);
        for (int i = 0; i < cfg.k; ++i) {
            for (int b = 0; b < cfg.blocks_per_expert; ++b) {
                if (attention_experts)
                    p.experts[i].push_back(HaeBlockParams<S>::init(cfg.haa, rng));
                else
                    p.experts[i].push_back(ConvBlockParams<S>::init(cfg.haa.c_bar, rng));
            }
        }
        for (int i = 0; i < cfg.k; ++i) {
            HeadPair<S> h;
            h.content_w = HaeBlockParams<S>::init_square(cfg.haa.c_bar, rng);
            h.style_w = HaeBlockParams<S>::init_square(cfg.haa.c_bar, rng);
            p.heads.push_back(std::move(h));
        }
        return p;
    }

    void named(std::vector<std::pair<std::string, Tensor<S>>>& out) const {
        stem.named("enc.stem", out);
        for (size_t i = 0; i < experts.size(); ++i) {
            for (size_t b = 0; b < experts[i].size(); ++b) {
                const std::string prefix = "enc.expert" + std::to_string(i) + ".block" + std::to_string(b);
                std::visit([&](const auto& blk) { blk.named(prefix, out); }, experts[i][b]);
            }
        }
        for (size_t i = 0; i < heads.size(); ++i) {
            out.emplace_back("enc.head" + std::to_string(i) + ".content_w", heads[i].content_w);
            out.emplace_back("enc.head" + std::to_string(i) + ".style_w", heads[i].style_w);
        }
    }
};

// Shared CNN front: 32x32 -> (c_bar, 8, 8) via two stride-2 convs.
template <typename S>
Tensor<S> stem_forward(const Tensor<S>& x, const StemParams<S>& p) {
    if (x.rank() != 3 || x.extent(0) != 1 || x.extent(1) != kImageSize || x.extent(2) != kImageSize)
        throw shape_error("stem_forward: expected (1,32,32) input");
    Tensor<S> h = ops::leaky_relu(ops::add_channel_bias(ops::conv2d(x, p.w1, 2, 1), p.b1),
                                  static_cast<S>(kLeakySlope));
    return ops::leaky_relu(ops::add_channel_bias(ops::conv2d(h, p.w2, 2, 1), p.b2),
                           static_cast<S>(kLeakySlope));
}

// Runs the shared stem once, then every expert stack plus its head pair.
template <typename S>
std::vector<ExpertBundle<S>> encode(const Tensor<S>& x, const EncoderParams<S>& p, const EncoderConfig& cfg) {
    Tensor<S> z = stem_forward(x, p.stem);
    std::vector<ExpertBundle<S>> bundles;
    bundles.reserve(p.experts.size());
    for (size_t i = 0; i < p.experts.size(); ++i) {
        Tensor<S> f = z;
        for (const auto& block : p.experts[i]) f = expert_block_forward(f, block, cfg.haa);
        ExpertBundle<S> b;
        b.f = f;
        b.f_c = channel_linear(f, p.heads[i].content_w);
        b.f_s = channel_linear(f, p.heads[i].style_w);
        bundles.push_back(std::move(b));
    }
    return bundles;
}

// Spatial mean of each expert's style map, concatenated in expert order.
template <typename S>
Tensor<S> pool_style(const std::vector<ExpertBundle<S>>& bundles) {
    std::vector<Tensor<S>> parts;
    parts.reserve(bundles.size());
    for (const auto& b : bundles) parts.push_back(ops::spatial_mean(b.f_s));
    return ops::concat_channels(parts);
}

template <typename S>
Tensor<S> pool_content(const std::vector<ExpertBundle<S>>& bundles) {
    std::vector<Tensor<S>> parts;
    parts.reserve(bundles.size());
    for (const auto& b : bundles) parts.push_back(ops::spatial_mean(b.f_c));
    return ops::concat_channels(parts);
}

} // namespace mxpp
