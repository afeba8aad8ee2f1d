#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mxpp/assignment.hpp"
#include "mxpp/encoder.hpp"
#include "mxpp/ops.hpp"

namespace mxpp {

inline constexpr int kNumComponents = 10;           // primitive alphabet size P
inline constexpr int kNullComponent = kNumComponents; // padding class for set matching

template <typename S>
struct ClassifierParams {
    Tensor<S> style_w, style_b;     // (k*c_bar, n_train_fonts), (n_train_fonts)
    Tensor<S> content_w, content_b; // (c_bar, P+1), (P+1)

    static ClassifierParams init(int k, int c_bar, int n_train_fonts, Rng& rng) {
        ClassifierParams p;
        p.style_w = HaeBlockParams<S>::init_matrix(k * c_bar, n_train_fonts, rng);
        p.style_b = Tensor<S>::zeros({n_train_fonts}, true);
        p.content_w = HaeBlockParams<S>::init_matrix(c_bar, kNumComponents + 1, rng);
        p.content_b = Tensor<S>::zeros({kNumComponents + 1}, true);
        return p;
    }

    void named(std::vector<std::pair<std::string, Tensor<S>>>& out) const {
        out.emplace_back("cls.style.w", style_w);
        out.emplace_back("cls.style.b", style_b);
        out.emplace_back("cls.content.w", content_w);
        out.emplace_back("cls.content.b", content_b);
    }
};

template <typename S>
struct GeneratorParams {
    Tensor<S> fuse_w, fuse_b; // (2*k*c_bar, c_bar), (c_bar)
    Tensor<S> dec1_w, dec1_b; // (8, c_bar, 3, 3), (8)
    Tensor<S> dec2_w, dec2_b; // (1, 8, 3, 3), (1)

    static GeneratorParams init(int k, int c_bar, Rng& rng) {
        GeneratorParams p;
        p.fuse_w = HaeBlockParams<S>::init_matrix(2 * k * c_bar, c_bar, rng);
        p.fuse_b = Tensor<S>::zeros({c_bar}, true);
        p.dec1_w = StemParams<S>::init_conv(8, c_bar, 3, rng);
        p.dec1_b = Tensor<S>::zeros({8}, true);
        p.dec2_w = StemParams<S>::init_conv(1, 8, 3, rng);
        p.dec2_b = Tensor<S>::zeros({1}, true);
        return p;
    }

    void named(std::vector<std::pair<std::string, Tensor<S>>>& out) const {
        out.emplace_back("gen.fuse.w", fuse_w);
        out.emplace_back("gen.fuse.b", fuse_b);
        out.emplace_back("gen.dec1.w", dec1_w);
        out.emplace_back("gen.dec1.b", dec1_b);
        out.emplace_back("gen.dec2.w", dec2_w);
        out.emplace_back("gen.dec2.b", dec2_b);
    }
};

template <typename S>
struct DiscriminatorParams {
    Tensor<S> conv1_w, conv1_b; // (8,1,3,3)
    Tensor<S> conv2_w, conv2_b; // (16,8,3,3)
    Tensor<S> conv3_w, conv3_b; // (32,16,3,3)
    Tensor<S> patch_w, patch_b; // (1,32,1,1), (1)
    Tensor<S> embed;            // (n_train_fonts, 32)

    static DiscriminatorParams init(int n_train_fonts, Rng& rng) {
        DiscriminatorParams p;
        p.conv1_w = StemParams<S>::init_conv(8, 1, 3, rng);
        p.conv1_b = Tensor<S>::zeros({8}, true);
        p.conv2_w = StemParams<S>::init_conv(16, 8, 3, rng);
        p.conv2_b = Tensor<S>::zeros({16}, true);
        p.conv3_w = StemParams<S>::init_conv(32, 16, 3, rng);
        p.conv3_b = Tensor<S>::zeros({32}, true);
        p.patch_w = StemParams<S>::init_conv(1, 32, 1, rng);
        p.patch_b = Tensor<S>::zeros({1}, true);
        p.embed = Tensor<S>::zeros({n_train_fonts, 32}, true);
        for (size_t i = 0; i < p.embed.numel(); ++i)
            p.embed.data()[i] = static_cast<S>(rng.uniform(-0.1, 0.1));
        return p;
    }

    void named(std::vector<std::pair<std::string, Tensor<S>>>& out) const {
        out.emplace_back("disc.conv1.w", conv1_w);
        out.emplace_back("disc.conv1.b", conv1_b);
        out.emplace_back("disc.conv2.w", conv2_w);
        out.emplace_back("disc.conv2.b", conv2_b);
        out.emplace_back("disc.conv3.w", conv3_w);
        out.emplace_back("disc.conv3.b", conv3_b);
        out.emplace_back("disc.patch.w", patch_w);
        out.emplace_back("disc.patch.b", patch_b);
        out.emplace_back("disc.embed", embed);
    }
};

// ---------------------------------------------------------------------------
// classifier heads

template <typename S>
Tensor<S> style_classify(const Tensor<S>& f_s, const ClassifierParams<S>& p) {
    if (f_s.rank() != 1 || f_s.extent(0) != p.style_w.extent(0))
        throw shape_error("style_classify: expected pooled style vector of length " +
                          std::to_string(p.style_w.extent(0)));
    return ops::linear(f_s, p.style_w, p.style_b);
}

template <typename S>
Tensor<S> content_classify(const Tensor<S>& f_c_pooled, const ClassifierParams<S>& p) {
    if (f_c_pooled.rank() != 1 || f_c_pooled.extent(0) != p.content_w.extent(0))
        throw shape_error("content_classify: expected pooled content vector of length " +
                          std::to_string(p.content_w.extent(0)));
    return ops::linear(f_c_pooled, p.content_w, p.content_b);
}

// ---------------------------------------------------------------------------
// set-matched component supervision

template <typename S>
struct MatchResult {
    std::vector<int> assignment; // expert index -> padded label index
    std::vector<int> labels;     // padded label list (component ids + nulls)
    Tensor<S> loss;              // minimal summed cross-entropy / k
};

// Pads the ground-truth component set with null labels to k entries, then
// matches experts to labels by minimal total cross-entropy. Gradients flow
// through the selected cross-entropy terms only; the discrete assignment
// itself is made on forward values.
template <typename S>
MatchResult<S> match_components(const std::vector<Tensor<S>>& per_expert_logits,
                                const std::vector<int>& comp_gt) {
    const int k = static_cast<int>(per_expert_logits.size());
    if (k == 0) throw shape_error("match_components: no expert logits");
    if (static_cast<int>(comp_gt.size()) > k)
        throw config_error("match_components: |comp_gt| = " + std::to_string(comp_gt.size()) +
                           " exceeds expert count k = " + std::to_string(k));
    std::vector<int> labels(comp_gt.begin(), comp_gt.end());
    std::sort(labels.begin(), labels.end());
    for (int label : labels)
        if (label < 0 || label > kNullComponent)
            throw config_error("match_components: component id out of range");
    while (static_cast<int>(labels.size()) < k) labels.push_back(kNullComponent);

    std::vector<std::vector<Tensor<S>>> ce(k);
    std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
    for (int i = 0; i < k; ++i) {
        Tensor<S> logp = ops::log_softmax(per_expert_logits[i], 0);
        for (int j = 0; j < k; ++j) {
            Tensor<S> term = ops::neg(ops::pick(logp, static_cast<size_t>(labels[j])));
            cost[i][j] = static_cast<double>(term.item());
            ce[i].push_back(std::move(term));
        }
    }
    std::vector<int> assignment = min_cost_assignment(cost);

    std::vector<Tensor<S>> picked;
    picked.reserve(k);
    for (int i = 0; i < k; ++i) picked.push_back(ce[i][assignment[i]]);
    MatchResult<S> r;
    r.assignment = std::move(assignment);
    r.labels = std::move(labels);
    r.loss = ops::mean_of(picked);
    return r;
}

// ---------------------------------------------------------------------------
// content-style homogeneity loss

// (cos(f_s, f_c) + 1) / 2, in [0,1]; minimal when the pooled vectors are
// anti-aligned. Degenerate inputs (norm < 1e-8) contribute the neutral value
// 0.5 with no gradient.
template <typename S>
Tensor<S> csh_loss(const Tensor<S>& f_s, const Tensor<S>& f_c) {
    ops::detail::require_same_shape(f_s, f_c, "csh_loss");
    double ns = 0.0, nc = 0.0;
    for (size_t i = 0; i < f_s.numel(); ++i) {
        ns += static_cast<double>(f_s.data()[i]) * f_s.data()[i];
        nc += static_cast<double>(f_c.data()[i]) * f_c.data()[i];
    }
    if (std::sqrt(ns) < 1e-8 || std::sqrt(nc) < 1e-8) {
        NoTapeScope<S> detached;
        return Tensor<S>::scalar(S(0.5));
    }
    Tensor<S> cosine = ops::div(ops::dot(f_s, f_c), ops::mul(ops::l2_norm(f_s), ops::l2_norm(f_c)));
    // clamp01 absorbs the one-ulp overshoot of the cosine at (anti-)collinear
    // inputs so the value is always a valid [0,1] loss.
    return ops::clamp01(ops::add_scalar(ops::mul_scalar(cosine, S(0.5)), S(0.5)));
}

// ---------------------------------------------------------------------------
// generator / discriminator

// Fuses per-expert (style, content) feature pairs and decodes to a 32x32
// image in [0,1]. Both bundle lists must come from the same expert count.
template <typename S>
Tensor<S> generate(const std::vector<ExpertBundle<S>>& content_bundles,
                   const std::vector<Tensor<S>>& style_maps,
                   const GeneratorParams<S>& p) {
    if (content_bundles.empty() || content_bundles.size() != style_maps.size())
        throw shape_error("generate: bundle count mismatch");
    std::vector<Tensor<S>> parts;
    parts.reserve(2 * content_bundles.size());
    for (size_t i = 0; i < content_bundles.size(); ++i) {
        parts.push_back(style_maps[i]);
        parts.push_back(content_bundles[i].f_c);
    }
    Tensor<S> stacked = ops::concat_channels(parts); // (2*k*c_bar, 8, 8)
    if (stacked.extent(0) != p.fuse_w.extent(0))
        throw shape_error("generate: fusion weight expects " + std::to_string(p.fuse_w.extent(0)) +
                          " channels, got " + std::to_string(stacked.extent(0)));
    Tensor<S> fused = ops::leaky_relu(
        ops::add_channel_bias(channel_linear(stacked, p.fuse_w), p.fuse_b), static_cast<S>(kLeakySlope));
    Tensor<S> up1 = ops::leaky_relu(
        ops::add_channel_bias(ops::conv2d(ops::upsample2x(fused), p.dec1_w, 1, 1), p.dec1_b),
        static_cast<S>(kLeakySlope));
    Tensor<S> up2 = ops::add_channel_bias(ops::conv2d(ops::upsample2x(up1), p.dec2_w, 1, 1), p.dec2_b);
    return ops::sigmoid(up2);
}

// Convenience overload: style maps taken straight from style bundles.
template <typename S>
Tensor<S> generate(const std::vector<ExpertBundle<S>>& content_bundles,
                   const std::vector<ExpertBundle<S>>& style_bundles,
                   const GeneratorParams<S>& p) {
    std::vector<Tensor<S>> maps;
    maps.reserve(style_bundles.size());
    for (const auto& b : style_bundles) maps.push_back(b.f_s);
    return generate(content_bundles, maps, p);
}

// Patch realness mean plus the font-projection term.
template <typename S>
Tensor<S> discriminate(const Tensor<S>& image, int font_id, const DiscriminatorParams<S>& p) {
    if (image.rank() != 3 || image.extent(0) != 1 || image.extent(1) != kImageSize || image.extent(2) != kImageSize)
        throw shape_error("discriminate: expected (1,32,32) image");
    if (font_id < 0 || font_id >= p.embed.extent(0))
        throw shape_error("discriminate: font id " + std::to_string(font_id) + " out of range");
    Tensor<S> t = ops::leaky_relu(ops::add_channel_bias(ops::conv2d(image, p.conv1_w, 2, 1), p.conv1_b),
                                  static_cast<S>(kLeakySlope));
    t = ops::leaky_relu(ops::add_channel_bias(ops::conv2d(t, p.conv2_w, 2, 1), p.conv2_b),
                        static_cast<S>(kLeakySlope));
    t = ops::leaky_relu(ops::add_channel_bias(ops::conv2d(t, p.conv3_w, 2, 1), p.conv3_b),
                        static_cast<S>(kLeakySlope));
    Tensor<S> patch = ops::add_channel_bias(ops::conv2d(t, p.patch_w, 1, 0), p.patch_b);
    Tensor<S> realness = ops::mean_all(patch);
    Tensor<S> proj = ops::dot(ops::spatial_mean(t), ops::row(p.embed, font_id));
    return ops::add(realness, proj);
}

// ---------------------------------------------------------------------------
// objectives

struct LossWeights {
    double adv = 1.0;
    double l1 = 10.0;
    double style = 1.0;
    double content = 1.0;
    double csh = 1.0;
};

struct LossReport {
    double adv_g = 0.0, adv_d = 0.0, recon_l1 = 0.0, style_ce = 0.0, content_ce = 0.0, csh = 0.0;
    double total = 0.0;
    LossWeights weights;
};

template <typename S>
struct LossTerms {
    Tensor<S> adv_g, adv_d, recon_l1, style_ce, content_ce, csh;
};

// Hinge objective for the discriminator: mean(relu(1-D(real))) +
// mean(relu(1+D(fake))). Scores must be scalar nodes.
template <typename S>
Tensor<S> hinge_d_loss(const std::vector<Tensor<S>>& real_scores, const std::vector<Tensor<S>>& fake_scores) {
    if (real_scores.empty() || fake_scores.empty()) throw shape_error("hinge_d_loss: empty score list");
    std::vector<Tensor<S>> real_terms, fake_terms;
    for (const auto& s : real_scores) real_terms.push_back(ops::relu(ops::add_scalar(ops::neg(s), S(1))));
    for (const auto& s : fake_scores) fake_terms.push_back(ops::relu(ops::add_scalar(s, S(1))));
    return ops::add(ops::mean_of(real_terms), ops::mean_of(fake_terms));
}

// Generator adversarial term: -mean(D(fake)).
template <typename S>
Tensor<S> hinge_g_loss(const std::vector<Tensor<S>>& fake_scores) {
    if (fake_scores.empty()) throw shape_error("hinge_g_loss: empty score list");
    return ops::neg(ops::mean_of(fake_scores));
}

// Weighted generator-side objective. The discriminator term is reported but
// never folded into the total. `include_csh` = false drops the homogeneity
// term from the graph entirely (its weight is reported as 0).
template <typename S>
std::pair<Tensor<S>, LossReport> total_loss(const LossTerms<S>& terms, const LossWeights& weights,
                                            bool include_csh = true) {
    LossReport r;
    r.weights = weights;
    if (!include_csh) r.weights.csh = 0.0;
    r.adv_g = static_cast<double>(terms.adv_g.item());
    r.adv_d = static_cast<double>(terms.adv_d.item());
    r.recon_l1 = static_cast<double>(terms.recon_l1.item());
    r.style_ce = static_cast<double>(terms.style_ce.item());
    r.content_ce = static_cast<double>(terms.content_ce.item());
    r.csh = static_cast<double>(terms.csh.item());
    for (double v : {r.adv_g, r.adv_d, r.recon_l1, r.style_ce, r.content_ce, r.csh})
        if (!std::isfinite(v)) throw numeric_error("total_loss: non-finite loss part");

    std::vector<Tensor<S>> weighted = {
        ops::mul_scalar(terms.adv_g, static_cast<S>(weights.adv)),
        ops::mul_scalar(terms.recon_l1, static_cast<S>(weights.l1)),
        ops::mul_scalar(terms.style_ce, static_cast<S>(weights.style)),
        ops::mul_scalar(terms.content_ce, static_cast<S>(weights.content)),
    };
    if (include_csh) weighted.push_back(ops::mul_scalar(terms.csh, static_cast<S>(weights.csh)));
    Tensor<S> total = ops::add_n(weighted);
    r.total = static_cast<double>(total.item());
    return {total, r};
}

} // namespace mxpp
