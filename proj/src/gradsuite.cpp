#include "mxpp/gradsuite.hpp"

#include <cmath>

namespace mxpp {

namespace {

using T = Tensor<double>;

T randn(std::vector<int> shape, Rng& rng, bool rg = true, double scale = 1.0) {
    T t = T::zeros(std::move(shape), rg);
    for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal() * scale;
    return t;
}

// Scalar readout against a fixed weight tensor so every output element gets
// a distinct adjoint and repeated evaluations see the same function.
T readout(const T& x, const T& w) { return ops::sum_all(ops::mul(x, w)); }

T fixed_weights(std::vector<int> shape, uint64_t seed) {
    Rng rng(seed);
    return randn(std::move(shape), rng, false);
}

void append(GradCheckReport& into, const GradCheckReport& part) {
    for (const auto& e : part.entries) into.entries.push_back(e);
}

GradCheckOptions base_options(int samples = 0, double corrupt = 1.0) {
    GradCheckOptions o;
    o.h = 1e-5;
    o.tol = 1e-4;
    o.max_samples_per_block = samples;
    o.corrupt_factor = corrupt;
    return o;
}

} // namespace

GradSuiteResult run_gradcheck_suite(bool sabotage) {
    GradSuiteResult result;
    result.report.tol = 1e-4;
    Rng rng(20240229);

    // --- individual ops -----------------------------------------------------
    {
        T a = randn({5, 4}, rng), b = randn({4, 3}, rng);
        T w = fixed_weights({5, 3}, 1);
        auto opts = base_options(0, sabotage ? 2.0 : 1.0);
        append(result.report, grad_check([&] { return readout(ops::matmul(a, b), w); },
                                         {{"op.matmul.a", a}, {"op.matmul.b", b}}, opts));
    }
    {
        T x = randn({3, 6}, rng);
        T w = fixed_weights({3, 6}, 2);
        append(result.report, grad_check([&] { return readout(ops::softmax(x, 1), w); },
                                         {{"op.softmax", x}}, base_options()));
        append(result.report, grad_check([&] { return readout(ops::log_softmax(x, 0), w); },
                                         {{"op.log_softmax", x}}, base_options()));
    }
    {
        T x = randn({4, 2, 3}, rng);
        T gain = randn({4}, rng), bias = randn({4}, rng);
        T w = fixed_weights({4, 2, 3}, 3);
        append(result.report,
               grad_check([&] { return readout(ops::layer_norm(x, gain, bias, 1e-5, 0), w); },
                          {{"op.layer_norm.x", x}, {"op.layer_norm.gain", gain}, {"op.layer_norm.bias", bias}},
                          base_options()));
    }
    {
        T x = randn({2, 6, 6}, rng);
        T k = randn({3, 2, 3, 3}, rng);
        T w = fixed_weights({3, 3, 3}, 4);
        append(result.report,
               grad_check([&] { return readout(ops::conv2d(x, k, 2, 1), w); },
                          {{"op.conv2d.x", x}, {"op.conv2d.k", k}}, base_options()));
    }
    {
        T x = randn({2, 4, 4}, rng);
        T w_pool = fixed_weights({2, 2, 2}, 5);
        append(result.report, grad_check([&] { return readout(ops::avg_pool2d(x, 2), w_pool); },
                                         {{"op.avg_pool2d", x}}, base_options()));
        T w_up = fixed_weights({2, 8, 8}, 6);
        append(result.report, grad_check([&] { return readout(ops::upsample2x(x), w_up); },
                                         {{"op.upsample2x", x}}, base_options()));
        T w_cat = fixed_weights({2, 4, 4}, 7);
        append(result.report,
               grad_check(
                   [&] {
                       auto [lo, hi] = ops::chunk_channels(x);
                       return readout(ops::concat_channels<double>({lo, hi}), w_cat);
                   },
                   {{"op.chunk_concat", x}}, base_options()));
    }
    {
        T x = randn({40}, rng);
        T w = fixed_weights({40}, 8);
        append(result.report, grad_check([&] { return readout(ops::leaky_relu(x, 0.2), w); },
                                         {{"op.leaky_relu", x}}, base_options()));
        append(result.report, grad_check([&] { return readout(ops::gelu(x), w); },
                                         {{"op.gelu", x}}, base_options()));
        append(result.report, grad_check([&] { return readout(ops::sigmoid(x), w); },
                                         {{"op.sigmoid", x}}, base_options()));
    }
    {
        T x = randn({6}, rng), w = randn({6, 4}, rng), b = randn({4}, rng);
        T w_out = fixed_weights({4}, 9);
        append(result.report,
               grad_check([&] { return readout(ops::linear(x, w, b), w_out); },
                          {{"op.linear.x", x}, {"op.linear.w", w}, {"op.linear.b", b}}, base_options()));
    }
    {
        T a = randn({12}, rng), b = randn({12}, rng);
        append(result.report, grad_check([&] { return csh_loss(a, b); },
                                         {{"op.csh.a", a}, {"op.csh.b", b}}, base_options()));
        T logits = randn({7}, rng);
        append(result.report, grad_check([&] { return ops::cross_entropy(logits, 3); },
                                         {{"op.cross_entropy", logits}}, base_options()));
    }

    // --- attention branches and the encoder block ----------------------------
    HaaConfig cfg;
    cfg.c_bar = 8;
    cfg.h_bar = cfg.w_bar = 4;
    cfg.s = 2;
    cfg.ffn_mult = 2;
    {
        Rng prng(77);
        HaeBlockParams<double> block = HaeBlockParams<double>::init(cfg, prng);
        T z = randn({cfg.c_bar, cfg.h_bar, cfg.w_bar}, rng);
        std::vector<std::pair<std::string, T>> params = {{"hae.z", z}};
        block.named("hae", params);
        T w = fixed_weights({cfg.c_bar, cfg.h_bar, cfg.w_bar}, 10);
        append(result.report,
               grad_check([&] { return readout(hae_block_forward(z, block, cfg), w); }, params,
                          base_options(12)));
    }

    // --- full composite objective --------------------------------------------
    {
        EncoderConfig enc_cfg; // desk-scale defaults: k=3, c_bar=16, 2 blocks
        const int n_fonts = 3;
        ModelParams<double> model = build_variant<double>(Variant::Full, n_fonts, 99, enc_cfg);

        T content = randn({1, kImageSize, kImageSize}, rng, false, 0.3);
        T target = randn({1, kImageSize, kImageSize}, rng, false, 0.3);
        std::vector<T> refs = {randn({1, kImageSize, kImageSize}, rng, false, 0.3),
                               randn({1, kImageSize, kImageSize}, rng, false, 0.3)};
        const int font_id = 1;
        const std::vector<int> comp_gt = {2, 5};
        LossWeights weights;

        auto composite = [&]() {
            auto content_bundles = encode(content, model.enc, model.enc_cfg);
            std::vector<T> comp_logits;
            for (int e = 0; e < enc_cfg.k; ++e)
                comp_logits.push_back(content_classify(ops::spatial_mean(content_bundles[e].f_c), model.cls));
            T content_ce = match_components(comp_logits, comp_gt).loss;

            std::vector<std::vector<T>> per_expert(enc_cfg.k);
            std::vector<T> style_terms, csh_terms;
            csh_terms.push_back(csh_loss(pool_style(content_bundles), pool_content(content_bundles)));
            for (const auto& ref : refs) {
                auto rb = encode(ref, model.enc, model.enc_cfg);
                style_terms.push_back(
                    ops::cross_entropy(style_classify(pool_style(rb), model.cls), font_id));
                csh_terms.push_back(csh_loss(pool_style(rb), pool_content(rb)));
                for (int e = 0; e < enc_cfg.k; ++e) per_expert[e].push_back(rb[e].f_s);
            }
            std::vector<T> style_maps;
            for (int e = 0; e < enc_cfg.k; ++e)
                style_maps.push_back(ops::mul_scalar(ops::add_n(per_expert[e]),
                                                     1.0 / static_cast<double>(per_expert[e].size())));
            T fake = generate(content_bundles, style_maps, model.gen);
            T adv_g = hinge_g_loss<double>({discriminate(fake, font_id, model.disc)});
            T recon = ops::mean_abs_error(fake, target);

            return ops::add_n<double>({ops::mul_scalar(adv_g, weights.adv),
                                       ops::mul_scalar(recon, weights.l1),
                                       ops::mul_scalar(ops::mean_of(style_terms), weights.style),
                                       ops::mul_scalar(content_ce, weights.content),
                                       ops::mul_scalar(ops::mean_of(csh_terms), weights.csh)});
        };

        std::vector<std::pair<std::string, T>> params;
        for (auto& [name, t] : model.named()) params.emplace_back("composite." + name, t);
        append(result.report, grad_check(composite, params, base_options(4)));

        // Discriminator hinge objective, fake held fixed.
        T fake_fixed = randn({1, kImageSize, kImageSize}, rng, false, 0.3);
        auto d_obj = [&]() {
            return hinge_d_loss<double>({discriminate(target, font_id, model.disc)},
                                        {discriminate(fake_fixed, font_id, model.disc)});
        };
        std::vector<std::pair<std::string, T>> d_params;
        for (auto& [name, t] : model.named_discriminator_side())
            d_params.emplace_back("hinge_d." + name, t);
        append(result.report, grad_check(d_obj, d_params, base_options(6)));
    }

    // --- negative control -----------------------------------------------------
    {
        T a = randn({6}, rng), b = randn({6}, rng);
        GradCheckReport corrupted =
            grad_check([&] { return ops::dot(a, b); }, {{"negcontrol.dot", a}}, base_options(0, 2.0));
        result.negative_control_detected = !corrupted.all_ok();
    }
    return result;
}

} // namespace mxpp
