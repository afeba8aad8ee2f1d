#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mxpp/gradcheck.hpp"
#include "mxpp/model.hpp"
#include "mxpp/trainer.hpp"
#include "oracles.hpp"

using namespace mxpp;
using T = Tensor<double>;

namespace {

T randn(std::vector<int> shape, Rng& rng, bool rg = false) {
    T t = T::zeros(std::move(shape), rg);
    for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal();
    return t;
}

} // namespace

TEST_CASE("style classifier: shape and uniform-baseline cross-entropy") {
    Rng rng(1);
    ClassifierParams<double> cls = ClassifierParams<double>::init(3, 16, 12, rng);
    // Zero weights and bias -> uniform predictive distribution.
    for (size_t i = 0; i < cls.style_w.numel(); ++i) cls.style_w.data()[i] = 0.0;
    T f_s = randn({48}, rng);
    T logits = style_classify(f_s, cls);
    REQUIRE(logits.shape() == std::vector<int>{12});
    for (size_t i = 0; i < logits.numel(); ++i) CHECK(logits.data()[i] == 0.0);
    T ce = ops::cross_entropy(logits, 4);
    CHECK(ce.item() == doctest::Approx(std::log(12.0)));

    CHECK_THROWS_AS(style_classify(randn({47}, rng), cls), shape_error);
}

TEST_CASE("content classifier: P+1 logits and uniform baseline") {
    Rng rng(2);
    ClassifierParams<double> cls = ClassifierParams<double>::init(3, 16, 12, rng);
    for (size_t i = 0; i < cls.content_w.numel(); ++i) cls.content_w.data()[i] = 0.0;
    T f_c = randn({16}, rng);
    T logits = content_classify(f_c, cls);
    REQUIRE(logits.shape() == std::vector<int>{11});
    CHECK(ops::cross_entropy(logits, 10).item() == doctest::Approx(std::log(11.0)));
}

TEST_CASE("classifier gradients match central differences") {
    Rng rng(3);
    ClassifierParams<double> cls = ClassifierParams<double>::init(3, 16, 12, rng);
    T f_s = randn({48}, rng, true);
    auto report = grad_check(
        [&] { return ops::cross_entropy(style_classify(f_s, cls), 7); },
        {{"f_s", f_s}, {"w", cls.style_w}, {"b", cls.style_b}});
    CHECK_MESSAGE(report.all_ok(), report.summary());

    T f_c = randn({16}, rng, true);
    auto report2 = grad_check(
        [&] { return ops::cross_entropy(content_classify(f_c, cls), 2); },
        {{"f_c", f_c}, {"w", cls.content_w}, {"b", cls.content_b}});
    CHECK_MESSAGE(report2.all_ok(), report2.summary());
}

TEST_CASE("component matching: confident experts get their labels") {
    // Expert 1 predicts component 4 confidently; the others predict null.
    auto confident = [](int target) {
        T logits = T::full({11}, -20.0);
        logits.data()[target] = 20.0;
        return logits;
    };
    std::vector<T> logits = {confident(kNullComponent), confident(4), confident(kNullComponent)};
    auto result = match_components(logits, {4});
    // Labels are sorted: {4, null, null}. Expert 1 must take index 0.
    CHECK(result.labels == std::vector<int>{4, kNullComponent, kNullComponent});
    CHECK(result.assignment[1] == 0);
    CHECK(result.loss.item() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("component matching: identical logits are permutation-invariant") {
    Rng rng(4);
    T shared = randn({11}, rng);
    std::vector<T> logits = {shared, shared, shared};
    auto result = match_components(logits, {1, 5});
    // Any assignment gives the same value: the per-expert CE average.
    double mx = shared.data()[0];
    for (size_t i = 0; i < shared.numel(); ++i) mx = std::max(mx, shared.data()[i]);
    double denom = 0.0;
    for (size_t i = 0; i < shared.numel(); ++i) denom += std::exp(shared.data()[i] - mx);
    auto ce = [&](int label) { return -(shared.data()[label] - mx - std::log(denom)); };
    const double expect = (ce(1) + ce(5) + ce(kNullComponent)) / 3.0;
    CHECK(result.loss.item() == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("component matching equals the exhaustive permutation minimum") {
    Rng rng(5);
    for (int k : {2, 3, 4}) {
        for (int trial = 0; trial < 40; ++trial) {
            std::vector<T> logits;
            std::vector<std::vector<double>> raw;
            for (int e = 0; e < k; ++e) {
                T l = randn({11}, rng);
                raw.push_back(l.values());
                logits.push_back(l);
            }
            const int n_comp = 1 + static_cast<int>(rng.below(k));
            std::vector<int> comp;
            while (static_cast<int>(comp.size()) < n_comp) {
                int c = static_cast<int>(rng.below(10));
                if (std::find(comp.begin(), comp.end(), c) == comp.end()) comp.push_back(c);
            }
            auto result = match_components(logits, comp);
            CHECK(result.loss.item() ==
                  doctest::Approx(oracles::brute_force_match(raw, comp, kNullComponent)).epsilon(1e-9));
        }
    }
}

TEST_CASE("component matching rejects oversized ground-truth sets") {
    Rng rng(6);
    std::vector<T> logits = {randn({11}, rng), randn({11}, rng)};
    CHECK_THROWS_AS(match_components(logits, {1, 2, 3}), config_error);
}

TEST_CASE("csh loss closed forms") {
    T f = T::from_data({4}, {1, -2, 0.5, 3});
    CHECK(csh_loss(f, f).item() == doctest::Approx(1.0));
    CHECK(csh_loss(f, ops::neg(f)).item() == doctest::Approx(0.0));

    T a = T::from_data({2}, {1, 0});
    T b = T::from_data({2}, {0, 1});
    CHECK(csh_loss(a, b).item() == doctest::Approx(0.5));

    // Degenerate guard: near-zero norm contributes 0.5 with no gradient.
    T zero = T::zeros({4}, true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    T loss = csh_loss(zero, f);
    CHECK(loss.item() == doctest::Approx(0.5));
    CHECK_FALSE(loss.requires_grad());
}

TEST_CASE("csh loss properties over random pairs") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        T a = randn({12}, rng);
        T b = randn({12}, rng);
        const double v = csh_loss(a, b).item();
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        // Positive rescaling of either argument leaves the value unchanged.
        const double s1 = rng.uniform(0.1, 10.0);
        const double s2 = rng.uniform(0.1, 10.0);
        CHECK(csh_loss(ops::mul_scalar(a, s1), b).item() == doctest::Approx(v).epsilon(1e-6));
        CHECK(csh_loss(a, ops::mul_scalar(b, s2)).item() == doctest::Approx(v).epsilon(1e-6));
    }
}

TEST_CASE("generator output is a [0,1] image and reacts to both inputs") {
    EncoderConfig cfg;
    Rng rng(8);
    auto model = build_variant<double>(Variant::Full, 4, 42);
    T content_img = randn({1, 32, 32}, rng);
    T style_img = randn({1, 32, 32}, rng);
    auto cb = encode(content_img, model.enc, cfg);
    auto sb = encode(style_img, model.enc, cfg);

    T out = generate(cb, sb, model.gen);
    REQUIRE(out.shape() == std::vector<int>{1, 32, 32});
    for (size_t i = 0; i < out.numel(); ++i) {
        CHECK(out.data()[i] >= 0.0);
        CHECK(out.data()[i] <= 1.0);
    }

    // Swapping the content and style sources changes the fusion input order.
    T swapped = generate(sb, cb, model.gen);
    CHECK(out.values() != swapped.values());
}

TEST_CASE("generation backpropagates into both encoder passes and all heads") {
    EncoderConfig cfg;
    auto model = build_variant<double>(Variant::Full, 4, 43);
    Rng rng(9);
    T content_img = randn({1, 32, 32}, rng);
    T style_img = randn({1, 32, 32}, rng);
    T target = randn({1, 32, 32}, rng);

    Tape<double> tape;
    {
        TapeScope<double> scope(tape);
        auto cb = encode(content_img, model.enc, cfg);
        auto sb = encode(style_img, model.enc, cfg);
        T out = generate(cb, sb, model.gen);
        T loss = ops::mean_abs_error(out, target);
        tape.backward(loss);
    }
    auto has_grad = [](const T& t) {
        for (double g : t.grad_view())
            if (g != 0.0) return true;
        return false;
    };
    CHECK(has_grad(model.enc.stem.w1));
    CHECK(has_grad(model.gen.fuse_w));
    CHECK(has_grad(model.gen.dec2_w));
    for (int e = 0; e < cfg.k; ++e) {
        CHECK(has_grad(model.enc.heads[e].content_w));
        CHECK(has_grad(model.enc.heads[e].style_w));
    }
}

TEST_CASE("discriminator: zero weights score zero, extremes stay finite") {
    Rng rng(10);
    auto model = build_variant<double>(Variant::Full, 4, 44);
    for (auto& [name, t] : model.named_discriminator_side())
        for (size_t i = 0; i < t.numel(); ++i) const_cast<T&>(t).data()[i] = 0.0;
    T img = randn({1, 32, 32}, rng);
    CHECK(discriminate(img, 2, model.disc).item() == doctest::Approx(0.0));

    auto model2 = build_variant<double>(Variant::Full, 4, 45);
    for (double fill : {0.0, 1.0}) {
        T extreme = T::full({1, 32, 32}, fill);
        CHECK(std::isfinite(discriminate(extreme, 1, model2.disc).item()));
    }
    CHECK_THROWS_AS(discriminate(img, 7, model2.disc), shape_error);
}

TEST_CASE("discriminator gradients match central differences") {
    auto model = build_variant<double>(Variant::Full, 3, 46);
    Rng rng(11);
    T img = randn({1, 32, 32}, rng, true);
    std::vector<std::pair<std::string, T>> params = {{"img", img}};
    for (auto& [name, t] : model.named_discriminator_side()) params.emplace_back(name, t);
    GradCheckOptions opts;
    opts.max_samples_per_block = 8;
    auto report = grad_check([&] { return discriminate(img, 1, model.disc); }, params, opts);
    CHECK_MESSAGE(report.all_ok(), report.summary());
}

TEST_CASE("total_loss arithmetic and hinge cutoffs") {
    auto scalar = [](double v) { return T::scalar(v); };
    LossTerms<double> zero{scalar(0), scalar(0), scalar(0), scalar(0), scalar(0), scalar(0)};
    LossWeights w;
    auto [t0, r0] = total_loss(zero, w);
    CHECK(t0.item() == doctest::Approx(0.0));
    CHECK(r0.total == doctest::Approx(0.0));

    LossTerms<double> parts{scalar(0.2), scalar(0.0), scalar(0.03), scalar(1.1), scalar(0.9), scalar(0.6)};
    auto [t1, r1] = total_loss(parts, w);
    CHECK(t1.item() == doctest::Approx(3.1));
    const double recomputed = w.adv * r1.adv_g + w.l1 * r1.recon_l1 + w.style * r1.style_ce +
                              w.content * r1.content_ce + w.csh * r1.csh;
    CHECK(std::abs(r1.total - recomputed) < 1e-6);

    // Margin satisfied on both sides -> zero discriminator loss.
    T high = scalar(2.0), low = scalar(-2.0);
    CHECK(hinge_d_loss<double>({high}, {low}).item() == doctest::Approx(0.0));
    CHECK(hinge_g_loss<double>({low}).item() == doctest::Approx(2.0));

    // csh excluded from the graph when disabled; still reported.
    auto [t2, r2] = total_loss(parts, w, false);
    CHECK(t2.item() == doctest::Approx(3.1 - 0.6));
    CHECK(r2.csh == doctest::Approx(0.6));
    CHECK(r2.weights.csh == 0.0);
}

TEST_CASE("total_loss rejects non-finite parts") {
    auto scalar = [](double v) { return T::scalar(v); };
    LossTerms<double> parts{scalar(0.2), scalar(0), scalar(0.03), scalar(1.1), scalar(0.9), scalar(0.6)};
    // Forge a non-finite value bypassing op checks.
    parts.recon_l1.data()[0] = std::numeric_limits<double>::infinity();
    LossWeights w;
    CHECK_THROWS_AS(total_loss(parts, w), numeric_error);
}
