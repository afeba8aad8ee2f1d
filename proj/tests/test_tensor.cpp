#include <doctest.h>

#include <cmath>

#include "mxpp/gradcheck.hpp"
#include "mxpp/ops.hpp"
#include "mxpp/rng.hpp"
#include "mxpp/tensor.hpp"

using namespace mxpp;
using T = Tensor<double>;

namespace {

T randn(std::vector<int> shape, Rng& rng, bool rg = true) {
    T t = T::zeros(std::move(shape), rg);
    for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal();
    return t;
}

} // namespace

TEST_CASE("matmul identity and hand-checked values") {
    T eye = T::from_data({2, 2}, {1, 0, 0, 1});
    T m = T::from_data({2, 2}, {1, 2, 3, 4});
    T out = ops::matmul(eye, m);
    CHECK(out.values() == m.values());

    T a = T::from_data({1, 2}, {1, 2});
    T b = T::from_data({2, 1}, {3, 4});
    CHECK(ops::matmul(a, b).item() == doctest::Approx(11.0));

    T bad = T::from_data({3, 1}, {1, 2, 3});
    CHECK_THROWS_AS(ops::matmul(a, bad), shape_error);
}

TEST_CASE("matmul gradients match central differences") {
    Rng rng(42);
    T a = randn({5, 4}, rng);
    T b = randn({4, 3}, rng);
    Rng ro(7);
    T w = randn({5, 3}, ro, false);
    auto report = grad_check([&] { return ops::sum_all(ops::mul(ops::matmul(a, b), w)); },
                             {{"a", a}, {"b", b}});
    CHECK(report.all_ok());
    CHECK(report.worst() < 1e-4);
}

TEST_CASE("softmax closed forms and stability") {
    T x = T::from_data({2}, {0, 0});
    auto y = ops::softmax(x, 0);
    CHECK(y.data()[0] == doctest::Approx(0.5));
    CHECK(y.data()[1] == doctest::Approx(0.5));

    T big = T::from_data({2}, {1000, 1000});
    auto yb = ops::softmax(big, 0);
    CHECK(yb.data()[0] == doctest::Approx(0.5));
    CHECK(std::isfinite(yb.data()[0]));

    T z = T::from_data({2}, {0, std::log(3.0)});
    auto yz = ops::softmax(z, 0);
    CHECK(yz.data()[0] == doctest::Approx(0.25));
    CHECK(yz.data()[1] == doctest::Approx(0.75));

    CHECK_THROWS_AS(ops::softmax(x, 1), shape_error);
}

TEST_CASE("softmax slices sum to one across axes and magnitudes") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        T x = T::zeros({3, 4, 5});
        for (size_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(-1e3, 1e3);
        const int axis = static_cast<int>(rng.below(3));
        T y = ops::softmax(x, axis);
        // Sum along the softmax axis for every slice.
        size_t outer = 1, inner = 1;
        int len = x.shape()[axis];
        for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
        for (size_t i = axis + 1; i < x.shape().size(); ++i) inner *= x.shape()[i];
        for (size_t o = 0; o < outer; ++o)
            for (size_t in = 0; in < inner; ++in) {
                double s = 0;
                for (int l = 0; l < len; ++l) s += y.data()[o * len * inner + l * inner + in];
                CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
            }
        for (size_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] >= 0.0);
    }
}

TEST_CASE("layer_norm closed forms") {
    T constant = T::from_data({4}, {3, 3, 3, 3});
    T gain = T::from_data({4}, {1, 1, 1, 1});
    T bias = T::zeros({4});
    T out = ops::layer_norm(constant, gain, bias, 1e-5, 0);
    for (size_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == doctest::Approx(0.0));

    T two = T::from_data({2}, {1, 3});
    T g2 = T::from_data({2}, {1, 1});
    T b2 = T::zeros({2});
    T o2 = ops::layer_norm(two, g2, b2, 1e-12, 0);
    CHECK(o2.data()[0] == doctest::Approx(-1.0));
    CHECK(o2.data()[1] == doctest::Approx(1.0));
}

TEST_CASE("layer_norm gradients match central differences") {
    Rng rng(11);
    T x = randn({6, 2, 2}, rng);
    T gain = randn({6}, rng);
    T bias = randn({6}, rng);
    Rng ro(3);
    T w = randn({6, 2, 2}, ro, false);
    auto report = grad_check(
        [&] { return ops::sum_all(ops::mul(ops::layer_norm(x, gain, bias, 1e-5, 0), w)); },
        {{"x", x}, {"gain", gain}, {"bias", bias}});
    CHECK(report.all_ok());
}

TEST_CASE("conv2d identity, sum kernel, and errors") {
    Rng rng(5);
    T x = randn({1, 4, 4}, rng, false);
    T k1 = T::from_data({1, 1, 1, 1}, {1});
    T out = ops::conv2d(x, k1, 1, 0);
    CHECK(out.values() == x.values());

    T ones = T::full({1, 3, 3}, 1.0);
    T k3 = T::full({1, 1, 3, 3}, 1.0);
    T sum = ops::conv2d(ones, k3, 1, 0);
    CHECK(sum.numel() == 1);
    CHECK(sum.item() == doctest::Approx(9.0));

    T tiny = T::full({1, 2, 2}, 1.0);
    CHECK_THROWS_AS(ops::conv2d(tiny, k3, 1, 0), shape_error);
}

TEST_CASE("conv2d gradients match central differences") {
    Rng rng(12);
    T x = randn({2, 5, 5}, rng);
    T k = randn({3, 2, 3, 3}, rng);
    Rng ro(4);
    auto report = grad_check(
        [&] {
            Rng r2(4);
            T w = randn({3, 3, 3}, r2, false);
            return ops::sum_all(ops::mul(ops::conv2d(x, k, 2, 1), w));
        },
        {{"x", x}, {"k", k}});
    CHECK(report.all_ok());
}

TEST_CASE("avg_pool2d values and gradient spread") {
    T c = T::full({3, 4, 4}, 7.5);
    T pooled = ops::avg_pool2d(c, 2);
    CHECK(pooled.shape() == std::vector<int>{3, 2, 2});
    for (size_t i = 0; i < pooled.numel(); ++i) CHECK(pooled.data()[i] == doctest::Approx(7.5));

    T m = T::from_data({1, 2, 2}, {1, 2, 3, 4});
    CHECK(ops::avg_pool2d(m, 2).item() == doctest::Approx(2.5));

    T odd = T::full({1, 3, 3}, 1.0);
    CHECK_THROWS_AS(ops::avg_pool2d(odd, 2), shape_error);

    Rng rng(13);
    T x = randn({2, 4, 4}, rng);
    auto report = grad_check(
        [&] {
            Rng r2(5);
            T w = randn({2, 2, 2}, r2, false);
            return ops::sum_all(ops::mul(ops::avg_pool2d(x, 2), w));
        },
        {{"x", x}});
    CHECK(report.all_ok());
}

TEST_CASE("chunk and concat channel semantics") {
    T z = T::from_data({4, 1, 2}, {0, 1, 10, 11, 20, 21, 30, 31});
    auto [lo, hi] = ops::chunk_channels(z);
    CHECK(lo.shape() == std::vector<int>{2, 1, 2});
    CHECK(lo.values() == std::vector<double>{0, 1, 10, 11});
    CHECK(hi.values() == std::vector<double>{20, 21, 30, 31});

    T back = ops::concat_channels<double>({lo, hi});
    CHECK(back.values() == z.values()); // bitwise round trip

    T single = ops::concat_channels<double>({z});
    CHECK(single.values() == z.values());

    T a = T::full({2, 2, 2}, 1.0);
    T b = T::full({3, 2, 2}, 2.0);
    T cat = ops::concat_channels<double>({a, b});
    CHECK(cat.shape() == std::vector<int>{5, 2, 2});
    CHECK(cat.data()[0] == 1.0);
    CHECK(cat.data()[2 * 4] == 2.0);

    T odd = T::full({3, 2, 2}, 1.0);
    CHECK_THROWS_AS(ops::chunk_channels(odd), shape_error);
    T mismatched = T::full({2, 3, 2}, 1.0);
    CHECK_THROWS_AS(ops::concat_channels<double>({a, mismatched}), shape_error);
}

TEST_CASE("chunk/concat gradients are the identity map") {
    Rng rng(14);
    T z = randn({4, 2, 2}, rng);
    auto report = grad_check(
        [&] {
            auto [lo, hi] = ops::chunk_channels(z);
            Rng r2(6);
            T w = randn({4, 2, 2}, r2, false);
            return ops::sum_all(ops::mul(ops::concat_channels<double>({lo, hi}), w));
        },
        {{"z", z}});
    CHECK(report.all_ok());
}

TEST_CASE("backward populates leaf gradients") {
    Rng rng(15);
    T x = randn({3, 3}, rng);

    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        T loss = ops::sum_all(x);
        tape.backward(loss);
        for (size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));
        x.zero_grad();
    }
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        T loss = ops::mul_scalar(ops::sum_all(ops::mul(x, x)), 0.5);
        tape.backward(loss);
        for (size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(x.data()[i]));
        x.zero_grad();
    }
}

TEST_CASE("backward rejects non-scalar, detached, and repeated calls") {
    Rng rng(16);
    T x = randn({2, 2}, rng);

    Tape<double> tape;
    {
        TapeScope<double> scope(tape);
        T vec = ops::mul_scalar(x, 2.0);
        CHECK_THROWS_AS(tape.backward(vec), shape_error);
    }

    // Loss computed with no active tape is detached.
    T detached_loss = ops::sum_all(x);
    CHECK_THROWS_AS(tape.backward(detached_loss), shape_error);

    tape.reset();
    {
        TapeScope<double> scope(tape);
        T loss = ops::sum_all(x);
        tape.backward(loss);
        CHECK_THROWS_AS(tape.backward(loss), shape_error);
        tape.reset();
        x.zero_grad();
    }
}

TEST_CASE("non-finite values abort with the op name") {
    T huge = T::full({2}, 1e308);
    try {
        ops::add(huge, huge);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("add") != std::string::npos);
    }
    CHECK_THROWS_AS(T::from_data({1}, {std::nan("")}), numeric_error);
}

TEST_CASE("forward passes are deterministic") {
    auto run = [] {
        Rng rng(99);
        T x = randn({4, 3}, rng);
        T y = randn({3, 5}, rng);
        return ops::softmax(ops::matmul(x, y), 1).values();
    };
    CHECK(run() == run());
}

TEST_CASE("grad_check verifies a linear map tightly") {
    Rng rng(17);
    T x = randn({8}, rng);
    auto report = grad_check([&] { return ops::mul_scalar(ops::sum_all(x), 3.0); }, {{"x", x}});
    CHECK(report.all_ok());
    CHECK(report.worst() < 1e-8);
}

TEST_CASE("grad_check flags a corrupted gradient") {
    Rng rng(18);
    T x = randn({8}, rng);
    GradCheckOptions opts;
    opts.corrupt_factor = 2.0;
    auto report = grad_check([&] { return ops::sum_all(ops::mul(x, x)); }, {{"x", x}}, opts);
    CHECK_FALSE(report.all_ok());
}

TEST_CASE("remaining op gradients: activations, bias, reductions, picks") {
    Rng rng(19);
    T x = randn({3, 4}, rng);
    T b = randn({4}, rng);
    Rng ro(8);
    T w = randn({3, 4}, ro, false);

    auto check = [&](auto fn, const char* label) {
        auto report = grad_check(fn, {{label, x}, {"b", b}});
        CHECK_MESSAGE(report.all_ok(), label, ": ", report.summary());
    };
    check([&] { return ops::sum_all(ops::mul(ops::add_row_bias(x, b), w)); }, "add_row_bias");
    check([&] { return ops::sum_all(ops::mul(ops::leaky_relu(x, 0.2), w)); }, "leaky_relu");
    check([&] { return ops::sum_all(ops::mul(ops::gelu(x), w)); }, "gelu");
    check([&] { return ops::sum_all(ops::mul(ops::sigmoid(x), w)); }, "sigmoid");
    check([&] { return ops::mean_all(ops::mul(x, x)); }, "mean_all");
    check([&] { return ops::pick(x, 5); }, "pick");
    check([&] { return ops::l2_norm(x); }, "l2_norm");

    T img = randn({2, 3, 3}, rng);
    auto rep = grad_check(
        [&] {
            Rng r2(9);
            T w2 = randn({2}, r2, false);
            return ops::sum_all(ops::mul(ops::spatial_mean(img), w2));
        },
        {{"img", img}});
    CHECK(rep.all_ok());

    T a2 = randn({5}, rng), b2 = randn({5}, rng);
    auto rep2 = grad_check([&] { return ops::mean_abs_error(a2, b2); }, {{"a", a2}, {"b", b2}});
    CHECK(rep2.all_ok());

    T e = randn({4, 3}, rng);
    auto rep3 = grad_check(
        [&] {
            Rng r2(10);
            T w3 = randn({3}, r2, false);
            return ops::sum_all(ops::mul(ops::row(e, 2), w3));
        },
        {{"embed", e}});
    CHECK(rep3.all_ok());
}
