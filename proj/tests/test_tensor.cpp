#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dome/ops.hpp"
#include "dome/params.hpp"
#include "dome/rng.hpp"
#include "dome/tensor.hpp"

#include "gradcheck.hpp"

using namespace dome;
using testutil::gradcheck;
using testutil::NamedLeaf;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                     bool requires_grad = true, double lo = -1.0,
                     double hi = 1.0) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Scalarizes an op output so gradcheck exercises every output coordinate
/// with distinct weights.
Tensor probe_sum(const Tensor& y, std::uint64_t probe_seed = 99) {
    Rng rng(probe_seed);
    std::vector<double> w(y.size());
    for (double& x : w) x = rng.uniform(0.5, 1.5);
    return sum(mul(y, Tensor::from(y.shape(), std::move(w))));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("construction and element access") {
    Tensor z = Tensor::zeros({2, 3});
    CHECK(z.rows() == 2);
    CHECK(z.cols() == 3);
    CHECK(z.size() == 6);
    for (double v : z.data()) CHECK(v == 0.0);

    Tensor f = Tensor::full({2}, 7.0);
    CHECK(f.at(1) == 7.0);

    Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(m.at(1, 0) == 3.0);

    Tensor s = Tensor::scalar(-2.5);
    CHECK(s.size() == 1);
    CHECK(s.at(0) == -2.5);

    Tensor r = Tensor::row({1, 2, 3});
    CHECK(r.rows() == 1);
    CHECK(r.cols() == 3);

    Tensor undef;
    CHECK(!undef.defined());
    CHECK_THROWS_AS(undef.shape(), StateError);
}

TEST_CASE("grad access before population throws") {
    Tensor x = Tensor::row({1.0}, true);
    CHECK(!x.has_grad());
    CHECK_THROWS_AS(x.grad(), StateError);
}

TEST_CASE("backward: sum of squares gives 2x") {
    Tensor x = Tensor::row({3.0}, true);
    Tensor loss = sum(mul(x, x));
    CHECK(loss.at(0) == 9.0);
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward: disconnected leaf keeps a zero gradient") {
    Tensor x = Tensor::row({2.0}, true);
    Tensor other = Tensor::row({5.0}, true);
    other.zero_grad();
    sum(mul(x, x)).backward();
    CHECK(other.grad()[0] == 0.0);
}

TEST_CASE("backward: gradients accumulate over shared paths") {
    // d/dx sum(2 * x^2) at x=3 is 12 through the diamond add(z, z).
    Tensor x = Tensor::row({3.0}, true);
    Tensor z = mul(x, x);
    sum(add(z, z)).backward();
    CHECK(x.grad()[0] == doctest::Approx(12.0).epsilon(1e-12));

    Tensor y = Tensor::row({4.0}, true);
    sum(add(y, y)).backward();
    CHECK(y.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("NoGradGuard disables graph recording") {
    CHECK(GradMode::enabled());
    Tensor x = Tensor::row({1.0, 2.0}, true);
    {
        NoGradGuard guard;
        CHECK(!GradMode::enabled());
        Tensor y = mul(x, x);
        CHECK(!y.requires_grad());
        {
            NoGradGuard nested;
            CHECK(!GradMode::enabled());
        }
        CHECK(!GradMode::enabled());
    }
    CHECK(GradMode::enabled());
    CHECK(mul(x, x).requires_grad());
}

TEST_CASE("matmul identity and hand product") {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(eye, a);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.data()[i] == a.data()[i]);

    Tensor lhs = Tensor::from({1, 2}, {1, 2});
    Tensor rhs = Tensor::from({2, 1}, {3, 4});
    CHECK(matmul(lhs, rhs).at(0, 0) == 11.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul gradcheck on 3x4 * 4x2 at step 1e-6") {
    Rng rng(11);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    auto res = gradcheck([&] { return probe_sum(matmul(a, b)); },
                         {{"a", a}, {"b", b}}, 1e-6);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("softmax hand oracle on [1,2,3]") {
    Tensor x = Tensor::row({1, 2, 3});
    Tensor p = softmax(x, 1);
    CHECK(p.at(0, 0) == doctest::Approx(0.09003057317038046).epsilon(1e-12));
    CHECK(p.at(0, 1) == doctest::Approx(0.24472847105479767).epsilon(1e-12));
    CHECK(p.at(0, 2) == doctest::Approx(0.6652409557748219).epsilon(1e-12));
    CHECK(p.at(0, 0) + p.at(0, 1) + p.at(0, 2) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax symmetry and mask absorption") {
    Tensor even = softmax(Tensor::row({0, 0}), 1);
    CHECK(even.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(even.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    Tensor masked = softmax(
        Tensor::row({1.25, -std::numeric_limits<double>::infinity()}), 1);
    CHECK(masked.at(0, 0) == 1.0);
    CHECK(masked.at(0, 1) == 0.0);

    // Entries at kMaskedScore behave identically to -inf: exactly zero.
    Tensor sentinel = softmax(Tensor::row({0.5, kMaskedScore, 0.5}), 1);
    CHECK(sentinel.at(0, 1) == 0.0);
    CHECK(sentinel.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax over a fully masked row raises DegenerateRow") {
    Tensor row = Tensor::row({kMaskedScore, kMaskedScore});
    CHECK_THROWS_AS(softmax(row, 1), DegenerateRow);
}

TEST_CASE("softmax along columns normalizes each column") {
    Tensor x = Tensor::from({2, 2}, {1, 4, 3, 2});
    Tensor p = softmax(x, 0);
    CHECK(p.at(0, 0) + p.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.at(0, 1) + p.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.at(1, 0) > p.at(0, 0));
    CHECK(p.at(0, 1) > p.at(1, 1));
}

TEST_CASE("softmax gradcheck with a masked column") {
    Rng rng(12);
    Tensor x = random_tensor({3, 4}, rng);
    // Mask one column; its analytic gradient must be zero and finite
    // differences agree because the sentinel swamps any 1e-5 nudge.
    std::vector<unsigned char> mask(12, 0);
    mask[2] = mask[6] = mask[10] = 1;
    auto res = gradcheck(
        [&] { return probe_sum(softmax(masked_fill(x, mask, kMaskedScore), 1)); },
        {{"x", x}});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("layer_norm two-point standardization") {
    Tensor x = Tensor::row({1, 3});
    Tensor gain = Tensor::full({2}, 1.0);
    Tensor bias = Tensor::zeros({2});
    Tensor y = layer_norm(x, gain, bias);
    // Variance 1 with eps 1e-5 shrinks the unit deviations slightly.
    CHECK(y.at(0, 0) == doctest::Approx(-0.9999950000374997).epsilon(1e-12));
    CHECK(y.at(0, 1) == doctest::Approx(0.9999950000374997).epsilon(1e-12));
}

TEST_CASE("layer_norm of a constant row is all zeros") {
    Tensor y = layer_norm(Tensor::row({4, 4, 4}), Tensor::full({3}, 1.0),
                          Tensor::zeros({3}));
    for (double v : y.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("layer_norm gradcheck") {
    Rng rng(13);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor gain = random_tensor({5}, rng, true, 0.5, 1.5);
    Tensor bias = random_tensor({5}, rng);
    auto res =
        gradcheck([&] { return probe_sum(layer_norm(x, gain, bias)); },
                  {{"x", x}, {"gain", gain}, {"bias", bias}});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("segment_max_pool columnwise max and identity") {
    Tensor x = Tensor::from({2, 2}, {1, 5, 3, 2});
    Tensor pooled = segment_max_pool(x, {{0, 2}});
    CHECK(pooled.rows() == 1);
    CHECK(pooled.at(0, 0) == 3.0);
    CHECK(pooled.at(0, 1) == 5.0);

    Tensor same = segment_max_pool(x, {{0, 1}, {1, 2}});
    for (std::size_t i = 0; i < 4; ++i) CHECK(same.data()[i] == x.data()[i]);
}

TEST_CASE("segment_max_pool gradient is the argmax indicator") {
    Tensor x = Tensor::from({3, 2}, {1, 5, 3, 2, 0, 7}, true);
    sum(segment_max_pool(x, {{0, 3}})).backward();
    const std::vector<double> expected = {0, 0, 1, 0, 0, 1};
    for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == expected[i]);
}

TEST_CASE("segment_max_pool ties route gradient to the lowest row") {
    Tensor x = Tensor::from({2, 2}, {2, 1, 2, 1}, true);
    sum(segment_max_pool(x, {{0, 2}})).backward();
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 1.0);
    CHECK(x.grad()[2] == 0.0);
    CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("segment_max_pool rejects non-partitioning segments") {
    Tensor x = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(segment_max_pool(x, {{0, 2}}), ShapeError);
    CHECK_THROWS_AS(segment_max_pool(x, {{0, 2}, {2, 2}, {2, 3}}), ShapeError);
}

TEST_CASE("segment_max_pool gradcheck") {
    Rng rng(14);
    Tensor x = random_tensor({5, 3}, rng);
    auto res = gradcheck(
        [&] { return probe_sum(segment_max_pool(x, {{0, 2}, {2, 5}})); },
        {{"x", x}});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("sinusoidal positional encoding oracle") {
    Tensor pe = sinusoidal_pe(2, 4);
    CHECK(!pe.requires_grad());
    // Position 0 alternates sin 0 / cos 0.
    CHECK(pe.at(0, 0) == 0.0);
    CHECK(pe.at(0, 1) == 1.0);
    CHECK(pe.at(0, 2) == 0.0);
    CHECK(pe.at(0, 3) == 1.0);
    // Position 1: pair i uses wavelength 10000^(2i/d), so the second pair
    // sees pos/100.
    CHECK(pe.at(1, 0) == doctest::Approx(0.8414709848078965).epsilon(1e-12));
    CHECK(pe.at(1, 1) == doctest::Approx(0.5403023058681398).epsilon(1e-12));
    CHECK(pe.at(1, 2) == doctest::Approx(0.009999833334166664).epsilon(1e-12));
    CHECK(pe.at(1, 3) == doctest::Approx(0.9999500004166653).epsilon(1e-12));
    for (double v : pe.data()) {
        CHECK(v <= 1.0);
        CHECK(v >= -1.0);
    }
}

TEST_CASE("dropout identity cases") {
    Rng rng(15);
    Tensor x = random_tensor({4, 4}, rng, false);
    Tensor same_p0 = dropout(x, 0.0, true, rng);
    Tensor same_inference = dropout(x, 0.9, false, rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(same_p0.data()[i] == x.data()[i]);
        CHECK(same_inference.data()[i] == x.data()[i]);
    }
}

TEST_CASE("dropout empirical rate and inverted scaling") {
    const double p = 0.5;
    Rng rng(16);
    Tensor x = Tensor::full({100000}, 2.0);
    Tensor y = dropout(x, p, true, rng);
    std::size_t dropped = 0;
    for (double v : y.data()) {
        if (v == 0.0) {
            ++dropped;
        } else {
            CHECK(v == doctest::Approx(2.0 / (1.0 - p)).epsilon(1e-12));
        }
    }
    const double rate = static_cast<double>(dropped) / 100000.0;
    CHECK(rate == doctest::Approx(p).epsilon(0.02));

    Rng a(77), b(77);
    Tensor ya = dropout(x, p, true, a);
    Tensor yb = dropout(x, p, true, b);
    for (std::size_t i = 0; i < 200; ++i) CHECK(ya.data()[i] == yb.data()[i]);
}

TEST_CASE("elementwise and shaping op values") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 2}, {10, 20, 30, 40});

    CHECK(add(a, b).at(1, 1) == 44.0);
    CHECK(sub(b, a).at(0, 0) == 9.0);
    CHECK(mul(a, b).at(0, 1) == 40.0);
    CHECK(scale(a, -2.0).at(1, 0) == -6.0);
    CHECK(sum(a).at(0) == 10.0);

    Tensor means = mean_rows(a);
    CHECK(means.rows() == 1);
    CHECK(means.at(0, 0) == 2.0);
    CHECK(means.at(0, 1) == 3.0);

    Tensor shifted = add_rowvec(a, Tensor::row({100, 200}));
    CHECK(shifted.at(1, 0) == 103.0);
    CHECK(shifted.at(0, 1) == 202.0);

    Tensor t = transpose(a);
    CHECK(t.at(0, 1) == 3.0);
    CHECK(t.at(1, 0) == 2.0);

    Tensor wide = concat_cols(a, b);
    CHECK(wide.cols() == 4);
    CHECK(wide.at(0, 2) == 10.0);

    Tensor tall = concat_rows({a, b});
    CHECK(tall.rows() == 4);
    CHECK(tall.at(2, 0) == 10.0);

    CHECK(slice_rows(tall, 2, 4).at(0, 1) == 20.0);
    CHECK(slice_cols(wide, 2, 4).at(1, 1) == 40.0);

    Tensor stacked = repeat_row(Tensor::row({7, 8}), 3);
    CHECK(stacked.rows() == 3);
    CHECK(stacked.at(2, 1) == 8.0);

    Tensor scaled = row_scale(a, Tensor::from({2}, {2, 10}));
    CHECK(scaled.at(0, 1) == 4.0);
    CHECK(scaled.at(1, 0) == 30.0);

    CHECK(relu(Tensor::row({-1, 2})).at(0, 0) == 0.0);
    CHECK(relu(Tensor::row({-1, 2})).at(0, 1) == 2.0);
    CHECK(sigmoid(Tensor::row({0})).at(0, 0) == 0.5);

    Tensor filled = masked_fill(a, {0, 1, 0, 1}, -9.0);
    CHECK(filled.at(0, 1) == -9.0);
    CHECK(filled.at(1, 0) == 3.0);
}

TEST_CASE("shape mismatches throw ShapeError") {
    Tensor a = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(add(a, Tensor::zeros({2, 3})), ShapeError);
    CHECK_THROWS_AS(mul(a, Tensor::zeros({4})), ShapeError);
    CHECK_THROWS_AS(add_rowvec(a, Tensor::row({1, 2, 3})), ShapeError);
    CHECK_THROWS_AS(row_scale(a, Tensor::from({3}, {1, 2, 3})), ShapeError);
    CHECK_THROWS_AS(masked_fill(a, {0, 1}, 0.0), ShapeError);
    CHECK_THROWS_AS(slice_rows(a, 1, 3), ShapeError);
    CHECK_THROWS_AS(concat_rows({a, Tensor::zeros({1, 3})}), ShapeError);
}

TEST_CASE("masked_fill passes no gradient through masked cells") {
    Tensor x = Tensor::from({1, 3}, {1, 2, 3}, true);
    sum(masked_fill(x, {0, 1, 0}, 50.0)).backward();
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 0.0);
    CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("gradchecks for the remaining differentiable ops") {
    Rng rng(17);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor v = random_tensor({4}, rng);
    Tensor s = random_tensor({3}, rng, true, 0.5, 1.5);

    auto check = [](const char* what, const std::function<Tensor()>& f,
                    std::vector<NamedLeaf> leaves) {
        auto res = gradcheck(f, leaves);
        INFO(what << " worst " << res.worst);
        CHECK(res.max_rel_err < 1e-5);
    };

    check("add", [&] { return probe_sum(add(a, b)); }, {{"a", a}, {"b", b}});
    check("sub", [&] { return probe_sum(sub(a, b)); }, {{"a", a}, {"b", b}});
    check("mul", [&] { return probe_sum(mul(a, b)); }, {{"a", a}, {"b", b}});
    check("scale", [&] { return probe_sum(scale(a, -1.7)); }, {{"a", a}});
    check("add_rowvec", [&] { return probe_sum(add_rowvec(a, v)); },
          {{"a", a}, {"v", v}});
    check("mean_rows", [&] { return probe_sum(mean_rows(a)); }, {{"a", a}});
    check("transpose", [&] { return probe_sum(transpose(a)); }, {{"a", a}});
    check("concat_cols", [&] { return probe_sum(concat_cols(a, b)); },
          {{"a", a}, {"b", b}});
    check("concat_rows", [&] { return probe_sum(concat_rows({a, b})); },
          {{"a", a}, {"b", b}});
    check("slice_rows", [&] { return probe_sum(slice_rows(a, 1, 3)); },
          {{"a", a}});
    check("slice_cols", [&] { return probe_sum(slice_cols(a, 1, 3)); },
          {{"a", a}});
    check("repeat_row", [&] { return probe_sum(repeat_row(v, 4)); }, {{"v", v}});
    check("row_scale", [&] { return probe_sum(row_scale(a, s)); },
          {{"a", a}, {"s", s}});
    check("sigmoid", [&] { return probe_sum(sigmoid(a)); }, {{"a", a}});
    // Keep relu inputs away from the kink so central differences are valid.
    Tensor off_kink = random_tensor({3, 4}, rng, true, 0.2, 1.0);
    Tensor sign = Tensor::from({3, 4}, {1,  -1, 1,  -1, -1, 1,
                                        -1, 1,  -1, 1,  1,  -1});
    check("relu", [&] { return probe_sum(relu(mul(off_kink, sign))); },
          {{"x", off_kink}});
    check("softmax", [&] { return probe_sum(softmax(a, 1)); }, {{"a", a}});
    check("softmax_cols", [&] { return probe_sum(softmax(a, 0)); }, {{"a", a}});
    check("masked_fill",
          [&] { return probe_sum(masked_fill(a, {0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0},
                                             2.0)); },
          {{"a", a}});
}

TEST_CASE("embedding_lookup gathers rows and scatter-adds gradients") {
    Tensor table = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
    Tensor out = embedding_lookup(table, {2, 0});
    CHECK(out.at(0, 0) == 5.0);
    CHECK(out.at(0, 1) == 6.0);
    CHECK(out.at(1, 0) == 1.0);

    sum(embedding_lookup(table, {1, 1})).backward();
    const std::vector<double> expected = {0, 0, 2, 2, 0, 0};
    for (std::size_t i = 0; i < 6; ++i) CHECK(table.grad()[i] == expected[i]);

    CHECK_THROWS_AS(embedding_lookup(table, {3}), ShapeError);

    Rng rng(18);
    Tensor t2 = random_tensor({4, 3}, rng);
    auto res = gradcheck(
        [&] { return probe_sum(embedding_lookup(t2, {3, 1, 3, 0})); },
        {{"table", t2}});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("cross_entropy_rowwise value, masking, and gradcheck") {
    Tensor logits = Tensor::row({1, 2, 3});
    RowwiseCrossEntropy ce = cross_entropy_rowwise(logits, {2});
    CHECK(ce.rows == 1);
    CHECK(ce.sum.at(0) ==
          doctest::Approx(-std::log(0.6652409557748219)).epsilon(1e-12));

    Tensor two = Tensor::from({2, 3}, {1, 2, 3, 1, 2, 3});
    RowwiseCrossEntropy skipped = cross_entropy_rowwise(two, {2, 0}, {0, 1});
    CHECK(skipped.rows == 1);
    CHECK(skipped.sum.at(0) == doctest::Approx(ce.sum.at(0)).epsilon(1e-12));

    RowwiseCrossEntropy none = cross_entropy_rowwise(two, {2, 0}, {1, 1});
    CHECK(none.rows == 0);
    CHECK(none.sum.at(0) == 0.0);

    Rng rng(19);
    Tensor l2 = random_tensor({3, 5}, rng);
    auto res = gradcheck(
        [&] { return cross_entropy_rowwise(l2, {4, 0, 2}).sum; }, {{"l", l2}});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("ParameterStore registry behavior") {
    ParameterStore store;
    Tensor w = store.create("w", {2, 2});
    CHECK(w.requires_grad());
    CHECK(store.contains("w"));
    CHECK_THROWS_AS(store.create("w", {1}), ConfigError);
    CHECK_THROWS_AS(store.get("missing"), ConfigError);
    store.create("b", {3});
    CHECK(store.names() == std::vector<std::string>{"w", "b"});
    CHECK(store.scalar_count() == 7);

    w.data()[0] = 0.1;  // not representable in float32
    store.quantize_f32();
    CHECK(store.get("w").data()[0] ==
          static_cast<double>(static_cast<float>(0.1)));
    const double once = store.get("w").data()[0];
    store.quantize_f32();
    CHECK(store.get("w").data()[0] == once);  // idempotent
}

TEST_CASE("initializers respect their ranges") {
    ParameterStore store;
    Tensor w = store.create("w", {20, 30});
    Rng rng(21);
    init_xavier_uniform(w, rng);
    const double limit = std::sqrt(6.0 / (20 + 30));
    for (double v : w.data()) {
        CHECK(v <= limit);
        CHECK(v >= -limit);
    }

    Tensor e = store.create("e", {400});
    Rng rng2(22);
    init_normal(e, rng2, 0.02);
    double mean = 0.0;
    for (double v : e.data()) mean += v;
    mean /= 400.0;
    CHECK(std::abs(mean) < 0.01);
}

TEST_CASE("clip_global_norm scales only oversized gradients") {
    ParameterStore store;
    Tensor w = store.create("w", {2});
    w.zero_grad();
    Tensor loss = sum(mul(w, Tensor::from({2}, {3.0, 4.0})));
    loss.backward();  // gradient (3,4), norm 5

    const double pre = clip_global_norm(store, 10.0);
    CHECK(pre == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(store.get("w").grad()[0] == 3.0);

    const double pre2 = clip_global_norm(store, 1.0);
    CHECK(pre2 == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(store.get("w").grad()[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(store.get("w").grad()[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("Adam first step moves by about lr toward -sign(grad)") {
    ParameterStore store;
    Tensor w = store.create("w", {1});
    w.data()[0] = 1.0;
    Adam adam(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    w.zero_grad();
    sum(scale(w, 0.25)).backward();  // constant gradient 0.25
    adam.step(store);
    // mhat/(sqrt(vhat)+eps) = g/(|g|+eps) ~ sign(g) at t=1.
    CHECK(w.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(adam.step_count() == 1);
}

TEST_CASE("Adam leaves parameters alone under zero gradient") {
    ParameterStore store;
    Tensor w = store.create("w", {2});
    w.data() = {1.5, -2.5};
    Adam adam;
    store.zero_grad();
    adam.step(store);
    CHECK(w.data()[0] == 1.5);
    CHECK(w.data()[1] == -2.5);
}

TEST_CASE("Adam requires populated gradients") {
    ParameterStore store;
    store.create("w", {2});
    Adam adam;
    CHECK_THROWS_AS(adam.step(store), StateError);
}

TEST_CASE("Adam descends a convex quadratic") {
    ParameterStore store;
    Tensor w = store.create("w", {1});
    w.data()[0] = 0.0;
    Adam adam(AdamConfig{0.05, 0.9, 0.999, 1e-8});
    auto loss_at = [&] {
        Tensor diff = sub(w, Tensor::from({1}, {3.0}));
        return sum(mul(diff, diff));
    };
    const double initial = loss_at().at(0);
    for (int i = 0; i < 200; ++i) {
        store.zero_grad();
        loss_at().backward();
        adam.step(store);
    }
    CHECK(loss_at().at(0) < initial * 0.05);
}

}  // TEST_SUITE
