#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "iwin/gradcheck.hpp"
#include "iwin/serialize.hpp"
#include "iwin/tensor.hpp"
#include "oracles.hpp"

using namespace iwin;

TEST_CASE("tensor construction and invariants") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.at({1, 2}) == 0.0);
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("matmul: identity leaves any 2x2 unchanged") {
    Tensor id({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {3.5, -1.25, 0.75, 2.0});
    Tensor out = matmul(id, a);
    CHECK(max_abs_diff(out, a) == 0.0);
}

TEST_CASE("matmul: hand-checked 2x2 by 2x1") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {5, 6});
    Tensor c = matmul(a, b);
    CHECK(c.at({0, 0}) == 17.0);
    CHECK(c.at({1, 0}) == 39.0);
}

TEST_CASE("matmul: random 3x4 x 4x5 matches the triple-loop oracle") {
    Rng rng(101);
    Tensor a = Tensor::randn({3, 4}, rng);
    Tensor b = Tensor::randn({4, 5}, rng);
    Tensor c = matmul(a, b);
    auto expect = oracles::matmul_loops(
        std::vector<double>(a.data(), a.data() + a.size()),
        std::vector<double>(b.data(), b.data() + b.size()), 3, 4, 5);
    for (std::int64_t i = 0; i < c.size(); ++i) {
        CHECK(std::abs(c.data()[i] - expect[static_cast<std::size_t>(i)]) < 1e-12);
    }
}

TEST_CASE("matmul: shape errors name both operands") {
    Tensor a({2, 3});
    Tensor b({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2,3]"), ShapeError);
}

TEST_CASE("matmul: associativity on random triples") {
    Rng rng(55);
    for (int rep = 0; rep < 5; ++rep) {
        Tensor a = Tensor::randn({4, 3}, rng);
        Tensor b = Tensor::randn({3, 6}, rng);
        Tensor c = Tensor::randn({6, 2}, rng);
        Tensor left = matmul(matmul(a, b), c);
        Tensor right = matmul(a, matmul(b, c));
        CHECK(max_abs_diff(left, right) < 1e-9);
    }
}

TEST_CASE("matmul: batch broadcasting") {
    Rng rng(9);
    Tensor a = Tensor::randn({2, 3, 4, 5}, rng);
    Tensor b = Tensor::randn({5, 6}, rng);
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 3, 4, 6});
    // slice [1,2] must equal the plain product of that slice
    Tensor a_slice({4, 5});
    std::memcpy(a_slice.data(), a.data() + ((1 * 3 + 2) * 4 * 5), 20 * sizeof(double));
    Tensor expect = matmul(a_slice, b);
    Tensor c_slice({4, 6});
    std::memcpy(c_slice.data(), c.data() + ((1 * 3 + 2) * 4 * 6), 24 * sizeof(double));
    CHECK(max_abs_diff(c_slice, expect) == 0.0);
}

TEST_CASE("softmax: symmetric input") {
    Tensor x({3}, {0, 0, 0});
    Tensor y = softmax_lastdim(x);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(y.data()[i] - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("softmax: large logits do not overflow") {
    Tensor x({2}, {1000, 0});
    Tensor y = softmax_lastdim(x);
    CHECK(std::abs(y.data()[0] - 1.0) < 1e-12);
    CHECK(std::abs(y.data()[1]) < 1e-12);
}

TEST_CASE("softmax: matches an extended-precision oracle") {
    Rng rng(23);
    Tensor x = Tensor::randn({7}, rng, 2.0);
    Tensor y = softmax_lastdim(x);
    auto expect = oracles::softmax_longdouble(
        std::vector<double>(x.data(), x.data() + x.size()));
    for (int i = 0; i < 7; ++i) {
        CHECK(std::abs(y.data()[i] - expect[static_cast<std::size_t>(i)]) < 1e-14);
    }
}

TEST_CASE("softmax: rows sum to one for any finite input") {
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor x = Tensor::randn({4, 9}, rng, std::pow(10.0, rng.uniform(-2, 2)));
        Tensor y = softmax_lastdim(x);
        for (int r = 0; r < 4; ++r) {
            double s = 0.0;
            for (int c = 0; c < 9; ++c) s += y.at({r, c});
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
    // extreme but finite
    Tensor x({1, 3}, {1e300, -1e300, 0.0});
    Tensor y = softmax_lastdim(x);
    CHECK(std::abs(y.at({0, 0}) - 1.0) <= 1e-12);
}

TEST_CASE("softmax: non-finite input raises NumericError") {
    Tensor x({2}, {std::nan(""), 1.0});
    CHECK_THROWS_AS(softmax_lastdim(x), NumericError);
}

TEST_CASE("layernorm: constant channel vector maps to zeros") {
    Tensor x({1, 4}, {3, 3, 3, 3});
    Tensor y = layernorm(x, Tensor::ones({4}), Tensor::zeros({4}));
    for (int i = 0; i < 4; ++i) CHECK(std::abs(y.data()[i]) < 1e-12);
}

TEST_CASE("layernorm: normalized output has near-zero mean and unit variance") {
    Rng rng(77);
    Tensor x = Tensor::randn({5, 16}, rng, 3.0);
    Tensor y = layernorm(x, Tensor::ones({16}), Tensor::zeros({16}));
    for (int r = 0; r < 5; ++r) {
        double mean = 0.0, var = 0.0;
        for (int c = 0; c < 16; ++c) mean += y.at({r, c});
        mean /= 16.0;
        CHECK(std::abs(mean) < 1e-10);
        for (int c = 0; c < 16; ++c) var += (y.at({r, c}) - mean) * (y.at({r, c}) - mean);
        var /= 16.0;
        CHECK(std::abs(var - 1.0) < 1e-4);  // eps shifts variance slightly below 1
    }
}

TEST_CASE("layernorm: matches the two-pass oracle") {
    Rng rng(78);
    const int C = 8;
    Tensor x = Tensor::randn({3, C}, rng);
    Tensor gamma = Tensor::randn({C}, rng);
    Tensor beta = Tensor::randn({C}, rng);
    Tensor y = layernorm(x, gamma, beta, 1e-5);
    for (int r = 0; r < 3; ++r) {
        std::vector<double> row(x.data() + r * C, x.data() + (r + 1) * C);
        auto expect = oracles::layernorm_twopass(
            row, std::vector<double>(gamma.data(), gamma.data() + C),
            std::vector<double>(beta.data(), beta.data() + C), 1e-5);
        for (int c = 0; c < C; ++c) {
            CHECK(std::abs(y.at({r, c}) - expect[static_cast<std::size_t>(c)]) < 1e-10);
        }
    }
}

TEST_CASE("gelu: fixed points and erf oracle") {
    Tensor x({3}, {0.0, 10.0, -1.0});
    Tensor y = gelu(x);
    CHECK(y.data()[0] == 0.0);
    CHECK(std::abs(y.data()[1] - 10.0) < 1e-6);
    CHECK(std::abs(y.data()[2] - oracles::gelu_erf(-1.0)) < 1e-15);
}

TEST_CASE("backward: loss = sum(x) gives an all-ones gradient") {
    Rng rng(5);
    Tensor x = Tensor::randn({3, 4}, rng);
    Tape tape;
    Tensor xt = tape.watch(x);
    tape.backward(sum_all(xt));
    Tensor g = tape.grad(xt);
    CHECK(max_abs_diff(g, Tensor::ones({3, 4})) == 0.0);
}

TEST_CASE("backward: unused leaves get zero gradients") {
    Rng rng(6);
    Tensor x = Tensor::randn({2, 2}, rng);
    Tensor unused = Tensor::randn({3}, rng);
    Tape tape;
    Tensor xt = tape.watch(x);
    Tensor ut = tape.watch(unused);
    tape.backward(sum_all(xt));
    CHECK(max_abs_diff(tape.grad(ut), Tensor::zeros({3})) == 0.0);
}

TEST_CASE("backward: non-scalar loss is a contract error") {
    Tape tape;
    Tensor x = tape.watch(Tensor::ones({2, 2}));
    CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("backward: d sum(A*B) / dA matches finite differences tightly") {
    Rng rng(42);
    Tensor a = Tensor::randn({3, 4}, rng);
    Tensor b = Tensor::randn({4, 2}, rng);
    auto f = [&](const std::vector<Tensor>& p) { return sum_all(matmul(p[0], p[1])); };
    auto res = finite_diff_check(f, {a, b}, 1e-5, 1e-6);
    CHECK(res.pass);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("finite differences pass for every differentiable operation") {
    Rng rng(1234);
    struct Case {
        const char* name;
        LossFn f;
        std::vector<Tensor> params;
    };
    std::vector<Case> cases;

    cases.push_back({"matmul", [](const std::vector<Tensor>& p) {
                         return sum_all(gelu(matmul(p[0], p[1])));
                     },
                     {Tensor::randn({2, 3, 4}, rng), Tensor::randn({4, 5}, rng)}});
    cases.push_back({"add_broadcast", [](const std::vector<Tensor>& p) {
                         return sum_all(mul(add(p[0], p[1]), add(p[0], p[1])));
                     },
                     {Tensor::randn({2, 3}, rng), Tensor::randn({3}, rng)}});
    cases.push_back({"sub_scale", [](const std::vector<Tensor>& p) {
                         return sum_all(mul(sub(p[0], p[1]), scale(p[0], 0.3)));
                     },
                     {Tensor::randn({2, 4}, rng), Tensor::randn({2, 4}, rng)}});
    cases.push_back({"softmax", [](const std::vector<Tensor>& p) {
                         return sum_all(mul(softmax_lastdim(p[0]), p[1]));
                     },
                     {Tensor::randn({3, 5}, rng), Tensor::randn({3, 5}, rng)}});
    cases.push_back({"layernorm", [](const std::vector<Tensor>& p) {
                         return sum_all(gelu(layernorm(p[0], p[1], p[2])));
                     },
                     {Tensor::randn({4, 6}, rng), Tensor::randn({6}, rng), Tensor::randn({6}, rng)}});
    cases.push_back({"gelu", [](const std::vector<Tensor>& p) { return sum_all(gelu(p[0])); },
                     {Tensor::randn({3, 3}, rng)}});
    cases.push_back({"reshape_permute", [](const std::vector<Tensor>& p) {
                         Tensor t = permute(reshape(p[0], {2, 3, 4}), {2, 0, 1});
                         return sum_all(mul(t, t));
                     },
                     {Tensor::randn({6, 4}, rng)}});
    cases.push_back({"permute_dim1", [](const std::vector<Tensor>& p) {
                         Tensor t = permute_dim1(p[0], {2, 0, 3, 1});
                         return sum_all(mul(t, t));
                     },
                     {Tensor::randn({2, 4, 3}, rng)}});
    cases.push_back({"index_rows", [](const std::vector<Tensor>& p) {
                         Tensor t = index_rows(p[0], {1, 1, 0, 2});
                         return sum_all(mul(t, t));
                     },
                     {Tensor::randn({3, 2}, rng)}});
    cases.push_back({"global_avg_pool", [](const std::vector<Tensor>& p) {
                         return sum_all(gelu(global_avg_pool(p[0])));
                     },
                     {Tensor::randn({2, 3, 3, 4}, rng)}});
    cases.push_back({"conv2d", [](const std::vector<Tensor>& p) {
                         return sum_all(gelu(conv2d(p[0], p[1], p[2], 2, 1)));
                     },
                     {Tensor::randn({1, 5, 5, 2}, rng), Tensor::randn({3, 3, 2, 3}, rng),
                      Tensor::randn({3}, rng)}});
    cases.push_back({"depthwise_conv2d", [](const std::vector<Tensor>& p) {
                         return sum_all(gelu(depthwise_conv2d(p[0], p[1], p[2])));
                     },
                     {Tensor::randn({1, 4, 4, 3}, rng), Tensor::randn({3, 3, 3}, rng),
                      Tensor::randn({3}, rng)}});
    cases.push_back({"causal_dwconv1d", [](const std::vector<Tensor>& p) {
                         return sum_all(gelu(causal_dwconv1d(p[0], p[1], p[2])));
                     },
                     {Tensor::randn({2, 5, 3}, rng), Tensor::randn({3, 3}, rng),
                      Tensor::randn({3}, rng)}});
    cases.push_back({"cross_entropy", [](const std::vector<Tensor>& p) {
                         return cross_entropy_logits(p[0], {1, 0, 2});
                     },
                     {Tensor::randn({3, 4}, rng)}});
    cases.push_back({"masked_softmax", [](const std::vector<Tensor>& p) {
                         const double ninf = -std::numeric_limits<double>::infinity();
                         Tensor mask({3, 3}, {0, ninf, ninf, 0, 0, ninf, 0, 0, 0});
                         return sum_all(mul(masked_softmax_lastdim(p[0], mask), p[1]));
                     },
                     {Tensor::randn({2, 3, 3}, rng), Tensor::randn({2, 3, 3}, rng)}});

    for (auto& c : cases) {
        auto res = finite_diff_check(c.f, c.params, 1e-5, 1e-4);
        INFO(c.name, " max_rel_err=", res.max_rel_err, " worst=", res.worst);
        CHECK(res.pass);
    }
}

TEST_CASE("weight container round-trips bit-exactly") {
    Rng rng(321);
    std::vector<std::pair<std::string, Tensor>> items = {
        {"a", Tensor::randn({3, 4, 5}, rng)},
        {"b/bias", Tensor::randn({7}, rng)},
        {"c", Tensor({1}, {-0.0})},
    };
    const std::string path = "test_roundtrip.iwt";
    save_tensors(path, items, {{"purpose", "unit-test"}});
    auto loaded = load_tensors(path);
    CHECK(loaded.tensors.size() == items.size());
    for (const auto& [name, t] : items) {
        const Tensor& back = loaded.tensors.at(name);
        REQUIRE(back.shape() == t.shape());
        CHECK(std::memcmp(back.data(), t.data(),
                          static_cast<std::size_t>(t.size()) * sizeof(double)) == 0);
    }
    CHECK(loaded.meta.at("purpose") == "unit-test");
    std::remove(path.c_str());
}
