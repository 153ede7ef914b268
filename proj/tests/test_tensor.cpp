#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "mmgnn/rng.hpp"
#include "mmgnn/tensor.hpp"
#include "oracles.hpp"

using namespace mmgnn;

namespace {

Mat random_mat(std::size_t r, std::size_t c, Rng& rng, double lo = 0.1, double hi = 2.0) {
    Mat m(r, c);
    for (double& v : m.a) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
    return m;
}

SparseGraph path3() { return SparseGraph::from_edges(3, {{0, 1}, {1, 2}}); }

SparseGraph random_graph(NodeId n, int extra_edges, Rng& rng) {
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId v = 1; v < n; ++v)
        edges.emplace_back(v, static_cast<NodeId>(rng.uniform_int(static_cast<std::uint64_t>(v))));
    for (int e = 0; e < extra_edges; ++e)
        edges.emplace_back(static_cast<NodeId>(rng.uniform_int(static_cast<std::uint64_t>(n))),
                           static_cast<NodeId>(rng.uniform_int(static_cast<std::uint64_t>(n))));
    return SparseGraph::from_edges(n, edges);
}

}  // namespace

TEST_CASE("spmm_mean on the path graph") {
    Mat h(3, 1);
    h(0, 0) = 1;
    h(1, 0) = 2;
    h(2, 0) = 3;
    const SparseGraph g = path3();
    const Mat out = spmm_mean(g, Tensor(h)).m();
    CHECK(out(0, 0) == 2.0);
    CHECK(out(1, 0) == 2.0);
    CHECK(out(2, 0) == 2.0);
}

TEST_CASE("spmm_mean zeroes isolated nodes") {
    const SparseGraph g = SparseGraph::from_edges(3, {{0, 1}});  // node 2 isolated
    Mat h(3, 2, 5.0);
    const Mat out = spmm_mean(g, Tensor(h)).m();
    CHECK(out(2, 0) == 0.0);
    CHECK(out(2, 1) == 0.0);
    CHECK(out(0, 0) == 5.0);
}

TEST_CASE("spmm_mean equals the dense normalized-adjacency product") {
    Rng rng(21);
    const SparseGraph g = random_graph(5, 4, rng);
    const Mat h = random_mat(5, 3, rng);
    const Mat got = spmm_mean(g, Tensor(h)).m();

    // dense oracle: D^-1 A h
    Mat dense(5, 3);
    for (NodeId i = 0; i < 5; ++i) {
        const auto nbrs = g.neighbors(i);
        if (nbrs.empty()) continue;
        for (std::size_t c = 0; c < 3; ++c) {
            double s = 0;
            for (NodeId j : nbrs) s += h(static_cast<std::size_t>(j), c);
            dense(static_cast<std::size_t>(i), c) = s / static_cast<double>(nbrs.size());
        }
    }
    CHECK(max_abs_diff(got, dense) < 1e-15);
}

TEST_CASE("spmm_mean rows stay inside the per-column hull") {
    Rng rng(22);
    for (int rep = 0; rep < 20; ++rep) {
        const SparseGraph g = random_graph(12, 10, rng);
        const Mat h = random_mat(12, 4, rng);
        const Mat out = spmm_mean(g, Tensor(h)).m();
        for (std::size_t c = 0; c < 4; ++c) {
            double lo = h(0, c), hi = h(0, c);
            for (std::size_t i = 1; i < 12; ++i) {
                lo = std::min(lo, h(i, c));
                hi = std::max(hi, h(i, c));
            }
            for (std::size_t i = 0; i < 12; ++i) {
                if (g.degree(static_cast<NodeId>(i)) == 0) continue;
                CHECK(out(i, c) >= lo - 1e-12);
                CHECK(out(i, c) <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("signed_root values") {
    CHECK(signed_root_scalar(8.0, 3, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(signed_root_scalar(-8.0, 3, 0.0) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(signed_root_scalar(0.0, 2, 1e-6) == 0.0);
    CHECK(signed_root_scalar(5.0, 1, 0.123) == 5.0);  // order 1 is the identity at any eps

    // frozen oracle value for (0.5, k=2, eps=1e-6); the eps regularization
    // shifts the plain square root by eps^(1/2) = 1e-3
    const double expected = std::sqrt(0.5 + 1e-6) - 1e-3;
    CHECK(signed_root_scalar(0.5, 2, 1e-6) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(signed_root_scalar(0.5, 2, 1e-6) - 0.70711) < 1.1e-3);
    // as eps -> 0 the plain root is recovered
    CHECK(std::abs(signed_root_scalar(0.5, 2, 1e-12) - 0.70711) < 1e-5);

    CHECK_THROWS_AS(signed_root_scalar(1.0, 0, 0.0), std::invalid_argument);

    SUBCASE("odd symmetry and monotonicity") {
        double prev = signed_root_scalar(-3.0, 3, 1e-6);
        for (double x = -3.0; x <= 3.0; x += 0.01) {
            const double y = signed_root_scalar(x, 3, 1e-6);
            CHECK(y == doctest::Approx(-signed_root_scalar(-x, 3, 1e-6)).epsilon(1e-12));
            CHECK(y >= prev - 1e-15);
            prev = y;
        }
    }
    SUBCASE("derivative near zero is finite under eps regularization") {
        Parameter a("a", Mat(1, 1, 1e-9));
        Parameter* params[] = {&a};
        a.zero_grad();
        Tape t;
        t.backward(sum_all(signed_root(t.watch(a), 2, 1e-6)));
        CHECK(std::isfinite(a.grad(0, 0)));
        CHECK(a.grad(0, 0) <= 0.5 * std::pow(1e-6, -0.5) + 1e-9);  // bound (1/k) eps^(1/k-1)
        (void)params;
    }
}

TEST_CASE("softmax cross entropy") {
    LabelVector labels;
    labels.num_classes = 7;
    labels.labels = {0, 1, 2, 3, 4, 5, 6, 0};
    SplitMask mask;
    mask.roles.assign(8, Role::Train);

    SUBCASE("uniform logits give ln C") {
        Mat z(8, 7, 0.25);
        const double loss = softmax_cross_entropy(Tensor(z), labels, mask, Role::Train).m()(0, 0);
        CHECK(loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));
        CHECK(loss == doctest::Approx(1.9459).epsilon(1e-4));
    }
    SUBCASE("strongly peaked correct logits drive the loss to zero") {
        Mat z(8, 7);
        for (std::size_t i = 0; i < 8; ++i) z(i, static_cast<std::size_t>(labels.labels[i])) = 60.0;
        const double loss = softmax_cross_entropy(Tensor(z), labels, mask, Role::Train).m()(0, 0);
        CHECK(loss >= 0.0);
        CHECK(loss < 1e-12);
    }
    SUBCASE("random logits match the direct per-row formula") {
        Rng rng(3);
        LabelVector l2;
        l2.num_classes = 3;
        l2.labels = {2, 0, 1, 2};
        SplitMask m2;
        m2.roles = {Role::Train, Role::Train, Role::Val, Role::Train};
        const Mat z = random_mat(4, 3, rng);
        double expect = 0;
        int rows = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            if (m2.roles[i] != Role::Train) continue;
            double se = 0;
            for (std::size_t c = 0; c < 3; ++c) se += std::exp(z(i, c));
            expect += std::log(se) - z(i, static_cast<std::size_t>(l2.labels[i]));
            ++rows;
        }
        expect /= rows;
        const double loss = softmax_cross_entropy(Tensor(z), l2, m2, Role::Train).m()(0, 0);
        CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("empty mask is an error") {
        Mat z(8, 7, 0.0);
        SplitMask empty;
        empty.roles.assign(8, Role::Unused);
        CHECK_THROWS_AS(softmax_cross_entropy(Tensor(z), labels, empty, Role::Test), std::invalid_argument);
    }
}

TEST_CASE("shape errors") {
    Mat a(2, 3), b(2, 3), c(4, 2);
    CHECK_THROWS_AS(matmul(Tensor(a), Tensor(c)), std::invalid_argument);
    CHECK_THROWS_AS(add(Tensor(a), Tensor(c)), std::invalid_argument);
    CHECK_NOTHROW(add(Tensor(a), Tensor(b)));
}

TEST_CASE("linear loss has exact gradients") {
    Rng rng(1);
    Parameter w("w", random_mat(4, 3, rng));
    Parameter* params[] = {&w};
    const double err = grad_check([&](Tape& t) { return sum_all(t.watch(w)); }, params);
    CHECK(err < 1e-8);
    // analytic gradient of sum is all-ones
    w.zero_grad();
    Tape t;
    t.backward(sum_all(t.watch(w)));
    for (double g : w.grad.a) CHECK(g == 1.0);
}

TEST_CASE("per-op gradient checks on random inputs") {
    Rng rng(17);
    auto check_op = [&](const char* name, auto&& build, double tol = 1e-3) {
        Parameter a("a", random_mat(5, 4, rng));
        Parameter b("b", random_mat(5, 4, rng));
        Parameter* params[] = {&a, &b};
        const double err = grad_check([&](Tape& t) { return build(t, a, b); }, params);
        INFO(name);
        CHECK(err < tol);
    };

    check_op("add", [](Tape& t, Parameter& a, Parameter& b) { return sum_all(add(t.watch(a), t.watch(b))); });
    check_op("sub", [](Tape& t, Parameter& a, Parameter& b) { return sum_all(sub(t.watch(a), t.watch(b))); });
    check_op("mul_elem",
             [](Tape& t, Parameter& a, Parameter& b) { return sum_all(mul_elem(t.watch(a), t.watch(b))); });
    check_op("scale", [](Tape& t, Parameter& a, Parameter&) { return sum_all(scale(t.watch(a), -1.7)); });
    check_op("sigmoid",
             [](Tape& t, Parameter& a, Parameter& b) { return sum_all(mul_elem(sigmoid(t.watch(a)), t.watch(b))); });
    check_op("relu",
             [](Tape& t, Parameter& a, Parameter& b) { return sum_all(mul_elem(relu(t.watch(a)), t.watch(b))); });
    check_op("pow_elem", [](Tape& t, Parameter& a, Parameter&) { return sum_all(pow_elem(t.watch(a), 3)); });
    check_op("concat_cols", [](Tape& t, Parameter& a, Parameter& b) {
        const Tensor parts[] = {t.watch(a), t.watch(b)};
        return sum_all(sigmoid(concat_cols(parts)));
    });
    check_op("matmul", [](Tape& t, Parameter& a, Parameter& b) {
        Tensor bt = t.watch(b);
        Mat w(4, 2, 0.3);
        w(1, 1) = -0.8;
        return sum_all(matmul(mul_elem(t.watch(a), bt), Tensor(w)));
    });
    // signed_root away from 0: inputs are bounded into [0.1, 2] by construction
    check_op(
        "signed_root", [](Tape& t, Parameter& a, Parameter&) { return sum_all(signed_root(t.watch(a), 3, 1e-6)); },
        1e-4);
    check_op("shared parameter", [](Tape& t, Parameter& a, Parameter&) {
        Tensor at = t.watch(a);
        return sum_all(mul_elem(at, at));
    });
}

TEST_CASE("graph op gradient checks") {
    Rng rng(31);
    const SparseGraph g = random_graph(8, 6, rng);

    SUBCASE("spmm_mean") {
        Parameter h("h", random_mat(8, 3, rng));
        Parameter* params[] = {&h};
        const double err = grad_check([&](Tape& t) { return sum_all(sigmoid(spmm_mean(g, t.watch(h)))); }, params);
        CHECK(err < 1e-3);
    }
    SUBCASE("spmm_centered_pow, gradient through both inputs") {
        Parameter h("h", random_mat(8, 3, rng));
        Parameter* params[] = {&h};
        for (int k : {2, 3}) {
            const double err = grad_check(
                [&](Tape& t) {
                    Tensor ht = t.watch(h);
                    return sum_all(sigmoid(spmm_centered_pow(g, ht, spmm_mean(g, ht), k)));
                },
                params);
            CHECK(err < 1e-3);
        }
    }
    SUBCASE("softmax cross entropy") {
        LabelVector labels;
        labels.num_classes = 3;
        labels.labels = {0, 1, 2, 0, 1, 2, 0, 1};
        SplitMask mask;
        mask.roles.assign(8, Role::Train);
        mask.roles[3] = Role::Val;
        Parameter z("z", random_mat(8, 3, rng));
        Parameter* params[] = {&z};
        const double err =
            grad_check([&](Tape& t) { return softmax_cross_entropy(t.watch(z), labels, mask, Role::Train); }, params);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("zero-degree rows receive zero gradient through spmm_mean") {
    const SparseGraph g = SparseGraph::from_edges(3, {{0, 1}});
    Parameter h("h", Mat(3, 2, 1.0));
    Tape t;
    t.backward(sum_all(spmm_mean(g, t.watch(h))));
    CHECK(h.grad(2, 0) == 0.0);  // isolated node: nothing flows back
    CHECK(h.grad(2, 1) == 0.0);
    CHECK(h.grad(0, 0) == 1.0);  // node 0 is node 1's only neighbor
}

TEST_CASE("gradients accumulate across backward calls") {
    Parameter w("w", Mat(2, 2, 1.5));
    {
        Tape t;
        t.backward(sum_all(t.watch(w)));
    }
    {
        Tape t;
        t.backward(sum_all(t.watch(w)));
    }
    for (double g : w.grad.a) CHECK(g == 2.0);
    w.zero_grad();
    for (double g : w.grad.a) CHECK(g == 0.0);
}

TEST_CASE("forward and backward are bit-deterministic") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        const SparseGraph g = random_graph(10, 8, rng);
        Parameter h("h", random_mat(10, 4, rng));
        Parameter w("w", random_mat(4, 3, rng));
        LabelVector labels;
        labels.num_classes = 3;
        for (int i = 0; i < 10; ++i) labels.labels.push_back(i % 3);
        SplitMask mask;
        mask.roles.assign(10, Role::Train);
        Tape t;
        Tensor ht = t.watch(h);
        Tensor logits = matmul(signed_root(spmm_centered_pow(g, ht, spmm_mean(g, ht), 2), 2, 1e-6), t.watch(w));
        Tensor loss = softmax_cross_entropy(logits, labels, mask, Role::Train);
        t.backward(loss);
        return std::tuple{loss.m()(0, 0), h.grad, w.grad};
    };
    const auto [l1, hg1, wg1] = run(99);
    const auto [l2, hg2, wg2] = run(99);
    CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
    CHECK(hg1 == hg2);
    CHECK(wg1 == wg2);
}

TEST_CASE("results are identical at any thread count") {
    Rng rng(55);
    const SparseGraph g = random_graph(64, 200, rng);
    const Mat h = random_mat(64, 8, rng);
    const Mat w = random_mat(8, 8, rng);

    auto compute = [&]() {
        Tensor ht(h);
        return matmul(spmm_centered_pow(g, ht, spmm_mean(g, ht), 3), Tensor(w)).m();
    };
    set_max_threads(1);
    const Mat serial = compute();
    set_max_threads(4);
    const Mat threaded = compute();
    set_max_threads(0);  // back to default
    CHECK(serial == threaded);
}

TEST_CASE("checkpoint round trip is exact") {
    Rng rng(8);
    Parameter a("layer0.moment1.W", random_mat(3, 5, rng));
    Parameter b("layer0.attn.Wq", random_mat(2, 2, rng));
    b.value(0, 0) = 1.0 / 3.0;
    b.value(0, 1) = -1e-300;
    b.value(1, 0) = 12345678.901234567;
    const Mat a_orig = a.value, b_orig = b.value;

    const auto path = std::filesystem::temp_directory_path() / "mmgnn_ckpt_test.txt";
    const Parameter* save[] = {&a, &b};
    save_parameters(path, save);

    for (double& v : a.value.a) v = 0;
    for (double& v : b.value.a) v = 0;
    Parameter* load[] = {&a, &b};
    load_parameters(path, load);
    CHECK(a.value == a_orig);
    CHECK(b.value == b_orig);

    SUBCASE("name mismatch is an error") {
        Parameter c("other", Mat(3, 5));
        Parameter* bad[] = {&c, &b};
        CHECK_THROWS_AS(load_parameters(path, bad), std::runtime_error);
    }
}
