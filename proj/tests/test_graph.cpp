#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "bioaug/errors.hpp"
#include "bioaug/graph.hpp"
#include "bioaug/rng.hpp"
#include "oracles.hpp"

using namespace bioaug;

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = lo + (hi - lo) * rng.next_double();
    return t;
}

// keeps relu inputs away from the kink so finite differences stay clean
Tensor rand_tensor_away_from_zero(std::vector<int> shape, Rng& rng, double margin) {
    Tensor t(std::move(shape));
    for (double& v : t.data) {
        const double m = margin + rng.next_double();
        v = rng.next_double() < 0.5 ? -m : m;
    }
    return t;
}

// weighted scalarization so output adjoints are non-uniform; seeded so the
// same weights come back on every rebuild within one finite-difference check
Graph::NodeId weighted_sum(Graph& g, Graph::NodeId x, uint64_t wseed) {
    Rng rng(wseed);
    Tensor w(g.value(x).shape);
    for (double& v : w.data) v = 0.25 + rng.next_double();
    return g.sum_all(g.multiply(x, g.constant(std::move(w))));
}

}  // namespace

// ---------------------------------------------------------------------------
// forward examples
// ---------------------------------------------------------------------------

TEST_CASE("matmul against an identity-padded right operand keeps the left columns") {
    Graph g;
    const auto a = g.input(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    const auto b = g.input(Tensor({3, 2}, {1, 0, 0, 1, 0, 0}));
    const Tensor& out = g.value(g.matmul(a, b));
    CHECK(out.shape == std::vector<int>{2, 2});
    CHECK(out.data == std::vector<double>{1, 2, 4, 5});
}

TEST_CASE("softmax of a constant row is uniform") {
    Graph g;
    const Tensor& out = g.value(g.softmax(g.input(Tensor({1, 5}, {0, 0, 0, 0, 0})), 1));
    for (double v : out.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("layer normalization matches the per-element formula") {
    const std::vector<double> x{1, 2, 3};
    const double eps = 1e-5;
    Graph g;
    const auto xn = g.input(Tensor({1, 3}, x));
    const auto gamma = g.input(Tensor({3}, {1, 1, 1}));
    const auto beta = g.input(Tensor({3}, {0, 0, 0}));
    const Tensor& out = g.value(g.layer_norm(xn, gamma, beta, eps));

    // direct scalar evaluation
    const double mu = (1.0 + 2.0 + 3.0) / 3.0;
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= 3.0;
    for (size_t i = 0; i < 3; ++i) {
        const double expect = (x[i] - mu) / std::sqrt(var + eps);
        CHECK(out.data[i] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("shape mismatch errors name the primitive and both shapes") {
    Graph g;
    const auto a = g.input(Tensor({2, 3}));
    const auto b = g.input(Tensor({2, 3}));
    try {
        g.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("[2,3]") != std::string::npos);
    }
    const auto c = g.input(Tensor({4}));
    try {
        g.add(a, c);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("[4]") != std::string::npos);
    }
}

TEST_CASE("non-finite intermediates raise a numeric error naming the op") {
    Graph g;
    const auto x = g.input(Tensor({2}, {-1.0, 2.0}));
    CHECK_THROWS_AS(g.logarithm(x), NumericError);  // log of a negative
    const auto big = g.input(Tensor({1}, {1e308}));
    CHECK_THROWS_AS(g.exponential(big), NumericError);
}

TEST_CASE("conv1d stride and padding arithmetic") {
    Graph g;
    // x = [1..6], w = moving sum of width 3
    const auto x = g.input(Tensor({1, 1, 6}, {1, 2, 3, 4, 5, 6}));
    const auto w = g.input(Tensor({1, 1, 3}, {1, 1, 1}));
    const Tensor& same = g.value(g.conv1d(x, w, 1, 1));
    CHECK(same.shape == std::vector<int>{1, 1, 6});
    CHECK(same.data == std::vector<double>{3, 6, 9, 12, 15, 11});
    const Tensor& strided = g.value(g.conv1d(x, w, 2, 0));
    CHECK(strided.shape == std::vector<int>{1, 1, 2});
    CHECK(strided.data == std::vector<double>{6, 12});
}

// ---------------------------------------------------------------------------
// backward basics
// ---------------------------------------------------------------------------

TEST_CASE("gradient of sum is all ones") {
    Graph g;
    Tensor t(std::vector<int>{2, 3}, {1, -2, 3, 0.5, 4, -1});
    t.requires_grad = true;
    const auto x = g.input(std::move(t));
    g.backward(g.sum_all(x));
    const Tensor& gr = g.grad(x);
    for (double v : gr.data) CHECK(v == 1.0);
}

TEST_CASE("gradient of mean of squares matches the frozen finite-difference value") {
    // loss = mean(x*x) for x=[1,2,3]; central differences with step 1e-5
    // give [0.666666..., 1.333333..., 2.0]
    Graph g;
    Tensor t(std::vector<int>{3}, {1, 2, 3});
    t.requires_grad = true;
    const auto x = g.input(std::move(t));
    g.backward(g.mean_all(g.multiply(x, x)));
    const Tensor& gr = g.grad(x);
    CHECK(gr.data[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(gr.data[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(gr.data[2] == doctest::Approx(2.0).epsilon(1e-12));

    const auto rep = oracle::fd_check(
        {Tensor(std::vector<int>{3}, {1, 2, 3})},
        [](Graph& gg, const std::vector<Graph::NodeId>& ids) {
            return gg.mean_all(gg.multiply(ids[0], ids[0]));
        });
    CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("backward errors: non-scalar loss and repeated backward") {
    {
        Graph g;
        Tensor t(std::vector<int>{2}, {1, 2});
        t.requires_grad = true;
        const auto x = g.input(std::move(t));
        CHECK_THROWS_AS(g.backward(x), ShapeError);
    }
    {
        Graph g;
        Tensor t(std::vector<int>{2}, {1, 2});
        t.requires_grad = true;
        const auto x = g.input(std::move(t));
        const auto loss = g.sum_all(x);
        g.backward(loss);
        CHECK_THROWS_AS(g.backward(loss), ShapeError);
    }
}

TEST_CASE("no gradient storage without requires_grad") {
    Graph g;
    const auto x = g.input(Tensor({2}, {1, 2}));  // requires_grad = false
    const auto loss = g.sum_all(x);
    g.backward(loss);
    CHECK(!g.has_grad(x));
    CHECK_THROWS_AS(g.grad(x), ShapeError);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(91);
    const Tensor x0 = rand_tensor({2, 3}, rng, -1, 1);
    const double a = 0.7, b = -1.3;

    auto grad_of = [&](int which) {
        Graph g;
        Tensor t = x0;
        t.requires_grad = true;
        const auto x = g.input(std::move(t));
        const auto f = g.sum_all(g.multiply(x, x));
        const auto h = g.sum_all(g.relu(x));
        Graph::NodeId loss;
        if (which == 0)
            loss = f;
        else if (which == 1)
            loss = h;
        else
            loss = g.add(g.scalar_mul(f, a), g.scalar_mul(h, b));
        g.backward(loss);
        return g.grad(x);
    };
    const Tensor gf = grad_of(0), gh = grad_of(1), gc = grad_of(2);
    for (size_t i = 0; i < gc.numel(); ++i)
        CHECK(gc.data[i] == doctest::Approx(a * gf.data[i] + b * gh.data[i]).epsilon(1e-12));
}

TEST_CASE("forward and backward are bit-identical across runs") {
    auto run = [](std::vector<double>* grad_out) {
        Graph g;
        Tensor t(std::vector<int>{2, 4});
        Rng rng(5);
        for (double& v : t.data) v = rng.next_double() * 2 - 1;
        t.requires_grad = true;
        const auto x = g.input(std::move(t));
        const auto y = g.softmax(g.matmul(x, g.transpose(x)), 1);
        const auto loss = g.mean_all(g.multiply(y, y));
        const double lv = g.value(loss).data[0];
        g.backward(loss);
        *grad_out = g.grad(x).data;
        return lv;
    };
    std::vector<double> g1, g2;
    const double l1 = run(&g1), l2 = run(&g2);
    CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
    REQUIRE(g1.size() == g2.size());
    CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

// ---------------------------------------------------------------------------
// sgd_step
// ---------------------------------------------------------------------------

TEST_CASE("sgd_step decrements by lr times gradient") {
    Tensor p(std::vector<int>{1}, {1.0});
    sgd_step(p, Tensor(std::vector<int>{1}, {0.5}), 0.1);
    CHECK(p.data[0] == doctest::Approx(0.95).epsilon(1e-15));

    Tensor q(std::vector<int>{2}, {1.0, -2.0});
    sgd_step(q, Tensor(std::vector<int>{2}, {0.0, 0.0}), 0.3);
    CHECK(q.data == std::vector<double>{1.0, -2.0});
    sgd_step(q, Tensor(std::vector<int>{2}, {5.0, -5.0}), 0.0);
    CHECK(q.data == std::vector<double>{1.0, -2.0});

    CHECK_THROWS_AS(sgd_step(q, Tensor(std::vector<int>{3}), 0.1), ShapeError);
}

// ---------------------------------------------------------------------------
// finite-difference gradient suite, every primitive
// ---------------------------------------------------------------------------

TEST_CASE("gradient check: every primitive vs central finite differences") {
    constexpr int kInstances = 20;
    constexpr double kTol = 1e-4;
    Rng rng(1234);

    auto check_all = [&](const char* name, auto make_params, auto build_seeded) {
        for (int i = 0; i < kInstances; ++i) {
            const std::vector<Tensor> params = make_params();
            const uint64_t wseed = rng.next_u64();
            const auto build = [&build_seeded, wseed](Graph& g,
                                                      const std::vector<Graph::NodeId>& ids) {
                return build_seeded(g, ids, wseed);
            };
            const auto rep = oracle::fd_check(params, build);
            INFO(std::string(name) << " instance " << i);
            REQUIRE(rep.checked > 0);
            CHECK(rep.max_rel_error <= kTol);
        }
    };

    check_all(
        "matmul",
        [&] {
            return std::vector<Tensor>{rand_tensor({2, 3}, rng, -1, 1),
                                       rand_tensor({3, 2}, rng, -1, 1)};
        },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.matmul(p[0], p[1]), ws);
        });

    check_all(
        "conv1d",
        [&] {
            return std::vector<Tensor>{rand_tensor({2, 2, 6}, rng, -1, 1),
                                       rand_tensor({3, 2, 3}, rng, -1, 1)};
        },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.conv1d(p[0], p[1], 2, 1), ws);
        });

    check_all(
        "add broadcast",
        [&] {
            return std::vector<Tensor>{rand_tensor({2, 3, 2}, rng, -1, 1),
                                       rand_tensor({3, 1}, rng, -1, 1)};
        },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.add(p[0], p[1]), ws);
        });

    check_all(
        "subtract",
        [&] {
            return std::vector<Tensor>{rand_tensor({2, 4}, rng, -1, 1),
                                       rand_tensor({4}, rng, -1, 1)};
        },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.subtract(p[0], p[1]), ws);
        });

    check_all(
        "multiply broadcast",
        [&] {
            return std::vector<Tensor>{rand_tensor({2, 3}, rng, -1, 1),
                                       rand_tensor({1, 3}, rng, -1, 1)};
        },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.multiply(p[0], p[1]), ws);
        });

    check_all(
        "scalar_mul",
        [&] { return std::vector<Tensor>{rand_tensor({3, 2}, rng, -1, 1)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.scalar_mul(p[0], -1.7), ws);
        });

    check_all(
        "relu",
        [&] { return std::vector<Tensor>{rand_tensor_away_from_zero({3, 3}, rng, 0.05)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.relu(p[0]), ws);
        });

    check_all(
        "exponential",
        [&] { return std::vector<Tensor>{rand_tensor({2, 3}, rng, -1, 1)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.exponential(p[0]), ws);
        });

    check_all(
        "logarithm",
        [&] { return std::vector<Tensor>{rand_tensor({2, 3}, rng, 0.5, 2.0)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.logarithm(p[0]), ws);
        });

    check_all(
        "sum",
        [&] { return std::vector<Tensor>{rand_tensor({2, 3}, rng, -1, 1)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t) { return g.sum_all(p[0]); });

    check_all(
        "sum_axis",
        [&] { return std::vector<Tensor>{rand_tensor({2, 3, 2}, rng, -1, 1)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.sum_axis(p[0], 1), ws);
        });

    check_all(
        "mean",
        [&] { return std::vector<Tensor>{rand_tensor({4}, rng, -1, 1)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t) { return g.mean_all(p[0]); });

    check_all(
        "mean_axis",
        [&] { return std::vector<Tensor>{rand_tensor({3, 4}, rng, -1, 1)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.mean_axis(p[0], 0), ws);
        });

    check_all(
        "softmax",
        [&] { return std::vector<Tensor>{rand_tensor({3, 4}, rng, -2, 2)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.softmax(p[0], 1), ws);
        });

    check_all(
        "softmax axis0",
        [&] { return std::vector<Tensor>{rand_tensor({3, 2}, rng, -2, 2)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.softmax(p[0], 0), ws);
        });

    check_all(
        "layer_norm",
        [&] {
            return std::vector<Tensor>{rand_tensor({2, 4}, rng, -1, 1),
                                       rand_tensor({4}, rng, 0.5, 1.5),
                                       rand_tensor({4}, rng, -0.5, 0.5)};
        },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.layer_norm(p[0], p[1], p[2]), ws);
        });

    check_all(
        "embedding",
        [&] { return std::vector<Tensor>{rand_tensor({5, 3}, rng, -1, 1)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            const std::vector<int> ids{0, 2, 2, 4};
            return weighted_sum(g, g.embedding(p[0], ids), ws);
        });

    check_all(
        "concat",
        [&] {
            return std::vector<Tensor>{rand_tensor({2, 2}, rng, -1, 1),
                                       rand_tensor({2, 3}, rng, -1, 1)};
        },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            const std::array<Graph::NodeId, 2> parts{p[0], p[1]};
            return weighted_sum(
                g, g.concat(std::span<const Graph::NodeId>(parts.data(), parts.size()), 1), ws);
        });

    check_all(
        "transpose",
        [&] { return std::vector<Tensor>{rand_tensor({2, 3}, rng, -1, 1)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.transpose(p[0]), ws);
        });

    check_all(
        "l2_normalize_rows",
        [&] { return std::vector<Tensor>{rand_tensor_away_from_zero({3, 3}, rng, 0.3)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.l2_normalize_rows(p[0]), ws);
        });

    check_all(
        "reshape",
        [&] { return std::vector<Tensor>{rand_tensor({2, 6}, rng, -1, 1)}; },
        [&](Graph& g, const std::vector<Graph::NodeId>& p, uint64_t ws) {
            return weighted_sum(g, g.reshape(p[0], {3, 4}), ws);
        });
}
