#ifndef BIOAUG_TEST_ORACLES_HPP
#define BIOAUG_TEST_ORACLES_HPP

// Independent oracles used by the unit and acceptance suites. Everything here
// is a direct, loop-level evaluation that never calls into the code path it
// checks.

#include <cmath>
#include <functional>
#include <vector>

#include "bioaug/graph.hpp"
#include "bioaug/rng.hpp"

namespace oracle {

using bioaug::Graph;
using bioaug::Tensor;

// ---------------------------------------------------------------------------
// central finite differences
// ---------------------------------------------------------------------------

// Builds a scalar loss from leaf nodes created for each parameter tensor.
using GraphBuilder = std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>;

inline double eval_loss(const std::vector<Tensor>& params, const GraphBuilder& build) {
    Graph g;
    std::vector<Graph::NodeId> ids;
    ids.reserve(params.size());
    for (const Tensor& p : params) {
        Tensor t = p;
        t.requires_grad = false;
        ids.push_back(g.input(std::move(t)));
    }
    return g.value(build(g, ids)).data[0];
}

struct FdReport {
    double max_rel_error = 0.0;
    size_t checked = 0;
};

// Max over all parameter elements of |analytic - fd| / max(|fd|, 1e-8),
// with fd the central difference of step h.
inline FdReport fd_check(const std::vector<Tensor>& params, const GraphBuilder& build,
                         double h = 1e-5) {
    std::vector<Tensor> grads;
    {
        Graph g;
        std::vector<Graph::NodeId> ids;
        for (const Tensor& p : params) {
            Tensor t = p;
            t.requires_grad = true;
            ids.push_back(g.input(std::move(t)));
        }
        const Graph::NodeId loss = build(g, ids);
        g.backward(loss);
        for (const Graph::NodeId id : ids) {
            if (g.has_grad(id))
                grads.push_back(g.grad(id));
            else
                grads.push_back(Tensor(g.value(id).shape, 0.0));
        }
    }
    FdReport rep;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        for (size_t j = 0; j < params[pi].numel(); ++j) {
            std::vector<Tensor> plus = params, minus = params;
            plus[pi].data[j] += h;
            minus[pi].data[j] -= h;
            const double fd = (eval_loss(plus, build) - eval_loss(minus, build)) / (2.0 * h);
            const double rel =
                std::abs(grads[pi].data[j] - fd) / std::max(std::abs(fd), 1e-8);
            rep.max_rel_error = std::max(rep.max_rel_error, rel);
            ++rep.checked;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// brute-force losses and votes
// ---------------------------------------------------------------------------

// Symmetric InfoNCE by direct summation: anchors are the 2N rows of
// [weak; strong]; the positive of row i is row (i+N) mod 2N; every other row
// is a negative. Cosine similarities over tau.
inline double brute_force_info_nce(const std::vector<std::vector<double>>& weak,
                                   const std::vector<std::vector<double>>& strong, double tau) {
    const size_t N = weak.size();
    const size_t M = 2 * N;
    std::vector<std::vector<double>> rows(weak);
    rows.insert(rows.end(), strong.begin(), strong.end());
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0, na = 0, nb = 0;
        for (size_t k = 0; k < a.size(); ++k) {
            dot += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };
    double total = 0.0;
    for (size_t i = 0; i < M; ++i) {
        const size_t pos = (i + N) % M;
        double denom = 0.0;
        for (size_t k = 0; k < M; ++k)
            if (k != i) denom += std::exp(cosine(rows[i], rows[k]) / tau);
        total += -std::log(std::exp(cosine(rows[i], rows[pos]) / tau) / denom);
    }
    return total / static_cast<double>(M);
}

// Soft-KNN class vote by exhaustive evaluation: cosine to every reference,
// pick the K best (ties toward the lower index), temperature softmax,
// sum weights per class.
inline std::vector<double> brute_force_soft_knn(const std::vector<double>& z,
                                                const std::vector<std::vector<double>>& refs,
                                                const std::vector<int>& labels, int n_classes,
                                                int k, double tau) {
    const size_t M = refs.size();
    auto cosine = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0, na = 0, nb = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };
    std::vector<double> sim(M);
    for (size_t j = 0; j < M; ++j) sim[j] = cosine(z, refs[j]);
    std::vector<bool> taken(M, false);
    std::vector<size_t> chosen;
    for (int n = 0; n < k; ++n) {
        size_t best = M;
        for (size_t j = 0; j < M; ++j) {
            if (taken[j]) continue;
            if (best == M || sim[j] > sim[best]) best = j;
        }
        taken[best] = true;
        chosen.push_back(best);
    }
    double denom = 0.0;
    std::vector<double> probs(static_cast<size_t>(n_classes), 0.0);
    for (const size_t j : chosen) denom += std::exp(sim[j] / tau);
    for (const size_t j : chosen)
        probs[static_cast<size_t>(labels[j])] += std::exp(sim[j] / tau) / denom;
    return probs;
}

// ---------------------------------------------------------------------------
// spectral amplitude
// ---------------------------------------------------------------------------

// Single-bin DFT amplitude of a real signal at frequency hz. Exact for sines
// spanning an integer number of periods.
inline double dft_amplitude(const std::vector<double>& x, double hz, double sample_rate) {
    const double w = 2.0 * 3.14159265358979323846 * hz / sample_rate;
    double re = 0.0, im = 0.0;
    for (size_t n = 0; n < x.size(); ++n) {
        re += x[n] * std::cos(w * static_cast<double>(n));
        im -= x[n] * std::sin(w * static_cast<double>(n));
    }
    return 2.0 * std::sqrt(re * re + im * im) / static_cast<double>(x.size());
}

}  // namespace oracle

#endif
