#include "bioaug/contrastive.hpp"

#include <array>
#include <cmath>

#include "bioaug/errors.hpp"

namespace bioaug {

Graph::NodeId info_nce(Graph& g, Graph::NodeId weak_proj, Graph::NodeId strong_proj, double tau) {
    if (tau <= 0.0) throw ConfigError("info_nce: tau must be > 0, got " + std::to_string(tau));
    const Tensor& W = g.value(weak_proj);
    const Tensor& S = g.value(strong_proj);
    if (W.rank() != 2 || S.rank() != 2 || W.shape != S.shape)
        throw ShapeError("info_nce: weak/strong shapes differ: " + Tensor::shape_str(W.shape) +
                         " vs " + Tensor::shape_str(S.shape));
    const int N = W.dim(0);
    if (N < 2) throw ConfigError("info_nce: need N >= 2 pairs for negatives, got " + std::to_string(N));
    const int M = 2 * N;

    const std::array<Graph::NodeId, 2> parts{weak_proj, strong_proj};
    const Graph::NodeId z = g.concat(std::span<const Graph::NodeId>(parts.data(), parts.size()), 0);
    Graph::NodeId sims = g.scalar_mul(g.matmul(z, g.transpose(z)), 1.0 / tau);

    // self-similarities pushed far below every real logit before the softmax
    Tensor self_mask({M, M});
    for (int i = 0; i < M; ++i) self_mask.at(i, i) = -1e9;
    sims = g.add(sims, g.constant(self_mask));

    const Graph::NodeId soft = g.softmax(sims, 1);

    Tensor pos({M, M});
    for (int i = 0; i < N; ++i) {
        pos.at(i, i + N) = 1.0;
        pos.at(i + N, i) = 1.0;
    }
    const Graph::NodeId p = g.sum_axis(g.multiply(soft, g.constant(pos)), 1);  // [M]
    return g.scalar_mul(g.mean_all(g.logarithm(p)), -1.0);
}

std::vector<double> info_nce_per_pair(const std::vector<std::vector<double>>& weak,
                                      const std::vector<std::vector<double>>& strong, double tau) {
    if (tau <= 0.0) throw ConfigError("info_nce_per_pair: tau must be > 0");
    const size_t N = weak.size();
    if (N < 2 || strong.size() != N)
        throw ShapeError("info_nce_per_pair: need equal weak/strong batches with N >= 2");
    const size_t M = 2 * N;
    const size_t D = weak[0].size();
    std::vector<const std::vector<double>*> rows(M);
    for (size_t i = 0; i < N; ++i) {
        rows[i] = &weak[i];
        rows[i + N] = &strong[i];
    }
    auto cos = [&](size_t a, size_t b) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (size_t j = 0; j < D; ++j) {
            dot += (*rows[a])[j] * (*rows[b])[j];
            na += (*rows[a])[j] * (*rows[a])[j];
            nb += (*rows[b])[j] * (*rows[b])[j];
        }
        const double denom = std::sqrt(na) * std::sqrt(nb);
        return denom > 0.0 ? dot / denom : 0.0;
    };
    auto anchor_loss = [&](size_t i, size_t pos) {
        double mx = -1e300;
        for (size_t k = 0; k < M; ++k)
            if (k != i) mx = std::max(mx, cos(i, k) / tau);
        double denom = 0.0;
        for (size_t k = 0; k < M; ++k)
            if (k != i) denom += std::exp(cos(i, k) / tau - mx);
        return -(cos(i, pos) / tau - mx - std::log(denom));
    };
    std::vector<double> out(N);
    for (size_t i = 0; i < N; ++i)
        out[i] = 0.5 * (anchor_loss(i, i + N) + anchor_loss(i + N, i));
    return out;
}

SslStepResult ssl_step(const std::vector<const Epoch*>& batch,
                       const std::vector<AugmentationAction>& actions, ParamStore& params,
                       const EncoderConfig& cfg, double lr_enc, double tau, uint64_t rng_seed,
                       const AugDefaults& defaults, bool want_post_projections) {
    if (batch.size() != actions.size())
        throw ShapeError("ssl_step: one action per sample required, got " +
                         std::to_string(actions.size()) + " actions for " +
                         std::to_string(batch.size()) + " samples");

    std::vector<Epoch> weak_views, strong_views;
    weak_views.reserve(batch.size());
    strong_views.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        weak_views.push_back(weak_view(*batch[i], derive_seed(rng_seed, i, 0), defaults));
        strong_views.push_back(apply_action(*batch[i], actions[i], derive_seed(rng_seed, i, 1), defaults));
    }
    auto as_ptrs = [](const std::vector<Epoch>& v) {
        std::vector<const Epoch*> p;
        p.reserve(v.size());
        for (const Epoch& e : v) p.push_back(&e);
        return p;
    };
    const std::vector<const Epoch*> weak_ptrs = as_ptrs(weak_views);
    const std::vector<const Epoch*> strong_ptrs = as_ptrs(strong_views);

    SslStepResult res;
    {
        Graph g;
        ParamBinder p(g, params, true);
        const Graph::NodeId weak_emb =
            encoder_forward(g, p, cfg, g.constant(epochs_to_tensor(weak_ptrs)));
        const Graph::NodeId strong_emb =
            encoder_forward(g, p, cfg, g.constant(epochs_to_tensor(strong_ptrs)));
        const Graph::NodeId loss = info_nce(g, projector_forward(g, p, cfg, weak_emb),
                                            projector_forward(g, p, cfg, strong_emb), tau);
        res.loss = g.value(loss).data[0];
        g.backward(loss);
        p.apply_sgd(lr_enc);
    }

    // reward inputs come from the updated encoder applied to the strong views
    {
        Graph g;
        ParamBinder p(g, params, false);
        const Graph::NodeId emb = encoder_forward(g, p, cfg, g.constant(epochs_to_tensor(strong_ptrs)));
        const Tensor& ev = g.value(emb);
        const size_t D = static_cast<size_t>(ev.dim(1));
        res.strong_embeddings.resize(batch.size());
        for (size_t i = 0; i < batch.size(); ++i)
            res.strong_embeddings[i].assign(ev.data.begin() + static_cast<long>(i * D),
                                            ev.data.begin() + static_cast<long>((i + 1) * D));
        if (want_post_projections) {
            const Graph::NodeId sp = projector_forward(g, p, cfg, emb);
            const Tensor& spv = g.value(sp);
            const size_t PD = static_cast<size_t>(spv.dim(1));
            res.strong_proj.resize(batch.size());
            for (size_t i = 0; i < batch.size(); ++i)
                res.strong_proj[i].assign(spv.data.begin() + static_cast<long>(i * PD),
                                          spv.data.begin() + static_cast<long>((i + 1) * PD));
            const Graph::NodeId wemb =
                encoder_forward(g, p, cfg, g.constant(epochs_to_tensor(weak_ptrs)));
            const Graph::NodeId wp = projector_forward(g, p, cfg, wemb);
            const Tensor& wpv = g.value(wp);
            res.weak_proj.resize(batch.size());
            for (size_t i = 0; i < batch.size(); ++i)
                res.weak_proj[i].assign(wpv.data.begin() + static_cast<long>(i * PD),
                                        wpv.data.begin() + static_cast<long>((i + 1) * PD));
        }
    }
    return res;
}

}  // namespace bioaug
