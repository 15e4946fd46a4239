#include "bioaug/reward.hpp"

#include <algorithm>
#include <cmath>

#include "bioaug/errors.hpp"

namespace bioaug {

ReferenceSet::ReferenceSet(std::vector<const Epoch*> source_epochs, std::vector<int> labels,
                           int n_classes)
    : source_epochs_(std::move(source_epochs)), labels_(std::move(labels)), n_classes_(n_classes) {
    if (source_epochs_.empty()) throw ConfigError("reference set: empty");
    if (source_epochs_.size() != labels_.size())
        throw ConfigError("reference set: labels misaligned with epochs");
    if (n_classes_ < 1) throw ConfigError("reference set: n_classes must be >= 1");
    std::vector<int> seen(static_cast<size_t>(n_classes_), 0);
    for (int y : labels_) {
        if (y < 0 || y >= n_classes_)
            throw ConfigError("reference set: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(n_classes_) + ")");
        seen[static_cast<size_t>(y)] = 1;
    }
    for (int c = 0; c < n_classes_; ++c)
        if (!seen[static_cast<size_t>(c)])
            throw ConfigError("reference set: class " + std::to_string(c) + " has no reference epoch");
}

void ReferenceSet::refresh(ParamStore& params, const EncoderConfig& cfg) {
    embeddings_ = encode(source_epochs_, params, cfg);
    fresh_ = true;
}

const std::vector<std::vector<double>>& ReferenceSet::embeddings() const {
    if (!fresh_) throw ConfigError("reference set: refresh() must run before reward queries");
    return embeddings_;
}

std::vector<double> soft_knn_class_probs(std::span<const double> z, const ReferenceSet& ref,
                                         int k_neighbors, double tau_knn) {
    const size_t M = ref.size();
    if (k_neighbors < 1 || static_cast<size_t>(k_neighbors) > M)
        throw ConfigError("soft_knn: K_neighbors " + std::to_string(k_neighbors) +
                          " outside [1, " + std::to_string(M) + "]");
    if (tau_knn <= 0.0) throw ConfigError("soft_knn: tau_knn must be > 0");

    double zn = 0.0;
    for (double v : z) zn += v * v;
    zn = std::sqrt(zn);

    const auto& emb = ref.embeddings();
    std::vector<std::pair<double, size_t>> sims(M);
    for (size_t j = 0; j < M; ++j) {
        double dot = 0.0, nn = 0.0;
        const auto& e = emb[j];
        for (size_t d = 0; d < e.size(); ++d) {
            dot += z[d] * e[d];
            nn += e[d] * e[d];
        }
        const double denom = zn * std::sqrt(nn);
        sims[j] = {denom > 0.0 ? dot / denom : 0.0, j};
    }
    // highest similarity first; K-th place ties go to the lowest index
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    double mx = -1e300;
    for (int k = 0; k < k_neighbors; ++k) mx = std::max(mx, sims[static_cast<size_t>(k)].first / tau_knn);
    double denom = 0.0;
    std::vector<double> probs(static_cast<size_t>(ref.n_classes()), 0.0);
    for (int k = 0; k < k_neighbors; ++k) {
        const double w = std::exp(sims[static_cast<size_t>(k)].first / tau_knn - mx);
        denom += w;
        probs[static_cast<size_t>(ref.labels()[sims[static_cast<size_t>(k)].second])] += w;
    }
    for (double& p : probs) p /= denom;
    return probs;
}

double soft_knn_reward(std::span<const double> z, int y_true, const ReferenceSet& ref,
                       int k_neighbors, double tau_knn) {
    if (y_true < 0 || y_true >= ref.n_classes())
        throw ConfigError("soft_knn_reward: class id " + std::to_string(y_true) + " outside [0, " +
                          std::to_string(ref.n_classes()) + ")");
    return soft_knn_class_probs(z, ref, k_neighbors, tau_knn)[static_cast<size_t>(y_true)];
}

}  // namespace bioaug
