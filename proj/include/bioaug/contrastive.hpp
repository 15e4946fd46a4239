#ifndef BIOAUG_CONTRASTIVE_HPP
#define BIOAUG_CONTRASTIVE_HPP

#include <vector>

#include "bioaug/model.hpp"

namespace bioaug {

// Symmetric InfoNCE over paired projection batches (row i of weak pairs with
// row i of strong). Each of the 2N rows is an anchor scored against the other
// 2N-1 rows with cosine-similarity/tau logits; the result is the mean
// cross-entropy over all anchors. Differentiable through both inputs.
Graph::NodeId info_nce(Graph& g, Graph::NodeId weak_proj, Graph::NodeId strong_proj, double tau);

// Per-anchor positive log-probabilities, averaged over the weak and strong
// anchor of each pair: a plain numeric evaluation used by the label-free
// reward ablation. Entry i is the mean of -log p(positive | anchor) for the
// two anchors of pair i.
std::vector<double> info_nce_per_pair(const std::vector<std::vector<double>>& weak,
                                      const std::vector<std::vector<double>>& strong, double tau);

struct SslStepResult {
    double loss = 0.0;
    // post-update encoder embeddings of the strong views (reward inputs)
    std::vector<std::vector<double>> strong_embeddings;
    // post-update weak/strong projections, for the SSLLoss reward mode
    std::vector<std::vector<double>> weak_proj;
    std::vector<std::vector<double>> strong_proj;
};

// One SSL step: build weak and strong views, encode, project, take the
// InfoNCE gradient and descend both encoder and projector. Post-update
// projections are only produced on request (they cost an extra forward).
SslStepResult ssl_step(const std::vector<const Epoch*>& batch,
                       const std::vector<AugmentationAction>& actions, ParamStore& params,
                       const EncoderConfig& cfg, double lr_enc, double tau, uint64_t rng_seed,
                       const AugDefaults& defaults = {}, bool want_post_projections = false);

}  // namespace bioaug

#endif
