#ifndef BIOAUG_REWARD_HPP
#define BIOAUG_REWARD_HPP

#include <span>
#include <vector>

#include "bioaug/model.hpp"

namespace bioaug {

// Labeled embedding bank for the Soft-KNN consistency score. Embeddings are
// regenerated from the current encoder before every reward query batch.
class ReferenceSet {
public:
    ReferenceSet(std::vector<const Epoch*> source_epochs, std::vector<int> labels, int n_classes);

    // Re-embeds the source epochs with the current encoder.
    void refresh(ParamStore& params, const EncoderConfig& cfg);

    size_t size() const { return labels_.size(); }
    int n_classes() const { return n_classes_; }
    const std::vector<int>& labels() const { return labels_; }
    const std::vector<std::vector<double>>& embeddings() const;

private:
    std::vector<const Epoch*> source_epochs_;
    std::vector<int> labels_;
    int n_classes_;
    std::vector<std::vector<double>> embeddings_;
    bool fresh_ = false;
};

// Cosine top-K softmax class vote. Ties at the K-th similarity break toward
// the lowest reference index. Returns a distribution over n_classes.
std::vector<double> soft_knn_class_probs(std::span<const double> z, const ReferenceSet& ref,
                                         int k_neighbors, double tau_knn);

// Probability mass the vote assigns to the true class; dense reward in [0,1].
double soft_knn_reward(std::span<const double> z, int y_true, const ReferenceSet& ref,
                       int k_neighbors, double tau_knn);

}  // namespace bioaug

#endif
