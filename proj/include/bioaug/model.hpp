#ifndef BIOAUG_MODEL_HPP
#define BIOAUG_MODEL_HPP

#include <string>
#include <vector>

#include "bioaug/augment.hpp"
#include "bioaug/checkpoint.hpp"
#include "bioaug/graph.hpp"

namespace bioaug {

// Residual 1D-CNN encoder + projection head, desk-scale.
struct EncoderConfig {
    int n_blocks = 3;
    std::vector<int> channels = {16, 32, 64};
    int embedding_dim = 64;
    int projection_dim = 32;

    void validate() const;
};

// Transformer policy over the 5-action augmentation space.
struct PolicyConfig {
    int history_len = 8;  // K
    int token_dim = 32;
    int n_heads = 2;
    int n_actions = kNumActions;

    void validate() const;
};

// Policy input: current state embedding plus the sliding window of the K
// most recent (action, reward) pairs. Shorter histories are padded at the
// oldest end with the distinguished pad action and reward 0.
struct AgentContext {
    std::vector<double> state;
    std::vector<int> past_actions;
    std::vector<double> past_rewards;
};

constexpr int kPadActionId = kNumActions;  // 6th embedding row

// Binds named parameters into a graph as leaves (trainable or frozen) and
// routes gradients back into the store after backward().
class ParamBinder {
public:
    ParamBinder(Graph& g, ParamStore& store, bool trainable)
        : graph_(g), store_(store), trainable_(trainable) {}

    Graph::NodeId operator()(const std::string& name);

    // sgd over every bound parameter that received a gradient
    void apply_sgd(double lr);

    bool trainable() const { return trainable_; }

private:
    Graph& graph_;
    ParamStore& store_;
    bool trainable_;
    std::vector<std::pair<std::string, Graph::NodeId>> bound_;
};

// Seeded fan-in uniform init. The stream is derived from the parameter name,
// so values do not depend on creation order.
Tensor fan_in_uniform(std::vector<int> shape, int fan_in, uint64_t seed, const std::string& name);

void init_encoder_params(ParamStore& store, const EncoderConfig& cfg, uint64_t seed);
void init_projector_params(ParamStore& store, const EncoderConfig& cfg, uint64_t seed);
void init_policy_params(ParamStore& store, const PolicyConfig& cfg, int state_dim, uint64_t seed);

// Residual conv stack -> global average pool -> linear. Input [B, L].
Graph::NodeId encoder_forward(Graph& g, ParamBinder& p, const EncoderConfig& cfg, Graph::NodeId x);

// 2-layer MLP + row L2 normalization. Input [B, embedding_dim].
Graph::NodeId projector_forward(Graph& g, ParamBinder& p, const EncoderConfig& cfg,
                                Graph::NodeId emb);

// Per-context transformer; outputs stacked action distributions [B, n_actions].
Graph::NodeId policy_forward(Graph& g, ParamBinder& p, const PolicyConfig& cfg, int state_dim,
                             const std::vector<AgentContext>& batch);

// Detached batch encoding (the frozen-encoder state view): builds a private
// graph with frozen parameters, returns one embedding row per epoch.
std::vector<std::vector<double>> encode(const std::vector<const Epoch*>& batch, ParamStore& params,
                                        const EncoderConfig& cfg);

Tensor epochs_to_tensor(const std::vector<const Epoch*>& batch);

}  // namespace bioaug

#endif
