#ifndef BIOAUG_RL_HPP
#define BIOAUG_RL_HPP

#include <array>
#include <span>
#include <string>
#include <vector>

#include "bioaug/model.hpp"

namespace bioaug {

// Linear beta decay from beta_start to beta_end over total_steps, clamped
// afterwards. gamma is the fixed entropy coefficient.
struct ExplorationSchedule {
    double beta_start = 1.0;
    double beta_end = 0.1;
    int total_steps = 1;
    double gamma = 0.1;
};

double beta_at(const ExplorationSchedule& schedule, int step);

// Batch-mean baseline: A_i = r_i - mean(r). Sums to zero by construction.
std::vector<double> advantage(const std::vector<double>& rewards);

// -sum p log p with 0 log 0 := 0.
double entropy(std::span<const double> probs);

// Entropy-regularized REINFORCE objective on an action-probability node
// [B, A]: -mean(log pi(a_t|s_t) * A_t) - beta*gamma*mean(H(pi(.|s_t))).
// Chosen probabilities below 1e-12 are clamped before the log; *clamped
// reports whether that guard fired.
Graph::NodeId policy_loss(Graph& g, Graph::NodeId probs, const std::vector<int>& chosen_actions,
                          const std::vector<double>& advantages, double beta, double gamma,
                          bool* clamped = nullptr);

// Zero everything but the K most probable actions, renormalize, sample.
// Ties at the K-th probability keep the lower action id.
int top_k_sample(std::span<const double> probs, int k, uint64_t rng_seed);

// One Fig.-3-style record per training step.
struct PolicyTraceRow {
    int step = 0;
    double beta = 0.0;
    double mean_reward = 0.0;
    double mean_advantage = 0.0;
    double policy_loss = 0.0;
    double entropy = 0.0;
    std::array<double, kNumActions> mean_probs{};   // batch-mean p per action
    std::array<int, kNumActions> chosen_hist{};     // chosen-action counts
};

struct PolicyTrace {
    std::vector<PolicyTraceRow> rows;

    static std::string csv_header();
    std::string to_csv() const;
};

struct RlStepResult {
    PolicyTraceRow row;
    bool logprob_clamped = false;
};

// One policy-gradient step: advantages from the batch rewards, policy loss at
// the scheduled beta, backward, sgd on the policy parameters.
RlStepResult rl_step(const std::vector<AgentContext>& contexts,
                     const std::vector<int>& chosen_actions, const std::vector<double>& rewards,
                     ParamStore& policy_params, const PolicyConfig& cfg, int state_dim,
                     double lr_agent, const ExplorationSchedule& schedule, int step);

}  // namespace bioaug

#endif
