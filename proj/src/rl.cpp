#include "bioaug/rl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "bioaug/errors.hpp"
#include "bioaug/rng.hpp"

namespace bioaug {
namespace {

// shortest round-trip decimal form; deterministic for identical doubles
std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

double beta_at(const ExplorationSchedule& s, int step) {
    if (step < 0) throw ConfigError("beta_at: negative step");
    if (s.total_steps <= 0 || step >= s.total_steps) return s.beta_end;
    const double f = static_cast<double>(step) / static_cast<double>(s.total_steps);
    return s.beta_start + (s.beta_end - s.beta_start) * f;
}

std::vector<double> advantage(const std::vector<double>& rewards) {
    if (rewards.empty()) throw ConfigError("advantage: empty batch");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    std::vector<double> a(rewards.size());
    for (size_t i = 0; i < rewards.size(); ++i) a[i] = rewards[i] - mean;
    return a;
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw ConfigError("entropy: negative probability " + std::to_string(p));
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

Graph::NodeId policy_loss(Graph& g, Graph::NodeId probs, const std::vector<int>& chosen_actions,
                          const std::vector<double>& advantages, double beta, double gamma,
                          bool* clamped) {
    const Tensor& P = g.value(probs);
    if (P.rank() != 2) throw ShapeError("policy_loss: probs must be [batch, actions]");
    const int B = P.dim(0), A = P.dim(1);
    if (static_cast<int>(chosen_actions.size()) != B || static_cast<int>(advantages.size()) != B)
        throw ShapeError("policy_loss: batch size mismatch between probs, actions and advantages");
    if (clamped) *clamped = false;

    Tensor chosen_mask({B, A});
    Tensor clamp_fill({B});
    for (int i = 0; i < B; ++i) {
        const int a = chosen_actions[static_cast<size_t>(i)];
        if (a < 0 || a >= A)
            throw ShapeError("policy_loss: chosen action " + std::to_string(a) + " outside [0, " +
                             std::to_string(A) + ")");
        chosen_mask.at(i, a) = 1.0;
        const double p = P.at(i, a);
        if (p < 1e-12) {
            clamp_fill.data[static_cast<size_t>(i)] = 1e-12 - p;
            if (clamped) *clamped = true;
        }
    }

    Graph::NodeId chosen_p = g.sum_axis(g.multiply(probs, g.constant(chosen_mask)), 1);  // [B]
    chosen_p = g.add(chosen_p, g.constant(clamp_fill));
    const Graph::NodeId logp = g.logarithm(chosen_p);
    const Graph::NodeId adv = g.constant(Tensor({B}, advantages));
    const Graph::NodeId expectation = g.mean_all(g.multiply(logp, adv));

    // per-context entropy; the additive 1e-300 disappears for any softmax
    // output but keeps log finite if a caller hands in literal zeros
    const Graph::NodeId probs_safe = g.add(probs, g.constant(Tensor({B, A}, 1e-300)));
    const Graph::NodeId ent_rows =
        g.scalar_mul(g.sum_axis(g.multiply(probs, g.logarithm(probs_safe)), 1), -1.0);
    const Graph::NodeId ent_mean = g.mean_all(ent_rows);

    return g.subtract(g.scalar_mul(expectation, -1.0), g.scalar_mul(ent_mean, beta * gamma));
}

int top_k_sample(std::span<const double> probs, int k, uint64_t rng_seed) {
    const int A = static_cast<int>(probs.size());
    if (k < 1 || k > A)
        throw ConfigError("top_k_sample: K " + std::to_string(k) + " outside [1, " +
                          std::to_string(A) + "]");
    std::vector<int> order(static_cast<size_t>(A));
    for (int i = 0; i < A; ++i) order[static_cast<size_t>(i)] = i;
    // stable ranking: probability desc, then action id asc
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)])
            return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
        return a < b;
    });
    std::vector<int> kept(order.begin(), order.begin() + k);
    std::sort(kept.begin(), kept.end());
    double total = 0.0;
    for (int a : kept) total += probs[static_cast<size_t>(a)];
    if (total <= 0.0) throw ConfigError("top_k_sample: no probability mass among top-K actions");

    Rng rng(rng_seed);
    const double u = rng.next_double() * total;
    double cum = 0.0;
    for (int a : kept) {
        cum += probs[static_cast<size_t>(a)];
        if (u < cum) return a;
    }
    // numerically u == total: last kept action with nonzero probability
    for (size_t i = kept.size(); i-- > 0;)
        if (probs[static_cast<size_t>(kept[i])] > 0.0) return kept[i];
    return kept.back();
}

std::string PolicyTrace::csv_header() {
    return "step,beta,mean_reward,mean_advantage,policy_loss,entropy,"
           "p_mask,p_perm,p_crop,p_flip,p_warp,chosen_action_hist";
}

std::string PolicyTrace::to_csv() const {
    std::string out = csv_header() + "\n";
    for (const PolicyTraceRow& r : rows) {
        out += std::to_string(r.step);
        out += "," + format_double(r.beta);
        out += "," + format_double(r.mean_reward);
        out += "," + format_double(r.mean_advantage);
        out += "," + format_double(r.policy_loss);
        out += "," + format_double(r.entropy);
        for (int a = 0; a < kNumActions; ++a) out += "," + format_double(r.mean_probs[static_cast<size_t>(a)]);
        out += ",";
        for (int a = 0; a < kNumActions; ++a) {
            if (a) out += "|";
            out += std::to_string(r.chosen_hist[static_cast<size_t>(a)]);
        }
        out += "\n";
    }
    return out;
}

RlStepResult rl_step(const std::vector<AgentContext>& contexts,
                     const std::vector<int>& chosen_actions, const std::vector<double>& rewards,
                     ParamStore& policy_params, const PolicyConfig& cfg, int state_dim,
                     double lr_agent, const ExplorationSchedule& schedule, int step) {
    if (contexts.empty() || contexts.size() != chosen_actions.size() ||
        contexts.size() != rewards.size())
        throw ShapeError("rl_step: contexts, actions and rewards must align and be nonempty");

    const std::vector<double> adv = advantage(rewards);
    const double beta = beta_at(schedule, step);

    Graph g;
    ParamBinder p(g, policy_params, true);
    const Graph::NodeId probs = policy_forward(g, p, cfg, state_dim, contexts);
    RlStepResult res;
    const Graph::NodeId loss =
        policy_loss(g, probs, chosen_actions, adv, beta, schedule.gamma, &res.logprob_clamped);

    const Tensor& pv = g.value(probs);
    PolicyTraceRow& row = res.row;
    row.step = step;
    row.beta = beta;
    row.policy_loss = g.value(loss).data[0];
    const int B = pv.dim(0);
    for (int i = 0; i < B; ++i) {
        row.mean_reward += rewards[static_cast<size_t>(i)];
        row.mean_advantage += adv[static_cast<size_t>(i)];
        row.entropy += entropy(std::span<const double>(&pv.data[static_cast<size_t>(i) * kNumActions],
                                                       kNumActions));
        for (int a = 0; a < kNumActions; ++a) row.mean_probs[static_cast<size_t>(a)] += pv.at(i, a);
        row.chosen_hist[static_cast<size_t>(chosen_actions[static_cast<size_t>(i)])] += 1;
    }
    row.mean_reward /= B;
    row.mean_advantage /= B;
    row.entropy /= B;
    for (int a = 0; a < kNumActions; ++a) row.mean_probs[static_cast<size_t>(a)] /= B;

    g.backward(loss);
    p.apply_sgd(lr_agent);
    return res;
}

}  // namespace bioaug
