#include "bioaug/model.hpp"

#include <array>
#include <cmath>

#include "bioaug/errors.hpp"
#include "bioaug/rng.hpp"

namespace bioaug {
namespace {

constexpr int kKernel = 7;  // conv kernel width used throughout the encoder

uint64_t name_hash(const std::string& name) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

void EncoderConfig::validate() const {
    if (n_blocks < 1 || static_cast<int>(channels.size()) != n_blocks)
        throw ConfigError("encoder config: channels list must have n_blocks entries");
    for (int c : channels)
        if (c < 1) throw ConfigError("encoder config: channel counts must be >= 1");
    if (embedding_dim < 1 || projection_dim < 1)
        throw ConfigError("encoder config: dims must be >= 1");
}

void PolicyConfig::validate() const {
    if (history_len < 1) throw ConfigError("policy config: history_len must be >= 1");
    if (token_dim < 1 || n_heads < 1 || token_dim % n_heads != 0)
        throw ConfigError("policy config: token_dim must be a positive multiple of n_heads");
    if (n_actions != kNumActions)
        throw ConfigError("policy config: n_actions must equal the action space size 5");
}

Graph::NodeId ParamBinder::operator()(const std::string& name) {
    for (const auto& [n, id] : bound_)
        if (n == name) return id;
    auto it = store_.find(name);
    if (it == store_.end()) throw ConfigError("parameter missing from store: " + name);
    Tensor t = it->second;
    t.requires_grad = trainable_;
    const Graph::NodeId id = graph_.input(std::move(t));
    bound_.emplace_back(name, id);
    return id;
}

void ParamBinder::apply_sgd(double lr) {
    if (!trainable_) return;
    for (const auto& [name, id] : bound_)
        if (graph_.has_grad(id)) sgd_step(store_.at(name), graph_.grad(id), lr);
}

Tensor fan_in_uniform(std::vector<int> shape, int fan_in, uint64_t seed, const std::string& name) {
    Tensor t(std::move(shape));
    Rng rng(derive_seed(seed, name_hash(name)));
    const double limit = std::sqrt(6.0 / static_cast<double>(std::max(1, fan_in)));
    for (double& v : t.data) v = limit * (2.0 * rng.next_double() - 1.0);
    return t;
}

// ---------------------------------------------------------------------------
// parameter initialization
// ---------------------------------------------------------------------------

void init_encoder_params(ParamStore& store, const EncoderConfig& cfg, uint64_t seed) {
    cfg.validate();
    auto put = [&](const std::string& name, Tensor t) { store[name] = std::move(t); };
    put("enc.stem.w", fan_in_uniform({cfg.channels[0], 1, kKernel}, kKernel, seed, "enc.stem.w"));
    put("enc.stem.b", Tensor({cfg.channels[0], 1}));
    int prev = cfg.channels[0];
    for (int b = 0; b < cfg.n_blocks; ++b) {
        const int ch = cfg.channels[static_cast<size_t>(b)];
        const std::string p = "enc.block" + std::to_string(b);
        put(p + ".conv1.w", fan_in_uniform({ch, prev, kKernel}, prev * kKernel, seed, p + ".conv1.w"));
        put(p + ".conv1.b", Tensor({ch, 1}));
        put(p + ".conv2.w", fan_in_uniform({ch, ch, kKernel}, ch * kKernel, seed, p + ".conv2.w"));
        put(p + ".conv2.b", Tensor({ch, 1}));
        put(p + ".down.w", fan_in_uniform({ch, prev, 1}, prev, seed, p + ".down.w"));
        put(p + ".down.b", Tensor({ch, 1}));
        prev = ch;
    }
    put("enc.head.w", fan_in_uniform({prev, cfg.embedding_dim}, prev, seed, "enc.head.w"));
    put("enc.head.b", Tensor({cfg.embedding_dim}));
}

void init_projector_params(ParamStore& store, const EncoderConfig& cfg, uint64_t seed) {
    cfg.validate();
    store["proj.fc1.w"] = fan_in_uniform({cfg.embedding_dim, cfg.embedding_dim}, cfg.embedding_dim,
                                         seed, "proj.fc1.w");
    store["proj.fc1.b"] = Tensor({cfg.embedding_dim});
    store["proj.fc2.w"] = fan_in_uniform({cfg.embedding_dim, cfg.projection_dim}, cfg.embedding_dim,
                                         seed, "proj.fc2.w");
    store["proj.fc2.b"] = Tensor({cfg.projection_dim});
}

void init_policy_params(ParamStore& store, const PolicyConfig& cfg, int state_dim, uint64_t seed) {
    cfg.validate();
    const int D = cfg.token_dim;
    const int S = cfg.history_len + 1;
    auto put = [&](const std::string& name, Tensor t) { store[name] = std::move(t); };
    put("pol.state.w", fan_in_uniform({state_dim, D}, state_dim, seed, "pol.state.w"));
    put("pol.state.b", Tensor({D}));
    put("pol.action_embed", fan_in_uniform({cfg.n_actions + 1, D}, D, seed, "pol.action_embed"));
    put("pol.reward.w", fan_in_uniform({1, D}, 1, seed, "pol.reward.w"));
    put("pol.reward.b", Tensor({D}));
    put("pol.pos_embed", fan_in_uniform({S, D}, D, seed, "pol.pos_embed"));
    put("pol.ln1.g", Tensor({D}, 1.0));
    put("pol.ln1.b", Tensor({D}));
    const int dh = D / cfg.n_heads;
    for (int h = 0; h < cfg.n_heads; ++h) {
        const std::string p = "pol.attn.h" + std::to_string(h);
        put(p + ".wq", fan_in_uniform({D, dh}, D, seed, p + ".wq"));
        put(p + ".wk", fan_in_uniform({D, dh}, D, seed, p + ".wk"));
        put(p + ".wv", fan_in_uniform({D, dh}, D, seed, p + ".wv"));
    }
    put("pol.attn.wo", fan_in_uniform({D, D}, D, seed, "pol.attn.wo"));
    put("pol.attn.bo", Tensor({D}));
    put("pol.ln2.g", Tensor({D}, 1.0));
    put("pol.ln2.b", Tensor({D}));
    put("pol.ff.w1", fan_in_uniform({D, 2 * D}, D, seed, "pol.ff.w1"));
    put("pol.ff.b1", Tensor({2 * D}));
    put("pol.ff.w2", fan_in_uniform({2 * D, D}, 2 * D, seed, "pol.ff.w2"));
    put("pol.ff.b2", Tensor({D}));
    // small head so the initial action distribution starts near uniform
    Tensor head = fan_in_uniform({D, cfg.n_actions}, D, seed, "pol.head.w");
    for (double& v : head.data) v *= 0.05;
    put("pol.head.w", std::move(head));
    put("pol.head.b", Tensor({cfg.n_actions}));
}

// ---------------------------------------------------------------------------
// forward builders
// ---------------------------------------------------------------------------

Graph::NodeId encoder_forward(Graph& g, ParamBinder& p, const EncoderConfig& cfg, Graph::NodeId x) {
    const Tensor& xv = g.value(x);
    if (xv.rank() != 2) throw ShapeError("encoder: expected [batch, length] input");
    const int B = xv.dim(0), L = xv.dim(1);
    const int pad = kKernel / 2;
    Graph::NodeId h = g.reshape(x, {B, 1, L});
    h = g.add(g.conv1d(h, p("enc.stem.w"), 1, pad), p("enc.stem.b"));
    h = g.relu(h);
    for (int b = 0; b < cfg.n_blocks; ++b) {
        const std::string pre = "enc.block" + std::to_string(b);
        Graph::NodeId main = g.add(g.conv1d(h, p(pre + ".conv1.w"), 2, pad), p(pre + ".conv1.b"));
        main = g.relu(main);
        main = g.add(g.conv1d(main, p(pre + ".conv2.w"), 1, pad), p(pre + ".conv2.b"));
        Graph::NodeId down = g.add(g.conv1d(h, p(pre + ".down.w"), 2, 0), p(pre + ".down.b"));
        h = g.relu(g.add(main, down));
    }
    Graph::NodeId pooled = g.mean_axis(h, 2);  // [B, channels.back()]
    return g.add(g.matmul(pooled, p("enc.head.w")), p("enc.head.b"));
}

Graph::NodeId projector_forward(Graph& g, ParamBinder& p, const EncoderConfig& cfg,
                                Graph::NodeId emb) {
    const Tensor& ev = g.value(emb);
    if (ev.rank() != 2 || ev.dim(1) != cfg.embedding_dim)
        throw ShapeError("projector: expected [batch, " + std::to_string(cfg.embedding_dim) +
                         "] input, got " + Tensor::shape_str(ev.shape));
    Graph::NodeId h = g.relu(g.add(g.matmul(emb, p("proj.fc1.w")), p("proj.fc1.b")));
    h = g.add(g.matmul(h, p("proj.fc2.w")), p("proj.fc2.b"));
    return g.l2_normalize_rows(h, 1e-12);
}

Graph::NodeId policy_forward(Graph& g, ParamBinder& p, const PolicyConfig& cfg, int state_dim,
                             const std::vector<AgentContext>& batch) {
    cfg.validate();
    if (batch.empty()) throw ShapeError("policy: empty context batch");
    const int D = cfg.token_dim;
    const int K = cfg.history_len;
    const int S = K + 1;
    const int dh = D / cfg.n_heads;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<int> pos_ids(static_cast<size_t>(S));
    for (int i = 0; i < S; ++i) pos_ids[static_cast<size_t>(i)] = i;

    // final-position selector row (the state token sits last)
    Tensor sel({1, S});
    sel.data[static_cast<size_t>(S - 1)] = 1.0;
    const Graph::NodeId sel_node = g.constant(sel);

    std::vector<Graph::NodeId> rows;
    rows.reserve(batch.size());
    for (const AgentContext& ctx : batch) {
        if (static_cast<int>(ctx.past_actions.size()) > K ||
            ctx.past_actions.size() != ctx.past_rewards.size())
            throw ShapeError("policy: context history longer than K or misaligned");
        if (static_cast<int>(ctx.state.size()) != state_dim)
            throw ShapeError("policy: state width " + std::to_string(ctx.state.size()) +
                             " != configured " + std::to_string(state_dim));

        // history tokens, oldest first, front-padded
        std::vector<int> acts(static_cast<size_t>(K), kPadActionId);
        std::vector<double> rews(static_cast<size_t>(K), 0.0);
        const size_t n = ctx.past_actions.size();
        for (size_t i = 0; i < n; ++i) {
            acts[static_cast<size_t>(K) - n + i] = ctx.past_actions[i];
            rews[static_cast<size_t>(K) - n + i] = ctx.past_rewards[i];
        }
        const Graph::NodeId act_tok = g.embedding(p("pol.action_embed"), acts);  // [K, D]
        const Graph::NodeId rew_in = g.constant(Tensor({K, 1}, rews));
        const Graph::NodeId rew_tok = g.add(g.matmul(rew_in, p("pol.reward.w")), p("pol.reward.b"));
        const Graph::NodeId hist = g.add(act_tok, rew_tok);

        const Graph::NodeId state_in = g.constant(Tensor({1, state_dim}, ctx.state));
        const Graph::NodeId state_tok = g.add(g.matmul(state_in, p("pol.state.w")), p("pol.state.b"));

        const std::array<Graph::NodeId, 2> parts{hist, state_tok};
        Graph::NodeId x = g.concat(std::span<const Graph::NodeId>(parts.data(), parts.size()), 0);
        x = g.add(x, g.embedding(p("pol.pos_embed"), pos_ids));

        // pre-LN self-attention block + feed-forward
        const Graph::NodeId h1 = g.layer_norm(x, p("pol.ln1.g"), p("pol.ln1.b"));
        std::vector<Graph::NodeId> heads;
        heads.reserve(static_cast<size_t>(cfg.n_heads));
        for (int hd = 0; hd < cfg.n_heads; ++hd) {
            const std::string pre = "pol.attn.h" + std::to_string(hd);
            const Graph::NodeId q = g.matmul(h1, p(pre + ".wq"));
            const Graph::NodeId k = g.matmul(h1, p(pre + ".wk"));
            const Graph::NodeId v = g.matmul(h1, p(pre + ".wv"));
            const Graph::NodeId a =
                g.softmax(g.scalar_mul(g.matmul(q, g.transpose(k)), attn_scale), 1);
            heads.push_back(g.matmul(a, v));
        }
        const Graph::NodeId cat = g.concat(std::span<const Graph::NodeId>(heads.data(), heads.size()), 1);
        x = g.add(x, g.add(g.matmul(cat, p("pol.attn.wo")), p("pol.attn.bo")));
        const Graph::NodeId h2 = g.layer_norm(x, p("pol.ln2.g"), p("pol.ln2.b"));
        Graph::NodeId ff = g.relu(g.add(g.matmul(h2, p("pol.ff.w1")), p("pol.ff.b1")));
        ff = g.add(g.matmul(ff, p("pol.ff.w2")), p("pol.ff.b2"));
        x = g.add(x, ff);

        const Graph::NodeId last = g.matmul(sel_node, x);  // [1, D]
        const Graph::NodeId logits = g.add(g.matmul(last, p("pol.head.w")), p("pol.head.b"));
        rows.push_back(g.softmax(logits, 1));
    }
    if (rows.size() == 1) return rows[0];
    return g.concat(std::span<const Graph::NodeId>(rows.data(), rows.size()), 0);
}

Tensor epochs_to_tensor(const std::vector<const Epoch*>& batch) {
    if (batch.empty()) throw ShapeError("epochs_to_tensor: empty batch");
    const size_t L = batch[0]->length();
    Tensor t({static_cast<int>(batch.size()), static_cast<int>(L)});
    for (size_t i = 0; i < batch.size(); ++i) {
        if (batch[i]->length() != L)
            throw ShapeError("epochs_to_tensor: epoch length mismatch: " +
                             std::to_string(batch[i]->length()) + " vs " + std::to_string(L));
        std::copy(batch[i]->samples.begin(), batch[i]->samples.end(),
                  t.data.begin() + static_cast<long>(i * L));
    }
    return t;
}

std::vector<std::vector<double>> encode(const std::vector<const Epoch*>& batch, ParamStore& params,
                                        const EncoderConfig& cfg) {
    Graph g;
    ParamBinder frozen(g, params, false);
    const Graph::NodeId emb = encoder_forward(g, frozen, cfg, g.constant(epochs_to_tensor(batch)));
    const Tensor& ev = g.value(emb);
    std::vector<std::vector<double>> out(batch.size());
    for (size_t i = 0; i < batch.size(); ++i)
        out[i].assign(ev.data.begin() + static_cast<long>(i * static_cast<size_t>(ev.dim(1))),
                      ev.data.begin() + static_cast<long>((i + 1) * static_cast<size_t>(ev.dim(1))));
    return out;
}

}  // namespace bioaug
