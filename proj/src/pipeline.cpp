#include "bioaug/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "bioaug/errors.hpp"

namespace bioaug {

using ordered_json = nlohmann::ordered_json;

namespace {

void check_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
}

std::string baseline_string(const ExperimentConfig& cfg) {
    switch (cfg.baseline) {
        case BaselineMode::RLBioAug: return "RLBioAug";
        case BaselineMode::RandomSelection: return "RandomSelection";
        case BaselineMode::Fixed: return std::string("Fixed:") + aug_kind_name(cfg.fixed_action);
    }
    return "?";
}

void parse_baseline(const std::string& s, ExperimentConfig& cfg) {
    if (s == "RLBioAug") {
        cfg.baseline = BaselineMode::RLBioAug;
    } else if (s == "RandomSelection") {
        cfg.baseline = BaselineMode::RandomSelection;
    } else if (s.rfind("Fixed:", 0) == 0) {
        cfg.baseline = BaselineMode::Fixed;
        cfg.fixed_action = aug_kind_from_name(s.substr(6));
    } else {
        throw ConfigError("config: unknown baseline '" + s + "'");
    }
}

RewardMode parse_reward_mode(const std::string& s) {
    if (s == "SoftKNN") return RewardMode::SoftKNN;
    if (s == "Accuracy") return RewardMode::Accuracy;
    if (s == "SSLLoss") return RewardMode::SSLLoss;
    throw ConfigError("config: unknown reward mode '" + s + "'");
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex16(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

int modal_action(const std::vector<int>& actions) {
    std::array<int, kNumActions> counts{};
    for (int a : actions) counts[static_cast<size_t>(a)] += 1;
    int best = 0;
    for (int a = 1; a < kNumActions; ++a)
        if (counts[static_cast<size_t>(a)] > counts[static_cast<size_t>(best)]) best = a;
    return best;
}

struct History {
    std::vector<int> actions;
    std::vector<double> rewards;

    void push(int a, double r, int K) {
        actions.push_back(a);
        rewards.push_back(r);
        if (static_cast<int>(actions.size()) > K) {
            actions.erase(actions.begin());
            rewards.erase(rewards.begin());
        }
    }
};

std::vector<AgentContext> make_contexts(const std::vector<std::vector<double>>& states,
                                        const History& hist) {
    std::vector<AgentContext> ctxs(states.size());
    for (size_t i = 0; i < states.size(); ++i) {
        ctxs[i].state = states[i];
        ctxs[i].past_actions = hist.actions;
        ctxs[i].past_rewards = hist.rewards;
    }
    return ctxs;
}

std::vector<std::vector<double>> encode_in_chunks(const std::vector<const Epoch*>& epochs,
                                                  ParamStore& params, const EncoderConfig& cfg) {
    std::vector<std::vector<double>> out;
    out.reserve(epochs.size());
    constexpr size_t kChunk = 256;
    for (size_t s = 0; s < epochs.size(); s += kChunk) {
        const size_t e = std::min(epochs.size(), s + kChunk);
        std::vector<const Epoch*> part(epochs.begin() + static_cast<long>(s),
                                       epochs.begin() + static_cast<long>(e));
        auto emb = encode(part, params, cfg);
        for (auto& v : emb) out.push_back(std::move(v));
    }
    return out;
}

}  // namespace

const char* reward_mode_name(RewardMode m) {
    switch (m) {
        case RewardMode::SoftKNN: return "SoftKNN";
        case RewardMode::Accuracy: return "Accuracy";
        case RewardMode::SSLLoss: return "SSLLoss";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    encoder.validate();
    policy.validate();
    if (dataset_path.empty() == !synthetic.has_value())
        throw ConfigError("config: exactly one of dataset path or synthetic task required");
    if (tau <= 0.0 || tau_knn <= 0.0) throw ConfigError("config: temperatures must be > 0");
    if (k_neighbors < 1) throw ConfigError("config: k_neighbors must be >= 1");
    if (top_k < 1 || top_k > kNumActions)
        throw ConfigError("config: top_k must be in [1, " + std::to_string(kNumActions) + "]");
    if (lr_enc < 0.0 || lr_agent < 0.0) throw ConfigError("config: learning rates must be >= 0");
    if (beta_end < 0.0 || beta_start < beta_end)
        throw ConfigError("config: beta must decay (beta_start >= beta_end >= 0)");
    if (gamma < 0.0) throw ConfigError("config: gamma must be >= 0");
    if (phase1_steps < 1 || phase2_steps < 1) throw ConfigError("config: step counts must be >= 1");
    if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2 (InfoNCE needs negatives)");
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw ConfigError("config: train_frac must be in (0,1)");
    if (!(labeled_frac > 0.0 && labeled_frac <= 1.0))
        throw ConfigError("config: labeled_frac must be in (0,1]");
}

std::string ExperimentConfig::to_json() const {
    ordered_json j;
    ordered_json dsj;
    if (!dataset_path.empty()) {
        dsj["path"] = dataset_path;
    } else if (synthetic) {
        ordered_json s;
        s["task"] = synth_task_name(synthetic->task);
        s["n_subjects"] = synthetic->n_subjects;
        s["epochs_per_subject"] = synthetic->epochs_per_subject;
        s["epoch_len"] = synthetic->epoch_len;
        s["n_classes"] = synthetic->n_classes;
        s["noise_level"] = synthetic->noise_level;
        s["seed"] = synthetic->seed;
        s["sample_rate"] = synthetic->sample_rate;
        dsj["synthetic"] = std::move(s);
    }
    j["dataset"] = std::move(dsj);
    ordered_json enc;
    enc["n_blocks"] = encoder.n_blocks;
    enc["channels"] = encoder.channels;
    enc["embedding_dim"] = encoder.embedding_dim;
    enc["projection_dim"] = encoder.projection_dim;
    j["encoder"] = std::move(enc);
    ordered_json pol;
    pol["history_len"] = policy.history_len;
    pol["token_dim"] = policy.token_dim;
    pol["n_heads"] = policy.n_heads;
    j["policy"] = std::move(pol);
    j["tau"] = tau;
    j["tau_knn"] = tau_knn;
    j["k_neighbors"] = k_neighbors;
    j["top_k"] = top_k;
    j["lr_enc"] = lr_enc;
    j["lr_agent"] = lr_agent;
    j["beta_start"] = beta_start;
    j["beta_end"] = beta_end;
    j["gamma"] = gamma;
    j["phase1_steps"] = phase1_steps;
    j["phase2_steps"] = phase2_steps;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["train_frac"] = train_frac;
    j["labeled_frac"] = labeled_frac;
    j["baseline"] = baseline_string(*this);
    j["reward_mode"] = reward_mode_name(reward_mode);
    j["phase2_warm_start"] = phase2_warm_start;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    check_keys(j,
               {"dataset", "encoder", "policy", "tau", "tau_knn", "k_neighbors", "top_k", "lr_enc",
                "lr_agent", "beta_start", "beta_end", "gamma", "phase1_steps", "phase2_steps",
                "batch_size", "seed", "train_frac", "labeled_frac", "baseline", "reward_mode",
                "phase2_warm_start"},
               "top level");
    ExperimentConfig cfg;
    try {
        if (!j.contains("dataset")) throw ConfigError("config: 'dataset' is required");
        const ordered_json& dsj = j["dataset"];
        check_keys(dsj, {"path", "synthetic"}, "dataset");
        if (dsj.contains("path") == dsj.contains("synthetic"))
            throw ConfigError("config: dataset needs exactly one of 'path' or 'synthetic'");
        if (dsj.contains("path")) {
            cfg.dataset_path = dsj["path"].get<std::string>();
        } else {
            const ordered_json& s = dsj["synthetic"];
            check_keys(s,
                       {"task", "n_subjects", "epochs_per_subject", "epoch_len", "n_classes",
                        "noise_level", "seed", "sample_rate"},
                       "dataset.synthetic");
            SyntheticTaskSpec spec;
            if (s.contains("task")) spec.task = synth_task_from_name(s["task"].get<std::string>());
            if (s.contains("n_subjects")) spec.n_subjects = s["n_subjects"].get<int>();
            if (s.contains("epochs_per_subject"))
                spec.epochs_per_subject = s["epochs_per_subject"].get<int>();
            if (s.contains("epoch_len")) spec.epoch_len = s["epoch_len"].get<int>();
            if (s.contains("n_classes")) spec.n_classes = s["n_classes"].get<int>();
            if (s.contains("noise_level")) spec.noise_level = s["noise_level"].get<double>();
            if (s.contains("seed")) spec.seed = s["seed"].get<uint64_t>();
            if (s.contains("sample_rate")) spec.sample_rate = s["sample_rate"].get<double>();
            cfg.synthetic = spec;
        }
        if (j.contains("encoder")) {
            const ordered_json& e = j["encoder"];
            check_keys(e, {"n_blocks", "channels", "embedding_dim", "projection_dim"}, "encoder");
            if (e.contains("n_blocks")) cfg.encoder.n_blocks = e["n_blocks"].get<int>();
            if (e.contains("channels")) cfg.encoder.channels = e["channels"].get<std::vector<int>>();
            if (e.contains("embedding_dim")) cfg.encoder.embedding_dim = e["embedding_dim"].get<int>();
            if (e.contains("projection_dim"))
                cfg.encoder.projection_dim = e["projection_dim"].get<int>();
        }
        if (j.contains("policy")) {
            const ordered_json& p = j["policy"];
            check_keys(p, {"history_len", "token_dim", "n_heads"}, "policy");
            if (p.contains("history_len")) cfg.policy.history_len = p["history_len"].get<int>();
            if (p.contains("token_dim")) cfg.policy.token_dim = p["token_dim"].get<int>();
            if (p.contains("n_heads")) cfg.policy.n_heads = p["n_heads"].get<int>();
        }
        auto num = [&](const char* k, auto& field) {
            if (j.contains(k)) field = j[k].get<std::decay_t<decltype(field)>>();
        };
        num("tau", cfg.tau);
        num("tau_knn", cfg.tau_knn);
        num("k_neighbors", cfg.k_neighbors);
        num("top_k", cfg.top_k);
        num("lr_enc", cfg.lr_enc);
        num("lr_agent", cfg.lr_agent);
        num("beta_start", cfg.beta_start);
        num("beta_end", cfg.beta_end);
        num("gamma", cfg.gamma);
        num("phase1_steps", cfg.phase1_steps);
        num("phase2_steps", cfg.phase2_steps);
        num("batch_size", cfg.batch_size);
        num("seed", cfg.seed);
        num("train_frac", cfg.train_frac);
        num("labeled_frac", cfg.labeled_frac);
        num("phase2_warm_start", cfg.phase2_warm_start);
        if (j.contains("baseline")) parse_baseline(j["baseline"].get<std::string>(), cfg);
        if (j.contains("reward_mode"))
            cfg.reward_mode = parse_reward_mode(j["reward_mode"].get<std::string>());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string ExperimentConfig::hash() const { return hex16(fnv1a(to_json())); }

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

namespace {

void check_confusion(const Confusion& m) {
    if (m.empty()) throw ConfigError("metrics: empty confusion matrix");
    for (const auto& row : m)
        if (row.size() != m.size()) throw ConfigError("metrics: confusion matrix must be square");
}

struct ClassStats {
    double precision, recall, f1;
    long actual, predicted;
};

ClassStats class_stats(const Confusion& m, size_t c) {
    const size_t C = m.size();
    long tp = m[c][c], actual = 0, predicted = 0;
    for (size_t j = 0; j < C; ++j) {
        actual += m[c][j];
        predicted += m[j][c];
    }
    ClassStats s{};
    s.actual = actual;
    s.predicted = predicted;
    s.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    s.recall = actual > 0 ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

}  // namespace

double balanced_accuracy(const Confusion& confusion) {
    check_confusion(confusion);
    double sum = 0.0;
    for (size_t c = 0; c < confusion.size(); ++c) {
        const ClassStats s = class_stats(confusion, c);
        if (s.actual == 0)
            throw ConfigError("balanced_accuracy: class " + std::to_string(c) +
                              " has an empty confusion row");
        sum += s.recall;
    }
    return sum / static_cast<double>(confusion.size());
}

double macro_f1(const Confusion& confusion, std::vector<std::string>* warnings) {
    check_confusion(confusion);
    double sum = 0.0;
    for (size_t c = 0; c < confusion.size(); ++c) {
        const ClassStats s = class_stats(confusion, c);
        if (s.actual == 0 && s.predicted == 0 && warnings)
            warnings->push_back("class " + std::to_string(c) +
                                " has no actual or predicted samples; F1 counted as 0");
        sum += s.f1;
    }
    return sum / static_cast<double>(confusion.size());
}

std::string EvalReport::to_json() const {
    ordered_json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["balanced_accuracy"] = bacc;
    j["macro_f1"] = mf1;
    ordered_json pcs = ordered_json::array();
    for (size_t c = 0; c < precision.size(); ++c) {
        ordered_json pc;
        pc["precision"] = precision[c];
        pc["recall"] = recall[c];
        pc["f1"] = f1[c];
        pcs.push_back(std::move(pc));
    }
    j["per_class"] = std::move(pcs);
    j["confusion"] = confusion;
    j["warnings"] = warnings;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// phase 1
// ---------------------------------------------------------------------------

Phase1Output phase1_train_agent(const ExperimentConfig& cfg, const Dataset& ds) {
    cfg.validate();
    if (!ds.has_split()) throw ConfigError("phase1: dataset has no split tags");

    std::vector<size_t> pool;       // agent-training epochs: labeled, not reference
    std::vector<const Epoch*> ref_epochs;
    std::vector<int> ref_labels;
    for (size_t i = 0; i < ds.epochs.size(); ++i) {
        if (ds.split_tag[i] != SplitTag::Train) continue;
        if (ds.reference[i]) {
            if (ds.epochs[i].label < 0)
                throw DataError("phase1: reference epoch " + std::to_string(i) + " has hidden label");
            ref_epochs.push_back(&ds.epochs[i]);
            ref_labels.push_back(ds.epochs[i].label);
        } else if (ds.labeled[i]) {
            if (ds.epochs[i].label < 0)
                throw DataError("phase1: labeled epoch " + std::to_string(i) + " has hidden label");
            pool.push_back(i);
        }
    }
    if (pool.empty()) throw ConfigError("phase1: no labeled training epochs outside the reference set");
    const bool uses_knn = cfg.reward_mode != RewardMode::SSLLoss;
    std::optional<ReferenceSet> ref;
    if (uses_knn) {
        ref.emplace(ref_epochs, ref_labels, ds.n_classes);
        if (static_cast<size_t>(cfg.k_neighbors) > ref->size())
            throw ConfigError("phase1: k_neighbors " + std::to_string(cfg.k_neighbors) +
                              " exceeds reference set size " + std::to_string(ref->size()));
    }

    Phase1Output out;
    init_encoder_params(out.encoder_params, cfg.encoder, derive_seed(cfg.seed, 0xE11C));
    init_projector_params(out.encoder_params, cfg.encoder, derive_seed(cfg.seed, 0xE11D));
    init_policy_params(out.policy_params, cfg.policy, cfg.encoder.embedding_dim,
                       derive_seed(cfg.seed, 0xA6E7));

    const ExplorationSchedule schedule{cfg.beta_start, cfg.beta_end, cfg.phase1_steps, cfg.gamma};
    History hist;
    out.trace.rows.reserve(static_cast<size_t>(cfg.phase1_steps));

    for (int step = 0; step < cfg.phase1_steps; ++step) {
        Rng srng(derive_seed(cfg.seed, 0xBA7C4ULL, static_cast<uint64_t>(step)));
        std::vector<const Epoch*> batch(static_cast<size_t>(cfg.batch_size));
        std::vector<int> labels(static_cast<size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) {
            const size_t idx = pool[srng.next_below(pool.size())];
            batch[static_cast<size_t>(i)] = &ds.epochs[idx];
            labels[static_cast<size_t>(i)] = ds.epochs[idx].label;
        }

        // state observation with the frozen (stop-gradient) encoder
        const auto states = encode(batch, out.encoder_params, cfg.encoder);
        const auto contexts = make_contexts(states, hist);

        // action selection from the current policy
        std::vector<int> actions(batch.size());
        {
            Graph g;
            ParamBinder pb(g, out.policy_params, false);
            const Graph::NodeId probs =
                policy_forward(g, pb, cfg.policy, cfg.encoder.embedding_dim, contexts);
            const Tensor& pv = g.value(probs);
            for (size_t i = 0; i < batch.size(); ++i)
                actions[i] = top_k_sample(
                    std::span<const double>(&pv.data[i * kNumActions], kNumActions), cfg.top_k,
                    derive_seed(cfg.seed, 0x70FFULL + static_cast<uint64_t>(step), i));
        }
        std::vector<AugmentationAction> aug_actions(batch.size());
        for (size_t i = 0; i < batch.size(); ++i)
            aug_actions[i] = AugmentationAction{static_cast<AugKind>(actions[i])};

        // SSL step: encoder update on the chosen views
        const SslStepResult ssl = ssl_step(
            batch, aug_actions, out.encoder_params, cfg.encoder, cfg.lr_enc, cfg.tau,
            derive_seed(cfg.seed, 0x551EULL, static_cast<uint64_t>(step)), AugDefaults{},
            cfg.reward_mode == RewardMode::SSLLoss);

        // rewards on the post-update representation space
        std::vector<double> rewards(batch.size());
        if (uses_knn) {
            ref->refresh(out.encoder_params, cfg.encoder);
            for (size_t i = 0; i < batch.size(); ++i) {
                if (cfg.reward_mode == RewardMode::SoftKNN) {
                    rewards[i] = soft_knn_reward(ssl.strong_embeddings[i],
                                                 labels[i], *ref, cfg.k_neighbors, cfg.tau_knn);
                } else {
                    const auto probs = soft_knn_class_probs(ssl.strong_embeddings[i], *ref,
                                                            cfg.k_neighbors, cfg.tau_knn);
                    int argmax = 0;
                    for (int c = 1; c < ds.n_classes; ++c)
                        if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(argmax)])
                            argmax = c;
                    rewards[i] = argmax == labels[i] ? 1.0 : 0.0;
                }
                if (rewards[i] < 0.0 || rewards[i] > 1.0)
                    throw NumericError("phase1: reward outside [0,1]");
            }
        } else {
            const auto losses = info_nce_per_pair(ssl.weak_proj, ssl.strong_proj, cfg.tau);
            for (size_t i = 0; i < batch.size(); ++i) rewards[i] = -losses[i];
        }

        // policy-gradient step
        const RlStepResult rl =
            rl_step(contexts, actions, rewards, out.policy_params, cfg.policy,
                    cfg.encoder.embedding_dim, cfg.lr_agent, schedule, step);
        out.trace.rows.push_back(rl.row);

        hist.push(modal_action(actions), rl.row.mean_reward, cfg.policy.history_len);
    }
    return out;
}

// ---------------------------------------------------------------------------
// phase 2
// ---------------------------------------------------------------------------

UnlabeledDataset unlabeled_train_view(const Dataset& ds) {
    if (!ds.has_split()) throw ConfigError("unlabeled view: dataset has no split tags");
    UnlabeledDataset view;
    for (size_t i = 0; i < ds.epochs.size(); ++i)
        if (ds.split_tag[i] == SplitTag::Train)
            view.epochs.push_back({ds.epochs[i].samples, ds.epochs[i].subject_id});
    return view;
}

int random_selection_action(uint64_t master_seed, int step, int index) {
    Rng rng(derive_seed(master_seed, 0x4A4DULL + static_cast<uint64_t>(step),
                        static_cast<uint64_t>(index)));
    return static_cast<int>(rng.next_below(kNumActions));
}

ParamStore phase2_pretrain(const ExperimentConfig& cfg, const UnlabeledDataset& view,
                           const ParamStore* policy_params, const ParamStore* warm_start_encoder,
                           long* policy_evals) {
    cfg.validate();
    if (view.epochs.empty()) throw DataError("phase2: empty training view");
    if (cfg.baseline == BaselineMode::RLBioAug && !policy_params)
        throw ConfigError("phase2: RLBioAug needs a trained policy checkpoint");

    ParamStore enc_params;
    if (warm_start_encoder) {
        enc_params = *warm_start_encoder;
    } else {
        init_encoder_params(enc_params, cfg.encoder, derive_seed(cfg.seed, 0xF2E1));
        init_projector_params(enc_params, cfg.encoder, derive_seed(cfg.seed, 0xF2E2));
    }
    ParamStore frozen_policy;
    if (policy_params) frozen_policy = *policy_params;  // local copy; never updated

    History hist;
    for (int step = 0; step < cfg.phase2_steps; ++step) {
        Rng srng(derive_seed(cfg.seed, 0xF2AAULL, static_cast<uint64_t>(step)));
        std::vector<Epoch> batch_storage(static_cast<size_t>(cfg.batch_size));
        std::vector<const Epoch*> batch(static_cast<size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) {
            const UnlabeledEpoch& ue = view.epochs[srng.next_below(view.epochs.size())];
            batch_storage[static_cast<size_t>(i)].samples = ue.samples;
            batch_storage[static_cast<size_t>(i)].subject_id = ue.subject_id;
            batch[static_cast<size_t>(i)] = &batch_storage[static_cast<size_t>(i)];
        }

        std::vector<int> actions(batch.size());
        if (cfg.baseline == BaselineMode::RLBioAug) {
            const auto states = encode(batch, enc_params, cfg.encoder);
            const auto contexts = make_contexts(states, hist);
            Graph g;
            ParamBinder pb(g, frozen_policy, false);
            const Graph::NodeId probs =
                policy_forward(g, pb, cfg.policy, cfg.encoder.embedding_dim, contexts);
            if (policy_evals) ++*policy_evals;
            const Tensor& pv = g.value(probs);
            for (size_t i = 0; i < batch.size(); ++i)
                actions[i] = top_k_sample(
                    std::span<const double>(&pv.data[i * kNumActions], kNumActions), cfg.top_k,
                    derive_seed(cfg.seed, 0x7F22ULL + static_cast<uint64_t>(step), i));
        } else if (cfg.baseline == BaselineMode::RandomSelection) {
            for (size_t i = 0; i < batch.size(); ++i)
                actions[i] = random_selection_action(cfg.seed, step, static_cast<int>(i));
        } else {
            std::fill(actions.begin(), actions.end(), static_cast<int>(cfg.fixed_action));
        }

        std::vector<AugmentationAction> aug_actions(batch.size());
        for (size_t i = 0; i < batch.size(); ++i)
            aug_actions[i] = AugmentationAction{static_cast<AugKind>(actions[i])};
        ssl_step(batch, aug_actions, enc_params, cfg.encoder, cfg.lr_enc, cfg.tau,
                 derive_seed(cfg.seed, 0x552EULL, static_cast<uint64_t>(step)));

        hist.push(modal_action(actions), 0.0, cfg.policy.history_len);
    }
    return enc_params;
}

// ---------------------------------------------------------------------------
// linear probe + experiment dispatch
// ---------------------------------------------------------------------------

EvalReport linear_probe(ParamStore& encoder_params, const EncoderConfig& cfg, const Dataset& ds,
                        uint64_t seed, const std::string& config_hash) {
    if (!ds.has_split()) throw ConfigError("linear_probe: dataset has no split tags");
    std::vector<const Epoch*> train_epochs, test_epochs;
    std::vector<int> train_labels, test_labels;
    for (size_t i = 0; i < ds.epochs.size(); ++i) {
        if (ds.epochs[i].label < 0) continue;
        if (ds.split_tag[i] == SplitTag::Train) {
            train_epochs.push_back(&ds.epochs[i]);
            train_labels.push_back(ds.epochs[i].label);
        } else {
            test_epochs.push_back(&ds.epochs[i]);
            test_labels.push_back(ds.epochs[i].label);
        }
    }
    if (train_epochs.empty() || test_epochs.empty())
        throw DataError("linear_probe: need labeled epochs in both splits");

    const auto train_emb = encode_in_chunks(train_epochs, encoder_params, cfg);
    const auto test_emb = encode_in_chunks(test_epochs, encoder_params, cfg);
    const size_t D = train_emb[0].size();
    const size_t C = static_cast<size_t>(ds.n_classes);
    const size_t Nt = train_emb.size();

    // per-dimension standardization from train statistics
    std::vector<double> mu(D, 0.0), sd(D, 0.0);
    for (const auto& e : train_emb)
        for (size_t d = 0; d < D; ++d) mu[d] += e[d];
    for (size_t d = 0; d < D; ++d) mu[d] /= static_cast<double>(Nt);
    for (const auto& e : train_emb)
        for (size_t d = 0; d < D; ++d) sd[d] += (e[d] - mu[d]) * (e[d] - mu[d]);
    for (size_t d = 0; d < D; ++d) {
        sd[d] = std::sqrt(sd[d] / static_cast<double>(Nt));
        if (sd[d] < 1e-12) sd[d] = 1.0;
    }
    auto standardized = [&](const std::vector<std::vector<double>>& src) {
        std::vector<std::vector<double>> out = src;
        for (auto& e : out)
            for (size_t d = 0; d < D; ++d) e[d] = (e[d] - mu[d]) / sd[d];
        return out;
    };
    const auto X = standardized(train_emb);
    const auto Xt = standardized(test_emb);

    // full-batch multinomial logistic regression; zero init keeps it
    // deterministic and the objective is convex
    constexpr int kIters = 400;
    constexpr double kLr = 0.5;
    constexpr double kL2 = 1e-4;
    std::vector<double> W(D * C, 0.0), b(C, 0.0);
    std::vector<double> logits(C), grad_w(D * C), grad_b(C);
    for (int it = 0; it < kIters; ++it) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
        for (size_t i = 0; i < Nt; ++i) {
            double mx = -1e300;
            for (size_t c = 0; c < C; ++c) {
                double v = b[c];
                for (size_t d = 0; d < D; ++d) v += X[i][d] * W[d * C + c];
                logits[c] = v;
                mx = std::max(mx, v);
            }
            double denom = 0.0;
            for (size_t c = 0; c < C; ++c) {
                logits[c] = std::exp(logits[c] - mx);
                denom += logits[c];
            }
            for (size_t c = 0; c < C; ++c) {
                const double p = logits[c] / denom;
                const double err = p - (static_cast<size_t>(train_labels[i]) == c ? 1.0 : 0.0);
                grad_b[c] += err;
                for (size_t d = 0; d < D; ++d) grad_w[d * C + c] += err * X[i][d];
            }
        }
        const double inv = 1.0 / static_cast<double>(Nt);
        for (size_t k = 0; k < W.size(); ++k) W[k] -= kLr * (grad_w[k] * inv + 2.0 * kL2 * W[k]);
        for (size_t c = 0; c < C; ++c) b[c] -= kLr * grad_b[c] * inv;
    }

    EvalReport rep;
    rep.seed = seed;
    rep.config_hash = config_hash;
    rep.confusion.assign(C, std::vector<long>(C, 0));
    for (size_t i = 0; i < Xt.size(); ++i) {
        size_t best = 0;
        double bestv = -1e300;
        for (size_t c = 0; c < C; ++c) {
            double v = b[c];
            for (size_t d = 0; d < D; ++d) v += Xt[i][d] * W[d * C + c];
            if (v > bestv) {
                bestv = v;
                best = c;
            }
        }
        rep.confusion[static_cast<size_t>(test_labels[i])][best] += 1;
    }

    std::vector<size_t> present;
    for (size_t c = 0; c < C; ++c) {
        const ClassStats s = class_stats(rep.confusion, c);
        rep.precision.push_back(s.precision);
        rep.recall.push_back(s.recall);
        rep.f1.push_back(s.f1);
        if (s.actual > 0)
            present.push_back(c);
        else
            rep.warnings.push_back("class " + std::to_string(c) +
                                   " absent from test split; metrics cover present classes only");
    }
    if (present.size() == C) {
        rep.bacc = balanced_accuracy(rep.confusion);
        rep.mf1 = macro_f1(rep.confusion, &rep.warnings);
    } else {
        double br = 0.0, bf = 0.0;
        for (size_t c : present) {
            br += rep.recall[c];
            bf += rep.f1[c];
        }
        rep.bacc = br / static_cast<double>(present.size());
        rep.mf1 = bf / static_cast<double>(present.size());
    }
    return rep;
}

Dataset prepare_dataset(const ExperimentConfig& cfg) {
    Dataset ds = cfg.synthetic ? synth_generate(*cfg.synthetic) : load_dataset(cfg.dataset_path);
    split(ds, cfg.train_frac, cfg.labeled_frac, cfg.seed);
    return ds;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const Dataset ds = prepare_dataset(cfg);
    ExperimentResult res;
    const UnlabeledDataset view = unlabeled_train_view(ds);
    if (cfg.baseline == BaselineMode::RLBioAug) {
        Phase1Output p1 = phase1_train_agent(cfg, ds);
        res.trace = std::move(p1.trace);
        res.policy_params = std::move(p1.policy_params);
        res.encoder_params =
            phase2_pretrain(cfg, view, &res.policy_params,
                            cfg.phase2_warm_start ? &p1.encoder_params : nullptr, &res.policy_evals);
    } else {
        res.encoder_params = phase2_pretrain(cfg, view, nullptr, nullptr, &res.policy_evals);
    }
    res.report = linear_probe(res.encoder_params, cfg.encoder, ds, cfg.seed, cfg.hash());
    res.report_json = res.report.to_json();
    return res;
}

}  // namespace bioaug
