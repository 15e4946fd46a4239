#ifndef BIOAUG_PIPELINE_HPP
#define BIOAUG_PIPELINE_HPP

#include <optional>
#include <string>
#include <vector>

#include "bioaug/contrastive.hpp"
#include "bioaug/data.hpp"
#include "bioaug/reward.hpp"
#include "bioaug/rl.hpp"

namespace bioaug {

enum class BaselineMode { RLBioAug, RandomSelection, Fixed };
enum class RewardMode { SoftKNN, Accuracy, SSLLoss };

const char* reward_mode_name(RewardMode m);

// Full experiment description. Defaults mirror the protocol's desk-scale
// settings; JSON round-trips through to_json/from_json with unknown keys
// rejected.
struct ExperimentConfig {
    // data source: file path, or a synthetic task when no path is given
    std::string dataset_path;
    std::optional<SyntheticTaskSpec> synthetic;

    EncoderConfig encoder;
    PolicyConfig policy;

    double tau = 0.5;
    double tau_knn = 0.1;
    int k_neighbors = 20;
    int top_k = 3;
    double lr_enc = 0.1;
    double lr_agent = 1e-3;
    double beta_start = 1.0;
    double beta_end = 0.1;
    double gamma = 0.1;
    int phase1_steps = 2000;
    int phase2_steps = 5000;
    int batch_size = 64;
    uint64_t seed = 1;
    double train_frac = 0.8;
    double labeled_frac = 0.1;

    BaselineMode baseline = BaselineMode::RLBioAug;
    AugKind fixed_action = AugKind::TimeMasking;  // used when baseline == Fixed
    RewardMode reward_mode = RewardMode::SoftKNN;
    bool phase2_warm_start = false;

    void validate() const;
    std::string to_json() const;                       // canonical, defaults applied
    static ExperimentConfig from_json(const std::string& text);
    std::string hash() const;                          // 16 hex chars over to_json()
};

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

using Confusion = std::vector<std::vector<long>>;  // [true][predicted]

// Mean per-class recall; a class with no actual samples is an error here
// (the probe pre-filters absent classes).
double balanced_accuracy(const Confusion& confusion);

// Unweighted mean per-class F1; a class with zero predicted and zero actual
// positives contributes F1 = 0 and a warning.
double macro_f1(const Confusion& confusion, std::vector<std::string>* warnings = nullptr);

struct EvalReport {
    Confusion confusion;
    std::vector<double> precision, recall, f1;
    double bacc = 0.0;
    double mf1 = 0.0;
    uint64_t seed = 0;
    std::string config_hash;
    std::vector<std::string> warnings;

    std::string to_json() const;
};

// ---------------------------------------------------------------------------
// protocol phases
// ---------------------------------------------------------------------------

struct Phase1Output {
    ParamStore policy_params;
    ParamStore encoder_params;  // enc.* + proj.* after the cooperative loop
    PolicyTrace trace;
};

// Cooperative loop on the labeled train subset: frozen-encoder state, policy
// action, SSL step, Soft-KNN (or ablation) reward, policy-gradient step.
Phase1Output phase1_train_agent(const ExperimentConfig& cfg, const Dataset& ds);

// Label-free view of the train split: the label field does not exist here.
struct UnlabeledEpoch {
    std::vector<double> samples;
    uint32_t subject_id = 0;
};
struct UnlabeledDataset {
    std::vector<UnlabeledEpoch> epochs;
};
UnlabeledDataset unlabeled_train_view(const Dataset& ds);

// SSL over the full unlabeled train split. The frozen policy drives action
// choice for RLBioAug; RandomSelection and Fixed never touch a policy
// network. policy_evals counts policy-network forward batches.
ParamStore phase2_pretrain(const ExperimentConfig& cfg, const UnlabeledDataset& view,
                           const ParamStore* policy_params, const ParamStore* warm_start_encoder,
                           long* policy_evals);

// The RandomSelection baseline's action draw for (step, index).
int random_selection_action(uint64_t master_seed, int step, int index);

// Frozen-encoder multinomial logistic probe: fit on train-split embeddings,
// evaluate on the test split.
EvalReport linear_probe(ParamStore& encoder_params, const EncoderConfig& cfg, const Dataset& ds,
                        uint64_t seed, const std::string& config_hash);

struct ExperimentResult {
    EvalReport report;
    PolicyTrace trace;
    ParamStore encoder_params;
    ParamStore policy_params;
    long policy_evals = 0;
    std::string report_json;
};

// Dispatches RLBioAug (phase 1 -> phase 2 -> probe) or a baseline
// (SSL with uniform/fixed actions -> probe).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Loads the configured dataset (file or synthetic) and applies the split.
Dataset prepare_dataset(const ExperimentConfig& cfg);

}  // namespace bioaug

#endif
