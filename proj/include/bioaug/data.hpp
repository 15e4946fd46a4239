#ifndef BIOAUG_DATA_HPP
#define BIOAUG_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bioaug/augment.hpp"

namespace bioaug {

enum class SplitTag : uint8_t { Train = 0, Test = 1 };

// A labeled epoch collection plus split/visibility tags. Tags are parallel
// to `epochs` and filled in by split(); until then they are empty.
struct Dataset {
    std::vector<Epoch> epochs;
    int n_classes = 0;
    double sample_rate = 0.0;
    int epoch_len = 0;

    std::vector<SplitTag> split_tag;
    std::vector<uint8_t> labeled;    // label visible for agent training
    std::vector<uint8_t> reference;  // reward reference epoch (subset of labeled)

    bool has_split() const { return split_tag.size() == epochs.size(); }
};

enum class SynthTask { GlobalContext, LocalPattern };

const char* synth_task_name(SynthTask t);
SynthTask synth_task_from_name(const std::string& name);  // throws ConfigError

// Desk-scale surrogate tasks with a known-optimal strong augmentation.
//
// GlobalContext: the class is a slow sawtooth envelope rate spanning the
// whole epoch. Zeroing a local span keeps the rate readable; cropping or
// warping rescales it into another class's rate.
//
// LocalPattern: the class is the sub-burst count of one short transient at a
// random position. Zeroing deletes bursts; cropping keeps the transient's
// structure whenever the window contains it.
struct SyntheticTaskSpec {
    SynthTask task = SynthTask::GlobalContext;
    int n_subjects = 12;
    int epochs_per_subject = 99;
    int epoch_len = 128;
    int n_classes = 3;
    double noise_level = 0.1;
    uint64_t seed = 1;
    double sample_rate = 32.0;
};

Dataset synth_generate(const SyntheticTaskSpec& spec);

// Zero-phase band-pass: fourth-order Butterworth high- and low-pass biquad
// cascades run forward-backward with reflect padding and steady-state
// initial conditions (so DC maps to exactly zero).
Epoch bandpass(const Epoch& x, double low_hz, double high_hz, double sample_rate);
std::vector<double> bandpass_signal(const std::vector<double>& x, double low_hz, double high_hz,
                                    double sample_rate);

// Per-epoch standardization; constant input yields zeros and sets the flag.
Epoch z_normalize(const Epoch& x, bool* was_constant = nullptr);

// Non-overlapping contiguous windows; the trailing remainder is dropped.
std::vector<Epoch> window(const std::vector<double>& recording, double window_sec,
                          double sample_rate);

// filter -> window -> z-normalize, the preprocessing order used throughout.
std::vector<Epoch> preprocess(const std::vector<double>& recording, double low_hz, double high_hz,
                              double sample_rate, double window_sec);

// Subject-level train/test partition plus stratified label-visibility and
// reference tags. Deterministic per seed.
void split(Dataset& ds, double train_frac, double labeled_frac, uint64_t seed);

// Binary little-endian dataset file:
//   magic "BADS", version u32, sample_rate f32, epoch_len u32, n_classes u16,
//   n_epochs u32; per epoch: subject_id u32, label i16 (-1 = hidden),
//   f32 samples.
constexpr uint32_t kDatasetVersion = 1;

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace bioaug

#endif
