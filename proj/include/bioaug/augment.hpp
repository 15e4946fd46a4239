#ifndef BIOAUG_AUGMENT_HPP
#define BIOAUG_AUGMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bioaug/rng.hpp"

namespace bioaug {

// One fixed-length signal window, the atomic training sample.
// label < 0 means hidden/unknown.
struct Epoch {
    std::vector<double> samples;
    int label = -1;
    uint32_t subject_id = 0;

    size_t length() const { return samples.size(); }
    bool operator==(const Epoch& o) const {
        return samples == o.samples && label == o.label && subject_id == o.subject_id;
    }
};

// Discrete strong-augmentation action space, |A| = 5.
enum class AugKind : int {
    TimeMasking = 0,
    TimePermutation = 1,
    CropResize = 2,
    TimeFlip = 3,
    TimeWarp = 4,
};

constexpr int kNumActions = 5;

const char* aug_kind_name(AugKind k);
AugKind aug_kind_from_name(const std::string& name);  // throws ConfigError

struct AugmentationAction {
    AugKind kind;
};

// Default strong-kernel intensities. Mid-strength distortions, comparable
// across kinds.
struct AugDefaults {
    double mask_ratio = 0.25;
    int n_segments = 4;
    double crop_fraction = 0.5;
    int warp_knots = 4;
    double warp_max_speed_ratio = 2.0;
    double jitter_sigma = 0.01;
    double scale_max_delta = 0.02;
};

// Strong kernels. All preserve length and are bit-deterministic per
// (input, parameters, seed).
Epoch time_masking(const Epoch& x, double mask_ratio, uint64_t rng_seed);
Epoch time_permutation(const Epoch& x, int n_segments, uint64_t rng_seed);
Epoch crop_resize(const Epoch& x, double crop_fraction, uint64_t rng_seed);
Epoch time_flip(const Epoch& x);
Epoch time_warp(const Epoch& x, int n_knots, double max_speed_ratio, uint64_t rng_seed);

// Weak kernels (anchor view).
Epoch jitter(const Epoch& x, double sigma, uint64_t rng_seed);
Epoch scale(const Epoch& x, double max_delta, uint64_t rng_seed);

// Scaling then jittering with the defaults above; sub-seeds are split
// deterministically from rng_seed.
Epoch weak_view(const Epoch& x, uint64_t rng_seed, const AugDefaults& d = {});

// Dispatches a strong action with module-default parameters.
Epoch apply_action(const Epoch& x, AugmentationAction a, uint64_t rng_seed,
                   const AugDefaults& d = {});

}  // namespace bioaug

#endif
