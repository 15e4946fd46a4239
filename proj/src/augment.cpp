#include "bioaug/augment.hpp"

#include <algorithm>
#include <cmath>

#include "bioaug/errors.hpp"

namespace bioaug {

const char* aug_kind_name(AugKind k) {
    switch (k) {
        case AugKind::TimeMasking: return "TimeMasking";
        case AugKind::TimePermutation: return "TimePermutation";
        case AugKind::CropResize: return "CropResize";
        case AugKind::TimeFlip: return "TimeFlip";
        case AugKind::TimeWarp: return "TimeWarp";
    }
    return "?";
}

AugKind aug_kind_from_name(const std::string& name) {
    for (int i = 0; i < kNumActions; ++i)
        if (name == aug_kind_name(static_cast<AugKind>(i))) return static_cast<AugKind>(i);
    throw ConfigError("unknown augmentation kind: " + name);
}

Epoch time_masking(const Epoch& x, double mask_ratio, uint64_t rng_seed) {
    if (!(mask_ratio > 0.0 && mask_ratio <= 1.0))
        throw ConfigError("time_masking: mask_ratio must be in (0,1], got " + std::to_string(mask_ratio));
    const size_t L = x.length();
    Epoch out = x;
    const size_t span = static_cast<size_t>(std::floor(mask_ratio * static_cast<double>(L)));
    if (span == 0 || L == 0) return out;
    Rng rng(rng_seed);
    const size_t start = rng.next_below(L - span + 1);
    std::fill(out.samples.begin() + static_cast<long>(start),
              out.samples.begin() + static_cast<long>(start + span), 0.0);
    return out;
}

Epoch time_permutation(const Epoch& x, int n_segments, uint64_t rng_seed) {
    const size_t L = x.length();
    if (n_segments < 1 || static_cast<size_t>(n_segments) > L)
        throw ConfigError("time_permutation: n_segments must be in [1, L], got " +
                          std::to_string(n_segments));
    // near-equal contiguous segments: the first L % n get one extra sample
    const size_t n = static_cast<size_t>(n_segments);
    std::vector<size_t> seg_start(n + 1, 0);
    const size_t base = L / n, extra = L % n;
    for (size_t i = 0; i < n; ++i) seg_start[i + 1] = seg_start[i] + base + (i < extra ? 1 : 0);

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(rng_seed);
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);

    Epoch out = x;
    size_t pos = 0;
    for (size_t i = 0; i < n; ++i) {
        const size_t s = order[i];
        for (size_t j = seg_start[s]; j < seg_start[s + 1]; ++j) out.samples[pos++] = x.samples[j];
    }
    return out;
}

Epoch crop_resize(const Epoch& x, double crop_fraction, uint64_t rng_seed) {
    if (!(crop_fraction > 0.0 && crop_fraction <= 1.0))
        throw ConfigError("crop_resize: crop_fraction must be in (0,1], got " +
                          std::to_string(crop_fraction));
    const size_t L = x.length();
    Epoch out = x;
    if (L <= 1) return out;
    const size_t crop_len =
        std::min(L, static_cast<size_t>(std::ceil(crop_fraction * static_cast<double>(L))));
    Rng rng(rng_seed);
    const size_t start = rng.next_below(L - crop_len + 1);
    if (crop_len == 1) {
        std::fill(out.samples.begin(), out.samples.end(), x.samples[start]);
        return out;
    }
    // linear interpolation of the crop window back to length L; endpoints map
    // exactly onto the window ends, constants stay bit-identical
    const double step = static_cast<double>(crop_len - 1) / static_cast<double>(L - 1);
    for (size_t i = 0; i < L; ++i) {
        const double pos = static_cast<double>(i) * step;
        const size_t lo = static_cast<size_t>(pos);
        if (lo >= crop_len - 1) {
            out.samples[i] = x.samples[start + crop_len - 1];
            continue;
        }
        const double frac = pos - static_cast<double>(lo);
        const double a = x.samples[start + lo], b = x.samples[start + lo + 1];
        out.samples[i] = a + (b - a) * frac;
    }
    return out;
}

Epoch time_flip(const Epoch& x) {
    Epoch out = x;
    std::reverse(out.samples.begin(), out.samples.end());
    return out;
}

Epoch time_warp(const Epoch& x, int n_knots, double max_speed_ratio, uint64_t rng_seed) {
    if (n_knots < 2) throw ConfigError("time_warp: n_knots must be >= 2, got " + std::to_string(n_knots));
    if (!(max_speed_ratio >= 1.0))
        throw ConfigError("time_warp: max_speed_ratio must be >= 1, got " +
                          std::to_string(max_speed_ratio));
    const size_t L = x.length();
    Epoch out = x;
    if (L <= 2) return out;

    // log-uniform knot speeds in [1/r, r]; piecewise-linear interpolation
    // between knots keeps speeds strictly positive
    Rng rng(rng_seed);
    std::vector<double> speed(static_cast<size_t>(n_knots));
    for (double& v : speed) v = std::pow(max_speed_ratio, 2.0 * rng.next_double() - 1.0);

    // cumulative warped time (trapezoid integral of the speed profile),
    // normalized so the endpoints 0 and L-1 stay fixed
    std::vector<double> cum(L, 0.0);
    auto speed_at = [&](size_t i) {
        const double t = static_cast<double>(i) / static_cast<double>(L - 1) *
                         static_cast<double>(n_knots - 1);
        const size_t k = std::min(static_cast<size_t>(n_knots) - 2, static_cast<size_t>(t));
        const double f = t - static_cast<double>(k);
        return speed[k] * (1.0 - f) + speed[k + 1] * f;
    };
    for (size_t i = 1; i < L; ++i) cum[i] = cum[i - 1] + 0.5 * (speed_at(i - 1) + speed_at(i));
    const double norm = static_cast<double>(L - 1) / cum[L - 1];
    // strictly increasing map from output time to input time; both endpoints
    // stay fixed exactly
    out.samples[0] = x.samples[0];
    out.samples[L - 1] = x.samples[L - 1];
    for (size_t i = 1; i + 1 < L; ++i) {
        const double pos = std::min(cum[i] * norm, static_cast<double>(L - 1));
        const size_t lo = static_cast<size_t>(pos);
        if (lo >= L - 1) {
            out.samples[i] = x.samples[L - 1];
            continue;
        }
        const double frac = pos - static_cast<double>(lo);
        const double a = x.samples[lo], b = x.samples[lo + 1];
        out.samples[i] = a + (b - a) * frac;
    }
    return out;
}

Epoch jitter(const Epoch& x, double sigma, uint64_t rng_seed) {
    if (sigma < 0.0) throw ConfigError("jitter: sigma must be >= 0, got " + std::to_string(sigma));
    Epoch out = x;
    if (sigma == 0.0) return out;
    Rng rng(rng_seed);
    for (double& v : out.samples) v += sigma * rng.next_gauss();
    return out;
}

Epoch scale(const Epoch& x, double max_delta, uint64_t rng_seed) {
    if (max_delta < 0.0)
        throw ConfigError("scale: max_delta must be >= 0, got " + std::to_string(max_delta));
    Epoch out = x;
    if (max_delta == 0.0) return out;
    Rng rng(rng_seed);
    const double factor = 1.0 - max_delta + 2.0 * max_delta * rng.next_double();
    for (double& v : out.samples) v *= factor;
    return out;
}

Epoch weak_view(const Epoch& x, uint64_t rng_seed, const AugDefaults& d) {
    // scale first, then jitter: the noise std stays absolute in normalized units
    Epoch out = scale(x, d.scale_max_delta, derive_seed(rng_seed, 0));
    return jitter(out, d.jitter_sigma, derive_seed(rng_seed, 1));
}

Epoch apply_action(const Epoch& x, AugmentationAction a, uint64_t rng_seed, const AugDefaults& d) {
    switch (a.kind) {
        case AugKind::TimeMasking: return time_masking(x, d.mask_ratio, rng_seed);
        case AugKind::TimePermutation: return time_permutation(x, d.n_segments, rng_seed);
        case AugKind::CropResize: return crop_resize(x, d.crop_fraction, rng_seed);
        case AugKind::TimeFlip: return time_flip(x);
        case AugKind::TimeWarp: return time_warp(x, d.warp_knots, d.warp_max_speed_ratio, rng_seed);
    }
    throw ConfigError("apply_action: unknown action kind " +
                      std::to_string(static_cast<int>(a.kind)));
}

}  // namespace bioaug
