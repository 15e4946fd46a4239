#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "bioaug/data.hpp"
#include "bioaug/errors.hpp"
#include "oracles.hpp"

using namespace bioaug;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> sine(double hz, double fs, size_t n, double amp = 1.0, double phase = 0.0) {
    std::vector<double> x(n);
    for (size_t i = 0; i < n; ++i)
        x[i] = amp * std::sin(2.0 * kPi * hz * static_cast<double>(i) / fs + phase);
    return x;
}

// test-side class predictors for the synthetic tasks, computed from raw
// signal structure rather than any learned model

int oracle_global_context_class(const Epoch& e, int /*n_classes*/) {
    // class = packet (width, orientation)
    const size_t L = e.length();
    // flat artifact spans split the epoch into segments; packet runs and
    // votes never bridge a splice
    std::vector<std::vector<double>> segments(1);
    for (size_t i = 0; i < L;) {
        if (e.samples[i] == 0.0) {
            size_t j = i;
            while (j < L && e.samples[j] == 0.0) ++j;
            if (j - i >= 4) {
                if (!segments.back().empty()) segments.emplace_back();
                i = j;
                continue;
            }
        }
        segments.back().push_back(e.samples[i]);
        ++i;
    }
    // width stage via the carrier band: the wide class carries a carrier at
    // half the frequency. Compare DFT band energies over the two disjoint
    // chirp bands (wide ~ bins 12..20, standard ~ bins 25..39 at L=128).
    const double pi2 = 6.283185307179586;
    auto band_energy = [&](double f_lo, double f_hi) {
        double total = 0.0;
        const int k_lo = static_cast<int>(f_lo * static_cast<double>(L));
        const int k_hi = static_cast<int>(f_hi * static_cast<double>(L));
        for (int k = k_lo; k <= k_hi; ++k) {
            double re = 0.0, im = 0.0;
            for (size_t t = 0; t < L; ++t) {
                const double ang = pi2 * static_cast<double>(k) * static_cast<double>(t) /
                                   static_cast<double>(L);
                re += e.samples[t] * std::cos(ang);
                im -= e.samples[t] * std::sin(ang);
            }
            total += re * re + im * im;
        }
        return total;
    };
    const double wide_band = band_energy(0.095, 0.155);
    const double std_band = band_energy(0.195, 0.305);
    if (wide_band > 1.6 * std_band) return 2;
    // stage 2: orientation from the squared-mass center of each packet run;
    // the front pedestal pulls it below the midpoint for forward packets.
    // Strict pass uses intact unclipped packets; if artifacts clipped every
    // packet, a relaxed pass accepts fragments.
    auto orientation_votes = [&](bool strict) {
        double orientation = 0.0;
        int votes = 0;
        for (const auto& x : segments) {
            const size_t n = x.size();
            if (n < 6) continue;
            std::vector<double> env(n, 0.0);
            double pk = 0.0;
            for (size_t i = 0; i < n; ++i) {
                for (size_t j = i >= 2 ? i - 2 : 0; j <= std::min(n - 1, i + 2); ++j)
                    env[i] = std::max(env[i], std::abs(x[j]));
                pk = std::max(pk, env[i]);
            }
            size_t cur = 0, rs = 0;
            auto close = [&](size_t endpos) {
                const size_t len = endpos - rs;
                if (strict) {
                    if (len < 9 || len > 18) return;     // intact packets only
                    if (rs == 0 || endpos == n) return;  // unclipped by splice or edge
                    double run_peak = 0.0;
                    for (size_t j = rs; j < endpos; ++j) run_peak = std::max(run_peak, env[j]);
                    if (run_peak < 0.55 * pk) return;    // taper-attenuated packet
                } else if (len < 5) {
                    return;
                }
                double mass = 0.0, moment = 0.0;
                for (size_t j = rs; j < endpos; ++j) {
                    mass += x[j] * x[j];
                    moment += x[j] * x[j] * static_cast<double>(j - rs);
                }
                if (mass <= 0.0) return;
                const double com = moment / mass / static_cast<double>(len - 1);
                if (strict && std::abs(0.5 - com) < 0.03) return;  // ambiguous
                orientation += (0.5 - com) * mass;
                ++votes;
            };
            for (size_t i = 0; i < n; ++i) {
                if (env[i] > 0.3 * pk) {
                    if (cur == 0) rs = i;
                    ++cur;
                } else if (cur > 0) {
                    close(i);
                    cur = 0;
                }
            }
            if (cur > 0) close(n);
        }
        return std::pair<double, int>(orientation, votes);
    };
    auto [orientation, votes] = orientation_votes(true);
    if (votes == 0) orientation = orientation_votes(false).first;
    return orientation >= 0.0 ? 0 : 1;
}

int oracle_local_pattern_class(const Epoch& e, int /*n_classes*/) {
    // class = peak-position fraction of the central transient; boundary junk
    // lives in the outer 12% of the epoch, so only the central band counts
    const size_t L = e.length();
    const size_t lo = static_cast<size_t>(0.19 * static_cast<double>(L));
    const size_t hi = L - lo;
    // the blob is positive and towers over the background there
    size_t peak_at = lo;
    for (size_t i = lo; i < hi; ++i)
        if (e.samples[i] > e.samples[peak_at]) peak_at = i;
    const double peak = e.samples[peak_at];
    const double thr = 0.35 * peak;
    size_t a = peak_at, b = peak_at;
    while (a > lo && e.samples[a - 1] > thr) --a;
    while (b + 1 < hi && e.samples[b + 1] > thr) ++b;
    if (b <= a) return 1;
    const double frac = static_cast<double>(peak_at - a) / static_cast<double>(b - a);
    if (frac < 0.36) return 0;
    if (frac > 0.64) return 2;
    return 1;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/bioaug_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

// ---------------------------------------------------------------------------
// synthetic generation
// ---------------------------------------------------------------------------

TEST_CASE("synth_generate is deterministic and class-balanced") {
    SyntheticTaskSpec spec;
    spec.n_subjects = 4;
    spec.epochs_per_subject = 30;
    spec.epoch_len = 64;
    spec.seed = 99;
    const Dataset a = synth_generate(spec);
    const Dataset b = synth_generate(spec);
    REQUIRE(a.epochs.size() == 120);
    for (size_t i = 0; i < a.epochs.size(); ++i) CHECK(a.epochs[i] == b.epochs[i]);

    std::map<int, int> counts;
    for (const Epoch& e : a.epochs) counts[e.label]++;
    REQUIRE(counts.size() == 3);
    int lo = 1 << 30, hi = 0;
    for (const auto& [c, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
}

TEST_CASE("synth_generate rejects invalid specs") {
    SyntheticTaskSpec spec;
    spec.n_classes = 1;
    CHECK_THROWS_AS(synth_generate(spec), ConfigError);
    spec = {};
    spec.noise_level = -1.0;
    CHECK_THROWS_AS(synth_generate(spec), ConfigError);
}

TEST_CASE("noise-free GlobalContext epochs are perfectly separable from oracle features") {
    SyntheticTaskSpec spec;
    spec.task = SynthTask::GlobalContext;
    spec.n_subjects = 5;
    spec.epochs_per_subject = 30;
    spec.epoch_len = 128;
    spec.noise_level = 0.0;
    spec.seed = 12;
    const Dataset ds = synth_generate(spec);
    for (const Epoch& e : ds.epochs)
        CHECK(oracle_global_context_class(e, ds.n_classes) == e.label);
}

TEST_CASE("noise-free LocalPattern epochs are perfectly separable from oracle features") {
    SyntheticTaskSpec spec;
    spec.task = SynthTask::LocalPattern;
    spec.n_subjects = 5;
    spec.epochs_per_subject = 30;
    spec.epoch_len = 128;
    spec.noise_level = 0.0;
    spec.seed = 13;
    const Dataset ds = synth_generate(spec);
    for (const Epoch& e : ds.epochs)
        CHECK(oracle_local_pattern_class(e, ds.n_classes) == e.label);
}

// ---------------------------------------------------------------------------
// band-pass filter
// ---------------------------------------------------------------------------

TEST_CASE("bandpass rejects DC almost exactly") {
    Epoch e;
    e.samples.assign(500, 2.5);
    const Epoch y = bandpass(e, 0.5, 40.0, 100.0);
    double mx = 0.0;
    for (double v : y.samples) mx = std::max(mx, std::abs(v));
    CHECK(mx < 0.025);  // < 1% of the input magnitude
}

TEST_CASE("bandpass preserves a 10 Hz sine within 5% at 100 Hz sampling") {
    const std::vector<double> x = sine(10.0, 100.0, 2000);
    const std::vector<double> y = bandpass_signal(x, 0.5, 40.0, 100.0);
    // measure over the central stretch, away from the ends
    const std::vector<double> mid(y.begin() + 500, y.begin() + 1500);
    const double amp = oracle::dft_amplitude(mid, 10.0, 100.0);
    CHECK(amp > 0.95);
    CHECK(amp < 1.05);
}

TEST_CASE("bandpass attenuates a 60 Hz sine by at least 90%") {
    const std::vector<double> x = sine(60.0, 250.0, 2500);
    const std::vector<double> y = bandpass_signal(x, 0.5, 40.0, 250.0);
    const std::vector<double> mid(y.begin() + 500, y.begin() + 2000);
    const double amp = oracle::dft_amplitude(mid, 60.0, 250.0);
    CHECK(amp < 0.10);
}

TEST_CASE("bandpass validates its band") {
    Epoch e;
    e.samples.assign(100, 0.0);
    CHECK_THROWS_AS(bandpass(e, 0.0, 40.0, 100.0), ConfigError);
    CHECK_THROWS_AS(bandpass(e, 40.0, 0.5, 100.0), ConfigError);
    CHECK_THROWS_AS(bandpass(e, 0.5, 50.0, 100.0), ConfigError);
}

// ---------------------------------------------------------------------------
// z-normalization
// ---------------------------------------------------------------------------

TEST_CASE("z_normalize matches the direct formula on [1,2,3]") {
    Epoch e;
    e.samples = {1, 2, 3};
    const Epoch y = z_normalize(e);
    const double sd = std::sqrt(2.0 / 3.0);  // population std of [1,2,3]
    CHECK(y.samples[0] == doctest::Approx(-1.0 / sd).epsilon(1e-12));
    CHECK(y.samples[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y.samples[2] == doctest::Approx(1.0 / sd).epsilon(1e-12));
    CHECK(std::abs(y.samples[0]) == doctest::Approx(std::sqrt(3.0 / 2.0)).epsilon(1e-12));
}

TEST_CASE("z_normalize output has mean 0 and std 1; idempotent") {
    Epoch e;
    Rng rng(55);
    e.samples.resize(400);
    for (double& v : e.samples) v = 3.0 + 2.0 * rng.next_gauss();
    const Epoch y = z_normalize(e);
    double mu = 0.0;
    for (double v : y.samples) mu += v;
    mu /= 400.0;
    double var = 0.0;
    for (double v : y.samples) var += (v - mu) * (v - mu);
    var /= 400.0;
    CHECK(std::abs(mu) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);

    const Epoch z = z_normalize(y);
    for (size_t i = 0; i < 400; ++i)
        CHECK(z.samples[i] == doctest::Approx(y.samples[i]).epsilon(1e-9));
}

TEST_CASE("z_normalize flags constant input and returns zeros") {
    Epoch e;
    e.samples.assign(10, 4.2);
    bool flag = false;
    const Epoch y = z_normalize(e, &flag);
    CHECK(flag);
    for (double v : y.samples) CHECK(v == 0.0);
}

// ---------------------------------------------------------------------------
// windowing
// ---------------------------------------------------------------------------

TEST_CASE("window splits 10 s at 100 Hz into two 4-second epochs") {
    std::vector<double> rec(1000);
    for (size_t i = 0; i < rec.size(); ++i) rec[i] = static_cast<double>(i);
    const auto epochs = window(rec, 4.0, 100.0);
    REQUIRE(epochs.size() == 2);
    CHECK(epochs[0].samples.size() == 400);
    CHECK(epochs[0].samples.front() == 0.0);
    CHECK(epochs[1].samples.front() == 400.0);
}

TEST_CASE("window keeps every sample on exact multiples") {
    std::vector<double> rec(1200, 1.0);
    const auto epochs = window(rec, 4.0, 100.0);
    REQUIRE(epochs.size() == 3);
    size_t total = 0;
    for (const auto& e : epochs) total += e.samples.size();
    CHECK(total == 1200);
}

TEST_CASE("window rejects too-short recordings") {
    std::vector<double> rec(390, 0.0);  // 3.9 s at 100 Hz
    CHECK_THROWS_AS(window(rec, 4.0, 100.0), DataError);
}

// ---------------------------------------------------------------------------
// preprocessing idempotence
// ---------------------------------------------------------------------------

TEST_CASE("preprocessing an already-filtered recording changes interior epochs < 1e-6 RMS") {
    const double fs = 100.0;
    const size_t n = 12000;  // 120 s
    std::vector<double> x(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        x[i] = std::sin(2 * kPi * 3.0 * t) + 0.7 * std::sin(2 * kPi * 5.0 * t + 1.0) +
               0.5 * std::sin(2 * kPi * 7.0 * t + 2.0);
    }
    const std::vector<double> once = bandpass_signal(x, 0.5, 40.0, fs);
    const std::vector<double> twice = bandpass_signal(once, 0.5, 40.0, fs);
    auto e1 = window(once, 4.0, fs);
    auto e2 = window(twice, 4.0, fs);
    REQUIRE(e1.size() == e2.size());
    // the 0.5 Hz high-pass has a multi-second settling tail: compare epochs
    // clear of the recording boundaries
    for (size_t i = 3; i + 3 < e1.size(); ++i) {
        const Epoch a = z_normalize(e1[i]);
        const Epoch b = z_normalize(e2[i]);
        double rms = 0.0;
        for (size_t j = 0; j < a.samples.size(); ++j) {
            const double d = a.samples[j] - b.samples[j];
            rms += d * d;
        }
        rms = std::sqrt(rms / static_cast<double>(a.samples.size()));
        CHECK(rms < 1e-6);
    }
}

// ---------------------------------------------------------------------------
// splits
// ---------------------------------------------------------------------------

namespace {

Dataset tiny_dataset(int n_subjects, int epochs_per_subject, int n_classes = 3) {
    Dataset ds;
    ds.n_classes = n_classes;
    ds.sample_rate = 10.0;
    ds.epoch_len = 8;
    size_t idx = 0;
    for (int s = 0; s < n_subjects; ++s)
        for (int e = 0; e < epochs_per_subject; ++e, ++idx) {
            Epoch ep;
            ep.subject_id = static_cast<uint32_t>(s);
            ep.label = static_cast<int>(idx % static_cast<size_t>(n_classes));
            ep.samples.assign(8, static_cast<double>(idx));
            ds.epochs.push_back(std::move(ep));
        }
    return ds;
}

}  // namespace

TEST_CASE("split: 10 subjects produce an 8/2 subject-independent partition") {
    Dataset ds = tiny_dataset(10, 30);
    split(ds, 0.8, 0.1, 7);
    std::set<uint32_t> train_subj, test_subj;
    for (size_t i = 0; i < ds.epochs.size(); ++i) {
        if (ds.split_tag[i] == SplitTag::Train)
            train_subj.insert(ds.epochs[i].subject_id);
        else
            test_subj.insert(ds.epochs[i].subject_id);
    }
    CHECK(train_subj.size() == 8);
    CHECK(test_subj.size() == 2);
    for (uint32_t s : train_subj) CHECK(test_subj.count(s) == 0);
}

TEST_CASE("split: no subject straddles the partition for any seed") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Dataset ds = tiny_dataset(7, 12);
        split(ds, 0.8, 0.1, seed);
        std::map<uint32_t, std::set<SplitTag>> tags;
        for (size_t i = 0; i < ds.epochs.size(); ++i)
            tags[ds.epochs[i].subject_id].insert(ds.split_tag[i]);
        for (const auto& [s, t] : tags) CHECK(t.size() == 1);
    }
}

TEST_CASE("split: labeled fraction is stratified within one epoch of 10%") {
    Dataset ds = tiny_dataset(10, 60);
    split(ds, 0.8, 0.1, 3);
    std::map<int, int> train_per_class, labeled_per_class, ref_per_class;
    for (size_t i = 0; i < ds.epochs.size(); ++i) {
        if (ds.split_tag[i] != SplitTag::Train) continue;
        train_per_class[ds.epochs[i].label]++;
        if (ds.labeled[i]) labeled_per_class[ds.epochs[i].label]++;
        if (ds.reference[i]) ref_per_class[ds.epochs[i].label]++;
    }
    for (const auto& [c, n] : train_per_class) {
        const double target = 0.1 * n;
        CHECK(std::abs(labeled_per_class[c] - target) <= 1.0);
        CHECK(ref_per_class[c] >= 1);      // every class present in the reference bank
        CHECK(ref_per_class[c] <= labeled_per_class[c]);
    }
}

TEST_CASE("split: reference epochs are labeled epochs") {
    Dataset ds = tiny_dataset(6, 40);
    split(ds, 0.8, 0.1, 11);
    for (size_t i = 0; i < ds.epochs.size(); ++i)
        if (ds.reference[i]) CHECK(ds.labeled[i] == 1);
}

TEST_CASE("split: deterministic per seed, sensitive to seed") {
    Dataset a = tiny_dataset(9, 20), b = tiny_dataset(9, 20), c = tiny_dataset(9, 20);
    split(a, 0.8, 0.1, 5);
    split(b, 0.8, 0.1, 5);
    split(c, 0.8, 0.1, 6);
    CHECK(a.split_tag == b.split_tag);
    CHECK(a.labeled == b.labeled);
    CHECK(a.reference == b.reference);
    CHECK((a.split_tag != c.split_tag || a.labeled != c.labeled));
}

TEST_CASE("split rejects single-subject datasets") {
    Dataset ds = tiny_dataset(1, 30);
    CHECK_THROWS_AS(split(ds, 0.8, 0.1, 0), DataError);
}

// ---------------------------------------------------------------------------
// dataset files
// ---------------------------------------------------------------------------

TEST_CASE("dataset save/load round trip is exact") {
    TempFile f("ds_roundtrip.bads");
    SyntheticTaskSpec spec;
    spec.n_subjects = 3;
    spec.epochs_per_subject = 10;
    spec.epoch_len = 32;
    spec.seed = 21;
    const Dataset ds = synth_generate(spec);
    save_dataset(f.path, ds);
    const Dataset back = load_dataset(f.path);
    CHECK(back.n_classes == ds.n_classes);
    CHECK(back.sample_rate == ds.sample_rate);
    CHECK(back.epoch_len == ds.epoch_len);
    REQUIRE(back.epochs.size() == ds.epochs.size());
    for (size_t i = 0; i < ds.epochs.size(); ++i) CHECK(back.epochs[i] == ds.epochs[i]);

    // hidden labels survive the trip
    Dataset hidden = ds;
    for (Epoch& e : hidden.epochs) e.label = -1;
    save_dataset(f.path, hidden);
    const Dataset back2 = load_dataset(f.path);
    for (const Epoch& e : back2.epochs) CHECK(e.label == -1);
}

TEST_CASE("dataset file: wrong magic is an unsupported-format error") {
    TempFile f("ds_magic.bads");
    std::ofstream(f.path, std::ios::binary) << "WXYZ-not-a-dataset-file";
    try {
        load_dataset(f.path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("unsupported format") != std::string::npos);
    }
}

TEST_CASE("dataset file: truncation is a parse error with byte offset, not a crash") {
    TempFile full("ds_full.bads"), cut("ds_cut.bads");
    SyntheticTaskSpec spec;
    spec.n_subjects = 2;
    spec.epochs_per_subject = 4;
    spec.epoch_len = 16;
    save_dataset(full.path, synth_generate(spec));
    std::ifstream in(full.path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(cut.path, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    try {
        load_dataset(cut.path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}
