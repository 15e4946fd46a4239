#include "bioaug/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "bioaug/errors.hpp"

namespace bioaug {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// ---------------------------------------------------------------------------
// Butterworth biquads + zero-phase filtering
// ---------------------------------------------------------------------------

struct Biquad {
    double b0, b1, b2, a1, a2;  // a0 normalized to 1
};

// 4th-order Butterworth = cascade of two sections with these Q values.
constexpr double kButterQ4[2] = {0.54119610014619698, 1.3065629648763765};

Biquad lowpass_biquad(double f, double fs, double q) {
    const double w0 = kTwoPi * f / fs;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    return {(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0,
            -2.0 * cw / a0, (1.0 - alpha) / a0};
}

Biquad highpass_biquad(double f, double fs, double q) {
    const double w0 = kTwoPi * f / fs;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    return {(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0,
            -2.0 * cw / a0, (1.0 - alpha) / a0};
}

// Steady-state DF2T state for unit DC input; scaled by the first sample this
// makes a constant input produce its constant steady response with no
// transient.
void steady_state_zi(const Biquad& s, double x0, double& s1, double& s2) {
    const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    s1 = (g - s.b0) * x0;
    s2 = (s.b2 - s.a2 * g) * x0;
}

void run_section(const Biquad& s, std::vector<double>& x) {
    double s1, s2;
    steady_state_zi(s, x.empty() ? 0.0 : x[0], s1, s2);
    for (double& v : x) {
        const double in = v;
        const double y = s.b0 * in + s1;
        s1 = s.b1 * in - s.a1 * y + s2;
        s2 = s.b2 * in - s.a2 * y;
        v = y;
    }
}

std::vector<double> filtfilt(const std::vector<Biquad>& sections, const std::vector<double>& x,
                             size_t pad_hint) {
    const size_t L = x.size();
    if (L < 2) return x;
    const size_t pad = std::min(L - 1, std::max<size_t>(27, pad_hint));
    std::vector<double> ext;
    ext.reserve(L + 2 * pad);
    for (size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[L - 1] - x[L - 1 - i]);

    for (const Biquad& s : sections) run_section(s, ext);
    std::reverse(ext.begin(), ext.end());
    for (const Biquad& s : sections) run_section(s, ext);
    std::reverse(ext.begin(), ext.end());

    return {ext.begin() + static_cast<long>(pad), ext.begin() + static_cast<long>(pad + L)};
}

// ---------------------------------------------------------------------------
// synthetic tasks
// ---------------------------------------------------------------------------

struct SubjectNuisance {
    double gain;
    double drift_phase;
    double drift_rate;
    double phase_base;
};

SubjectNuisance subject_nuisance(uint64_t seed, int subject) {
    Rng rng(derive_seed(seed, 0x5u, static_cast<uint64_t>(subject)));
    return {0.75 + 0.5 * rng.next_double(), rng.next_double(), 0.5 + rng.next_double(),
            rng.next_double()};
}

// One oscillation packet with a one-sided DC pedestal. The pedestal puts a
// coarse orientation mark on the packet: forward packets carry their mass up
// front, reversed ones at the back. The carrier period scales with the
// packet width, so packets of different widths are exact time-rescales of
// each other; the period is incommensurate with the sample grid so no phase
// can null a whole packet.
void add_packet(std::vector<double>& s, size_t start, size_t width, double amp,
                double carrier_phase, bool reversed, double carrier_period) {
    for (size_t j = 0; j < width && start + j < s.size(); ++j) {
        double tau = static_cast<double>(j) / static_cast<double>(width);
        if (reversed) tau = 1.0 - tau;
        const double env = tau < 0.3 ? tau / 0.3 : std::exp(-2.5 * (tau - 0.3));
        const double pedestal = (1.0 - tau) * (1.0 - tau);
        // carrier accelerates across the packet: mirroring reverses the chirp
        const double cyc = tau * static_cast<double>(width) / carrier_period * (1.0 + 0.30 * tau);
        const double osc = std::sin(kTwoPi * ((reversed ? -cyc : cyc) + carrier_phase));
        s[start + j] += amp * (0.8 * env * osc + 0.9 * pedestal);
    }
}

// Triangular bump with an adjustable peak position; no carrier, so a uniform
// zoom of a bump is just another bump with the same peak fraction.
void add_bump(std::vector<double>& s, size_t start, size_t width, double amp,
              double peak_frac = 0.3) {
    for (size_t j = 0; j < width && start + j < s.size(); ++j) {
        const double tau = static_cast<double>(j) / static_cast<double>(width);
        const double env =
            tau < peak_frac ? tau / peak_frac : (1.0 - tau) / (1.0 - peak_frac);
        s[start + j] += amp * env;
    }
}

// Oscillation packets spread across the whole epoch; the class is the
// (width, orientation) pattern of the packets. Classes are near-scaled
// copies with equal active mass, so any time-rescale (crop's uniform zoom,
// warp's local speeds) slides one class toward another, reversal swaps the
// orientation-coded classes, and local zeroing leaves the surviving packets
// readable. Roughly half the epochs carry a flat "electrode pop-out" span,
// so zeroed intervals are part of the data distribution.
void generate_global_context(std::vector<double>& s, int cls, int n_classes,
                             const SubjectNuisance& nu, Rng& rng, double noise_level) {
    const size_t L = s.size();
    for (size_t t = 0; t < L; ++t) {
        const double u = static_cast<double>(t) / static_cast<double>(L);
        const double v = 0.25 * std::sin(kTwoPi * (nu.drift_rate * u + nu.drift_phase));
        s[t] = nu.gain * v + noise_level * rng.next_gauss();
    }
    // class 0: standard forward packets; class 1: standard reversed packets;
    // class 2: wide forward packets at nearly half the count (equal active
    // mass). The carrier period scales with the width, so classes are
    // near-scaled copies: a 2x zoom slides the standard classes onto the
    // wide one, reversal swaps the two standard classes.
    const bool wide = cls % 3 == 2;
    const bool reversed = cls % 3 == 1;
    (void)n_classes;
    const size_t n_packets = wide ? 3 : 5;
    const size_t slot = L / n_packets;
    const size_t width = std::min<size_t>(slot > 2 ? slot - 2 : 1, wide ? 24 : 12);
    const double period = 4.9 * static_cast<double>(width) / 12.0;
    const double carrier_phase = rng.next_double();
    for (size_t k = 0; k < n_packets; ++k) {
        // keep a minimum inter-packet gap so packets never touch
        const size_t play = slot > width + 7 ? slot - width - 7 : 0;
        const size_t jitter = play > 0 ? rng.next_below(play + 1) : 0;
        add_packet(s, k * slot + jitter, width, 1.6 * nu.gain, carrier_phase, reversed, period);
    }
}

// Flat-span artifacts, applied after normalization so a span matches a
// masked interval exactly. Epochs carry zero, one, or two spans, so adding
// one more (as masking does) stays inside the data distribution, while
// splitting a span into ragged fragments (as a permutation does) does not.
void maybe_add_artifact(std::vector<double>& s, Rng& rng) {
    const double u = rng.next_double();
    const int n_spans = u < 0.2 ? 0 : (u < 0.65 ? 1 : 2);
    const size_t L = s.size();
    for (int k = 0; k < n_spans; ++k) {
        const size_t span = static_cast<size_t>(
            std::llround((0.08 + 0.12 * rng.next_double()) * static_cast<double>(L)));
        if (span == 0 || span >= L) continue;
        const size_t start = rng.next_below(L - span + 1);
        std::fill(s.begin() + static_cast<long>(start),
                  s.begin() + static_cast<long>(start + span), 0.0);
    }
}

// One short transient block at a random centrally-biased position over a
// quiet background; the class is the BLOB COUNT inside the block, drawn at a
// random time scale so a uniform zoom stays in-distribution. The outer edges
// of every epoch carry loud boundary clutter (windowing junk): a crop that
// zooms into the middle escapes it, every other view keeps it.
void generate_local_pattern(std::vector<double>& s, int cls, const SubjectNuisance& nu, Rng& rng,
                            double noise_level) {
    const size_t L = s.size();
    for (size_t t = 0; t < L; ++t) {
        const double u = static_cast<double>(t) / static_cast<double>(L);
        const double v = 0.15 * std::sin(kTwoPi * (nu.drift_rate * u + nu.drift_phase));
        s[t] = nu.gain * v + noise_level * rng.next_gauss();
    }
    // boundary clutter: dense short blobs of random sign in the outer 12%
    const size_t edge = static_cast<size_t>(0.14 * static_cast<double>(L));
    auto add_junk = [&](size_t from, size_t to) {
        size_t pos = from;
        while (pos + 4 < to) {
            const size_t w = 3 + rng.next_below(3);
            const double a = (rng.next_double() < 0.5 ? -1.0 : 1.0) * (3.0 + 1.0 * rng.next_double());
            add_bump(s, pos, w, a * nu.gain);
            pos += w + 1 + rng.next_below(2);
        }
    };
    add_junk(0, edge);
    add_junk(L - edge, L);

    // one triangular transient; the class is the peak-position fraction, a
    // dimensionless shape that survives any uniform zoom. Widths span a
    // continuum so rescaled blobs stay near the data manifold.
    const double peak3[3] = {0.2, 0.5, 0.8};
    const double peak_frac = peak3[cls % 3];
    const size_t width = 12 + rng.next_below(17);  // 12..28
    const size_t lo = static_cast<size_t>(0.24 * static_cast<double>(L));
    const size_t hi = L > width + 2 * lo ? L - width - 2 * lo : 0;
    const size_t start = lo + (hi > 0 ? rng.next_below(hi + 1) : 0);
    add_bump(s, start, width, 2.8 * nu.gain, peak_frac);
}

}  // namespace

const char* synth_task_name(SynthTask t) {
    return t == SynthTask::GlobalContext ? "GlobalContext" : "LocalPattern";
}

SynthTask synth_task_from_name(const std::string& name) {
    if (name == "GlobalContext") return SynthTask::GlobalContext;
    if (name == "LocalPattern") return SynthTask::LocalPattern;
    throw ConfigError("unknown synthetic task: " + name);
}

Dataset synth_generate(const SyntheticTaskSpec& spec) {
    if (spec.n_subjects < 1 || spec.epochs_per_subject < 1 || spec.epoch_len < 8 ||
        spec.n_classes < 2 || spec.noise_level < 0.0 || spec.sample_rate <= 0.0)
        throw ConfigError("synth_generate: invalid task spec");
    Dataset ds;
    ds.n_classes = spec.n_classes;
    ds.sample_rate = spec.sample_rate;
    ds.epoch_len = spec.epoch_len;
    ds.epochs.reserve(static_cast<size_t>(spec.n_subjects) *
                      static_cast<size_t>(spec.epochs_per_subject));
    size_t index = 0;
    for (int subj = 0; subj < spec.n_subjects; ++subj) {
        const SubjectNuisance nu = subject_nuisance(spec.seed, subj);
        for (int e = 0; e < spec.epochs_per_subject; ++e, ++index) {
            Epoch ep;
            ep.subject_id = static_cast<uint32_t>(subj);
            ep.label = static_cast<int>(index % static_cast<size_t>(spec.n_classes));
            ep.samples.assign(static_cast<size_t>(spec.epoch_len), 0.0);
            Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(subj) + 1,
                                static_cast<uint64_t>(e) + 1));
            if (spec.task == SynthTask::GlobalContext) {
                generate_global_context(ep.samples, ep.label, spec.n_classes, nu, rng,
                                        spec.noise_level);
                // recording-boundary taper: every epoch fades in and out, so
                // loud samples at the edges never occur naturally
                const size_t taper = std::min<size_t>(10, ep.samples.size() / 4);
                for (size_t t = 0; t < taper; ++t) {
                    const double f =
                        0.1 + 0.9 * static_cast<double>(t) / static_cast<double>(taper);
                    ep.samples[t] *= f;
                    ep.samples[ep.samples.size() - 1 - t] *= f;
                }
                ep = z_normalize(ep);
                maybe_add_artifact(ep.samples, rng);
            } else {
                generate_local_pattern(ep.samples, ep.label, nu, rng, spec.noise_level);
                ep = z_normalize(ep);
            }
            for (double& v : ep.samples) v = round_f32(v);
            ds.epochs.push_back(std::move(ep));
        }
    }
    return ds;
}

std::vector<double> bandpass_signal(const std::vector<double>& x, double low_hz, double high_hz,
                                    double sample_rate) {
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < sample_rate / 2.0))
        throw ConfigError("bandpass: need 0 < low < high < sample_rate/2, got low=" +
                          std::to_string(low_hz) + " high=" + std::to_string(high_hz) +
                          " fs=" + std::to_string(sample_rate));
    std::vector<Biquad> sections;
    for (double q : kButterQ4) sections.push_back(highpass_biquad(low_hz, sample_rate, q));
    for (double q : kButterQ4) sections.push_back(lowpass_biquad(high_hz, sample_rate, q));
    // pad three times the slowest pole time constant (the high-pass corner)
    // so startup transients settle inside the padding
    const double tau = sample_rate / (6.283185307179586 * low_hz * 0.3827);
    return filtfilt(sections, x, static_cast<size_t>(3.0 * tau));
}

Epoch bandpass(const Epoch& x, double low_hz, double high_hz, double sample_rate) {
    Epoch out = x;
    out.samples = bandpass_signal(x.samples, low_hz, high_hz, sample_rate);
    return out;
}

Epoch z_normalize(const Epoch& x, bool* was_constant) {
    Epoch out = x;
    if (was_constant) *was_constant = false;
    const size_t L = x.length();
    if (L == 0) return out;
    double mu = 0.0;
    for (double v : x.samples) mu += v;
    mu /= static_cast<double>(L);
    double var = 0.0;
    for (double v : x.samples) var += (v - mu) * (v - mu);
    var /= static_cast<double>(L);
    const double sd = std::sqrt(var);
    if (sd < 1e-12) {
        std::fill(out.samples.begin(), out.samples.end(), 0.0);
        if (was_constant) *was_constant = true;
        return out;
    }
    for (double& v : out.samples) v = (v - mu) / sd;
    return out;
}

std::vector<Epoch> window(const std::vector<double>& recording, double window_sec,
                          double sample_rate) {
    const long wl = std::llround(window_sec * sample_rate);
    if (wl < 1) throw ConfigError("window: window of " + std::to_string(window_sec) + " s is empty");
    const size_t win = static_cast<size_t>(wl);
    if (recording.size() < win)
        throw DataError("window: recording of " + std::to_string(recording.size()) +
                        " samples shorter than one " + std::to_string(win) + "-sample window");
    std::vector<Epoch> out;
    for (size_t start = 0; start + win <= recording.size(); start += win) {
        Epoch e;
        e.samples.assign(recording.begin() + static_cast<long>(start),
                         recording.begin() + static_cast<long>(start + win));
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<Epoch> preprocess(const std::vector<double>& recording, double low_hz, double high_hz,
                              double sample_rate, double window_sec) {
    std::vector<Epoch> epochs = window(bandpass_signal(recording, low_hz, high_hz, sample_rate),
                                       window_sec, sample_rate);
    for (Epoch& e : epochs) e = z_normalize(e);
    return epochs;
}

void split(Dataset& ds, double train_frac, double labeled_frac, uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0) || !(labeled_frac > 0.0 && labeled_frac <= 1.0))
        throw ConfigError("split: fractions out of range");
    std::vector<uint32_t> subjects;
    for (const Epoch& e : ds.epochs)
        if (std::find(subjects.begin(), subjects.end(), e.subject_id) == subjects.end())
            subjects.push_back(e.subject_id);
    std::sort(subjects.begin(), subjects.end());
    if (subjects.size() < 2)
        throw DataError("split: subject-independent split needs >= 2 subjects, got " +
                        std::to_string(subjects.size()));

    Rng rng(derive_seed(seed, 0xA11u));
    for (size_t i = subjects.size(); i > 1; --i)
        std::swap(subjects[i - 1], subjects[rng.next_below(i)]);
    const size_t n_train = std::clamp<size_t>(
        static_cast<size_t>(std::llround(train_frac * static_cast<double>(subjects.size()))), 1,
        subjects.size() - 1);
    std::vector<uint32_t> train_subjects(subjects.begin(), subjects.begin() + static_cast<long>(n_train));

    ds.split_tag.assign(ds.epochs.size(), SplitTag::Test);
    ds.labeled.assign(ds.epochs.size(), 0);
    ds.reference.assign(ds.epochs.size(), 0);
    for (size_t i = 0; i < ds.epochs.size(); ++i)
        if (std::find(train_subjects.begin(), train_subjects.end(), ds.epochs[i].subject_id) !=
            train_subjects.end())
            ds.split_tag[i] = SplitTag::Train;

    // stratified label visibility on the train split; the first fifth of
    // each class's labeled picks becomes the reward reference
    for (int c = 0; c < ds.n_classes; ++c) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < ds.epochs.size(); ++i)
            if (ds.split_tag[i] == SplitTag::Train && ds.epochs[i].label == c) idx.push_back(i);
        if (idx.empty()) continue;
        Rng crng(derive_seed(seed, 0xB22u, static_cast<uint64_t>(c)));
        for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[crng.next_below(i)]);
        const size_t n_lab = std::min(idx.size(), std::max<size_t>(1, static_cast<size_t>(std::llround(
                                                      labeled_frac * static_cast<double>(idx.size())))));
        const size_t n_ref =
            std::max<size_t>(1, static_cast<size_t>(std::llround(0.2 * static_cast<double>(n_lab))));
        for (size_t i = 0; i < n_lab; ++i) {
            ds.labeled[idx[i]] = 1;
            if (i < n_ref) ds.reference[idx[i]] = 1;
        }
    }
}

// ---------------------------------------------------------------------------
// dataset files
// ---------------------------------------------------------------------------

namespace {

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i16(std::string& out, int16_t v) { put_u16(out, static_cast<uint16_t>(v)); }

void put_f32(std::string& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

struct DsReader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw DataError("dataset parse error at byte " + std::to_string(pos) +
                            ": truncated while reading " + what);
    }
    uint16_t u16(const char* what) {
        need(2, what);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 2;
        return static_cast<uint16_t>(p[0] | (p[1] << 8));
    }
    uint32_t u32(const char* what) {
        need(4, what);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 4;
        return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
               (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    }
    int16_t i16(const char* what) { return static_cast<int16_t>(u16(what)); }
    float f32(const char* what) {
        const uint32_t bits = u32(what);
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
};

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
    std::string out;
    out += "BADS";
    put_u32(out, kDatasetVersion);
    put_f32(out, static_cast<float>(ds.sample_rate));
    put_u32(out, static_cast<uint32_t>(ds.epoch_len));
    put_u16(out, static_cast<uint16_t>(ds.n_classes));
    put_u32(out, static_cast<uint32_t>(ds.epochs.size()));
    for (const Epoch& e : ds.epochs) {
        if (static_cast<int>(e.length()) != ds.epoch_len)
            throw DataError("save_dataset: epoch length " + std::to_string(e.length()) +
                            " != declared " + std::to_string(ds.epoch_len));
        put_u32(out, e.subject_id);
        put_i16(out, static_cast<int16_t>(e.label < 0 ? -1 : e.label));
        for (double v : e.samples) put_f32(out, static_cast<float>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("save_dataset: cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("save_dataset: write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_dataset: cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    DsReader r{buf};
    r.need(4, "magic");
    const std::string magic = buf.substr(0, 4);
    r.pos = 4;
    if (magic != "BADS")
        throw DataError("load_dataset: unsupported format (bad magic at byte 0): " + path);
    const uint32_t version = r.u32("version");
    if (version != kDatasetVersion)
        throw DataError("load_dataset: unsupported version " + std::to_string(version));
    Dataset ds;
    ds.sample_rate = static_cast<double>(r.f32("sample_rate"));
    ds.epoch_len = static_cast<int>(r.u32("epoch_len"));
    ds.n_classes = static_cast<int>(r.u16("n_classes"));
    const uint32_t n = r.u32("n_epochs");
    ds.epochs.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        Epoch e;
        e.subject_id = r.u32("subject_id");
        e.label = static_cast<int>(r.i16("label"));
        e.samples.resize(static_cast<size_t>(ds.epoch_len));
        for (int j = 0; j < ds.epoch_len; ++j)
            e.samples[static_cast<size_t>(j)] = static_cast<double>(r.f32("samples"));
        ds.epochs.push_back(std::move(e));
    }
    if (r.pos != buf.size())
        throw DataError("dataset parse error at byte " + std::to_string(r.pos) +
                        ": trailing bytes after last epoch");
    return ds;
}

}  // namespace bioaug
