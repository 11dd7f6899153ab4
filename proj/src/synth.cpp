#include "repcoach/synth.hpp"

#include "repcoach/errors.hpp"
#include "repcoach/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace repcoach {

namespace {

constexpr double kGravity = 9.81;
constexpr double kForearm = 0.3;       // metres from elbow to wrist
constexpr double kRangeOfMotion = 1.9;  // radians for amplitude 1
constexpr double kBottomAngle = -0.6;   // forearm angle to horizontal at full extension
constexpr double kLiftFraction = 0.45;
constexpr double kTremorHz = 3.0;

struct Rep {
    double start, top, end;  // lift start, lift end, lowering end
    double amplitude;
    int rir;
};

struct Kinematics {
    double angle = 0.0, velocity = 0.0, acceleration = 0.0;
};

// Raised-cosine rise (or fall) of height h over duration d, evaluated at tau in [0, d].
Kinematics raised_cosine(double h, double d, double tau, bool rising) {
    const double w = std::numbers::pi / d;
    const double s = rising ? 1.0 : -1.0;
    Kinematics k;
    k.angle = rising ? h * (1.0 - std::cos(w * tau)) / 2.0 : h * (1.0 + std::cos(w * tau)) / 2.0;
    k.velocity = s * h * w * std::sin(w * tau) / 2.0;
    k.acceleration = s * h * w * w * std::cos(w * tau) / 2.0;
    return k;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t i) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<Rep> schedule(const SyntheticProfile& p) {
    std::vector<Rep> reps;
    double t = p.lead_in;
    for (int i = 0; i < p.reps; ++i) {
        const double duration = p.rep_duration * (1.0 + p.slowdown * i);
        Rep r;
        r.start = t;
        r.top = t + kLiftFraction * duration;
        const double end = t + duration;
        // Rep ends snap to the 100 Hz grid so markers are exact grid times.
        r.end = std::round(end * kSampleRate) / kSampleRate;
        r.amplitude = kRangeOfMotion * p.amplitude * std::max(0.2, 1.0 - p.amplitude_decay * i);
        r.rir = p.reps - 1 - i;
        reps.push_back(r);
        t = r.end + p.bottom_pause * (1.0 + p.pause_growth * i);
    }
    return reps;
}

}  // namespace

void SyntheticProfile::validate() const {
    if (reps < 1) throw ValidationError("profile needs at least one rep");
    if (!(rep_duration > 0.0) || !(bottom_pause > 0.0) || !(lead_in > 0.0) || !(tail > 0.0)) {
        throw ValidationError("profile durations must be positive");
    }
    if (slowdown < 0.0 || pause_growth < 0.0 || amplitude <= 0.0 || tremor < 0.0 || jitter_ms < 0.0) {
        throw ValidationError("profile factors must be non-negative");
    }
    if (jitter_ms >= 5.0) throw ValidationError("jitter must stay below half a sample period");
}

SyntheticProfile SyntheticProfile::from_config(const KeyValueConfig& cfg) {
    SyntheticProfile p;
    p.reps = static_cast<int>(cfg.get_int("reps", p.reps));
    p.rep_duration = cfg.get_double("rep_duration", p.rep_duration);
    p.slowdown = cfg.get_double("slowdown", p.slowdown);
    p.bottom_pause = cfg.get_double("bottom_pause", p.bottom_pause);
    p.pause_growth = cfg.get_double("pause_growth", p.pause_growth);
    p.amplitude = cfg.get_double("amplitude", p.amplitude);
    p.amplitude_decay = cfg.get_double("amplitude_decay", p.amplitude_decay);
    p.tremor = cfg.get_double("tremor", p.tremor);
    p.jitter_ms = cfg.get_double("jitter_ms", p.jitter_ms);
    p.lead_in = cfg.get_double("lead_in", p.lead_in);
    p.tail = cfg.get_double("tail", p.tail);
    p.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(p.seed)));
    p.validate();
    return p;
}

KeyValueConfig SyntheticProfile::to_config() const {
    KeyValueConfig cfg;
    cfg.set("reps", reps);
    cfg.set("rep_duration", rep_duration);
    cfg.set("slowdown", slowdown);
    cfg.set("bottom_pause", bottom_pause);
    cfg.set("pause_growth", pause_growth);
    cfg.set("amplitude", amplitude);
    cfg.set("amplitude_decay", amplitude_decay);
    cfg.set("tremor", tremor);
    cfg.set("jitter_ms", jitter_ms);
    cfg.set("lead_in", lead_in);
    cfg.set("tail", tail);
    cfg.set("seed", static_cast<long long>(seed));
    return cfg;
}

SyntheticSession generate_session(const SyntheticProfile& profile) {
    profile.validate();
    Rng rng(profile.seed);
    const auto reps = schedule(profile);
    const double end_time = reps.back().end + profile.tail;
    const auto count = static_cast<Index>(std::floor(end_time * kSampleRate)) + 1;
    const double tremor_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double jitter_max = 0.003;

    SyntheticSession out;
    auto& session = out.session;
    session.samples.reserve(static_cast<std::size_t>(count));
    std::size_t rep = 0;
    for (Index n = 0; n < count; ++n) {
        double t = static_cast<double>(n) / kSampleRate;
        if (n > 0 && n + 1 < count) {
            t += std::clamp(rng.normal() * profile.jitter_ms * 1e-3, -jitter_max, jitter_max);
        }
        while (rep + 1 < reps.size() && t > reps[rep].end) ++rep;
        const Rep& r = reps[rep];

        Kinematics k;
        if (t >= r.start && t < r.top) {
            k = raised_cosine(r.amplitude, r.top - r.start, t - r.start, true);
        } else if (t >= r.top && t < r.end) {
            k = raised_cosine(r.amplitude, r.end - r.top, t - r.top, false);
        }
        const double theta = kBottomAngle + k.angle;
        const double omega = k.velocity;

        // Tremor sets in at 60% over the last three reps, grows to full strength and persists
        // through the closing rest.
        const int rir = t > reps.back().end ? 0 : r.rir;
        const double tremor = rir <= 2 ? profile.tremor * (1.0 - 0.2 * rir) : 0.0;
        const double wobble = std::sin(2.0 * std::numbers::pi * kTremorHz * t + tremor_phase);

        RawSample s;
        s.t = t;
        auto& v = s.values;
        v[0] = kGravity * std::sin(theta) + kForearm * k.acceleration;
        v[1] = kGravity * std::cos(theta) - kForearm * omega * omega;
        v[2] = 0.4 + 0.3 * std::sin(theta);
        v[3] = omega;
        v[4] = 0.08 * omega;
        v[5] = -0.12 * omega;
        for (int c = 0; c < 3; ++c) v[c] += 0.05 * rng.normal() + tremor * 0.8 * (0.5 * wobble + 0.5 * rng.normal());
        for (int c = 3; c < 6; ++c) v[c] += 0.02 * rng.normal() + tremor * 0.6 * (0.5 * wobble + 0.5 * rng.normal());
        session.samples.push_back(s);
    }
    for (const auto& r : reps) {
        out.rep_end_times.push_back(r.end);
        out.rep_rir.push_back(r.rir);
    }
    session.markers = out.rep_end_times;
    session.meta["participant"] = "synthetic";
    session.meta["location"] = "desk";
    session.meta["exercise"] = "preacher_curl";
    session.meta["reps"] = std::to_string(profile.reps);
    session.meta["seed"] = std::to_string(profile.seed);
    return out;
}

std::vector<int> ground_truth_rir(const SyntheticSession& synth, const UniformSeries& series) {
    std::vector<int> out(static_cast<std::size_t>(series.length()), 0);
    const auto& ends = synth.rep_end_times;
    for (Index k = 0; k < series.length(); ++k) {
        const double t = series.time_at(k);
        const auto it = std::find_if(ends.begin(), ends.end(), [&](double e) { return e >= t - 1e-9; });
        out[static_cast<std::size_t>(k)] = it == ends.end() ? 0 : synth.rep_rir[static_cast<std::size_t>(it - ends.begin())];
    }
    return out;
}

std::vector<SyntheticProfile> corpus_profiles(int count, std::uint64_t seed) {
    std::vector<SyntheticProfile> out;
    for (int i = 0; i < count; ++i) {
        Rng rng(mix(seed, static_cast<std::uint64_t>(i)));
        SyntheticProfile p;
        p.reps = 8 + static_cast<int>(rng.index(5));
        p.rep_duration = rng.uniform(1.8, 2.6);
        p.slowdown = rng.uniform(0.04, 0.10);
        p.bottom_pause = rng.uniform(0.3, 0.9);
        p.pause_growth = rng.uniform(0.04, 0.12);
        p.amplitude = rng.uniform(0.85, 1.15);
        p.amplitude_decay = rng.uniform(0.01, 0.03);
        p.tremor = rng.uniform(0.8, 1.4);
        p.lead_in = rng.uniform(1.0, 2.5);
        p.tail = rng.uniform(1.0, 2.5);
        p.seed = rng.next();
        out.push_back(p);
    }
    return out;
}

}  // namespace repcoach
