#pragma once

#include "repcoach/config_file.hpp"
#include "repcoach/session_io.hpp"
#include "repcoach/signal.hpp"

#include <cstdint>
#include <vector>

namespace repcoach {

/// Parameters of one synthetic preacher-curl set taken to failure.
struct SyntheticProfile {
    int reps = 10;
    double rep_duration = 2.2;      // lift + lower of rep 1, seconds
    double slowdown = 0.06;         // rep i lasts rep_duration * (1 + slowdown * (i - 1))
    double bottom_pause = 0.5;      // rest at the bottom after rep 1, seconds
    double pause_growth = 0.08;     // pause grows like the rep duration
    double amplitude = 1.0;         // range-of-motion scale
    double amplitude_decay = 0.02;  // per-rep fractional loss of range of motion
    double tremor = 1.1;            // tremor amplitude reached at the final rep
    double jitter_ms = 2.0;         // std of sample-time jitter around the 100 Hz clock
    double lead_in = 1.5;           // idle seconds before the first rep
    double tail = 1.5;              // idle seconds after the last rep
    std::uint64_t seed = 0;

    void validate() const;
    static SyntheticProfile from_config(const KeyValueConfig& cfg);
    KeyValueConfig to_config() const;
};

struct SyntheticSession {
    Session session;
    std::vector<double> rep_end_times;  // equal to session.markers
    std::vector<int> rep_rir;           // RiR of each rep, N - i
};

/// Deterministic in the profile (including seed). Markers fall exactly on the 100 Hz grid anchored
/// at the first sample (t = 0), so resampling maps them to integral indices.
SyntheticSession generate_session(const SyntheticProfile& profile);

/// RiR at every grid point of `series` according to the generator's own rep schedule.
std::vector<int> ground_truth_rir(const SyntheticSession& synth, const UniformSeries& series);

/// Randomized profiles for a corpus of `count` sets (8 to 12 reps each), derived from one seed.
std::vector<SyntheticProfile> corpus_profiles(int count, std::uint64_t seed);

}  // namespace repcoach
