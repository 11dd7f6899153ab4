#pragma once

#include "repcoach/session_io.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

namespace repcoach {

inline constexpr double kSampleRate = 100.0;
inline constexpr int kDefaultSmoothWidth = 15;

using Index = std::int64_t;
using ChannelMatrix = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Uniformly sampled 6-channel series at kSampleRate. Column k is the sample at start_t + k/100.
struct UniformSeries {
    double start_t = 0.0;
    ChannelMatrix channels;
    std::vector<Index> marker_indices;

    Index length() const { return channels.cols(); }
    double time_at(Index k) const { return start_t + static_cast<double>(k) / kSampleRate; }
};

/// Incremental linear resampler onto the 100 Hz grid anchored at the first sample time.
/// Samples sharing a timestamp are averaged. Output for grid point k is emitted once a sample at
/// or after its time has been finalized, i.e. with one-sample latency; finish() flushes the tail.
class StreamResampler {
public:
    /// Feeds one raw sample; appends any newly determined grid samples to `out`.
    void push(const RawSample& sample, std::vector<Channels6>& out);
    void finish(std::vector<Channels6>& out);

    bool started() const { return start_.has_value(); }
    double start_time() const { return start_.value_or(0.0); }
    Index emitted() const { return next_k_; }

private:
    void process_knot(double t, const Channels6& v, std::vector<Channels6>& out);

    std::optional<double> start_;
    Index next_k_ = 0;
    // Accumulator for the not-yet-finalized timestamp.
    std::optional<double> pending_t_;
    Channels6 pending_sum_ = Channels6::Zero();
    int pending_count_ = 0;
    // Last finalized knot.
    double prev_t_ = 0.0;
    Channels6 prev_v_ = Channels6::Zero();
    bool finished_ = false;
};

/// Causal trailing moving average over the last `width` samples; partial-prefix mean during warm-up.
class CausalSmoother {
public:
    explicit CausalSmoother(int width = kDefaultSmoothWidth);
    Channels6 push(const Channels6& value);
    int width() const { return width_; }

private:
    int width_;
    std::deque<Channels6> history_;
};

/// Linear interpolation of a session onto the 100 Hz grid; markers snap to the nearest grid index
/// (ties round down). Throws ValidationError with fewer than two distinct timestamps.
UniformSeries resample_uniform(const Session& session);

/// Nearest grid index for a time, ties rounded down, clamped to [0, length).
Index time_to_index(double t, double start_t, Index length);

UniformSeries smooth_moving_average(const UniformSeries& series, int width = kDefaultSmoothWidth);

/// Watch frame to model frame: x' = y, y' = -x, z' = -z for both sensor triples.
Channels6 remap_watch_axes(const Channels6& sample);

/// resample_uniform followed by smooth_moving_average.
UniformSeries preprocess(const Session& session, int width = kDefaultSmoothWidth);

}  // namespace repcoach
