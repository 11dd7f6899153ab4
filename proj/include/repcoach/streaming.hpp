#pragma once

#include "repcoach/dataset.hpp"
#include "repcoach/models.hpp"
#include "repcoach/signal.hpp"

#include <condition_variable>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

namespace repcoach {

/// Ring of the most recent complete windows over a preprocessed sample stream. The first window
/// completes after `window` samples, then one more every `infer_stride` samples; windows beyond
/// `max_windows` are evicted. One producer and one consumer may use it concurrently.
class WindowBuffer {
public:
    explicit WindowBuffer(const WindowingParams& params = {});

    /// Appends preprocessed samples; returns the number of newly completed windows.
    Index push_samples(std::span<const Channels6> samples);
    Index push_sample(const Channels6& sample) { return push_samples(std::span<const Channels6>(&sample, 1)); }

    /// Marks the stream finished; wakes waiting consumers.
    void close();
    bool closed() const;

    /// Index of the newest complete window, or -1.
    Index newest() const;
    /// Windows currently held (≤ max_windows).
    std::size_t size() const;
    Index samples_seen() const;

    /// Copy of window `index` if it is still held.
    std::optional<WindowData> window(Index index) const;
    /// Copies of the held windows, oldest first.
    std::vector<WindowData> windows() const;

    /// Blocks until a window newer than `after` exists or the buffer is closed; returns newest().
    Index wait_newer(Index after) const;

    const WindowingParams& params() const { return params_; }

private:
    WindowingParams params_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::deque<Eigen::Matrix<float, 6, 1>> recent_;  // last `window` samples
    std::deque<WindowData> windows_;
    Index samples_ = 0;
    Index newest_ = -1;
    bool closed_ = false;
};

struct PredictionEvent {
    long tick = 0;
    double wall_time = 0.0;    // seconds since the Unix epoch
    Index sample_index = 0;    // one past the newest sample of the newest window
    double stream_time = 0.0;  // sample_index / 100
    int windows_used = 0;
    double confidence = 0.0;
    bool flag = false;
    std::vector<Index> new_markers;  // absolute sample indices
    double latency_ms = 0.0;
};

/// Minimum spacing between reported rep markers, in samples.
inline constexpr Index kMarkerRefractory = 25;

/// Consumer side of a WindowBuffer: one tick per completed window. Per-window classifier inputs
/// are cached so a tick costs one window's features plus the recurrent pass.
class StreamingEngine {
public:
    StreamingEngine(const ClassificationModel<float>& model, const WindowBuffer& buffer);

    /// Tick for the newest complete window, after catching up on any skipped ones. Throws
    /// StateError when no window is complete.
    PredictionEvent tick_infer();

    /// Ticks for every window completed since the last tick, in order.
    std::vector<PredictionEvent> poll();

    long ticks() const { return next_window_; }

private:
    PredictionEvent run_tick(Index window_index);

    const ClassificationModel<float>& model_;
    const WindowBuffer& buffer_;
    std::deque<nn::Matrix<float>> projected_;  // inputs for windows next_window_-size .. next_window_-1
    long next_window_ = 0;
    Index last_marker_ = -kMarkerRefractory - 1;
};

struct LiveOptions {
    int smooth_width = kDefaultSmoothWidth;
    bool remap_watch_axes = false;
    /// Windows handed to the buffer per transfer; 1 streams every window as it forms.
    int transport_batch = 1;
};

/// Raw samples in, prediction events out: resampler, causal smoother, window buffer and engine.
class LivePipeline {
public:
    LivePipeline(const ClassificationModel<float>& model, const LiveOptions& options = {},
                 const WindowingParams& params = {});

    std::vector<PredictionEvent> push(const RawSample& sample);
    /// Flushes the resampler tail and any held transport batch.
    std::vector<PredictionEvent> finish();

    const WindowBuffer& buffer() const { return buffer_; }
    Index preprocessed_samples() const { return preprocessed_; }

private:
    std::vector<PredictionEvent> feed(std::vector<Channels6>& grid, bool flush);

    LiveOptions options_;
    StreamResampler resampler_;
    CausalSmoother smoother_;
    WindowBuffer buffer_;
    StreamingEngine engine_;
    std::vector<Channels6> held_;
    Index preprocessed_ = 0;
};

/// Replays a recorded session through a LivePipeline.
std::vector<PredictionEvent> replay_session(const Session& session, const ClassificationModel<float>& model,
                                            const LiveOptions& options = {});

struct LatencyRow {
    int windows = 0;
    double mean_ms = 0.0, min_ms = 0.0, max_ms = 0.0;
};

struct LatencyReport {
    std::vector<LatencyRow> rows;  // windows 1..32
    int repetitions = 0;
    int warmup = 0;
    double overall_mean_ms = 0.0;  // mean of per-row means
    double mean_at_max_ms = 0.0;
    double spearman = 0.0;         // window count vs mean latency
    double second_run_mean_ms = 0.0;
    double run_ratio = 0.0;        // larger / smaller overall mean of two consecutive runs
};

struct BenchOptions {
    int repetitions = 10;
    int warmup = 3;
    int max_windows = 32;
    std::uint64_t seed = 0;
};

/// Times the full classifier (segmentation, projection, recurrent pass) on 1..max_windows window
/// inputs. Warm-up inferences are dropped per window count. The sweep runs twice to record the
/// run-to-run ratio.
LatencyReport bench_latency(const ClassificationModel<float>& model, const BenchOptions& options = {});

/// Spearman rank correlation with average ranks for ties.
double spearman_correlation(std::span<const double> x, std::span<const double> y);

/// Plot-ready table: header, one row per window count, then a summary line.
void write_latency_table(const LatencyReport& report, std::ostream& out);
void write_latency_json(const LatencyReport& report, std::ostream& out);

}  // namespace repcoach
