#pragma once

#include "repcoach/rng.hpp"
#include "repcoach/signal.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace repcoach {

inline constexpr Index kWindow = 256;
inline constexpr Index kLabelRadius = 4;  // ±40 ms at 100 Hz
inline constexpr int kNearFailureRir = 2;

struct WindowingParams {
    Index window = kWindow;
    Index train_stride = 2;
    Index infer_stride = 64;
    Index max_windows = 32;

    /// Samples covered by a full sequence of max_windows windows.
    Index span() const { return (max_windows - 1) * infer_stride + window; }
    void validate() const;
};

using WindowData = Eigen::Matrix<float, 6, Eigen::Dynamic>;
using Labels = std::vector<std::uint8_t>;

struct WindowOrigin {
    int session = -1;
    Index start = 0;
};

struct LabeledWindow {
    WindowData data;
    Labels seg_labels;
    bool near_failure = false;
    WindowOrigin origin;
};

/// Per-point repetitions in reserve, aligned with a UniformSeries.
using RirTrace = std::vector<int>;

struct Split {
    std::vector<int> train;
    std::vector<int> validation;
};

/// Whole-session split; |train| = floor(fraction * n), clamped so both sides are non-empty.
Split split_sessions(int session_count, double fraction, std::uint64_t seed);

/// Start indices {0, stride, ...} with start + window <= length.
std::vector<Index> extract_windows(Index length, Index window, Index stride);

/// Binary labels for [start, start + window): ±radius around each marker, clipped to the window.
Labels segmentation_labels(std::span<const Index> marker_indices, Index start, Index window = kWindow,
                           Index radius = kLabelRadius);

/// Rep i (1-based) spans (marker_{i-1}, marker_i] and carries RiR = N - i; points after the last
/// marker get 0. Throws ValidationError when the series has no markers.
RirTrace rir_per_point(const UniformSeries& series);

/// True iff strictly more than half of the window's points have RiR <= 2.
bool near_failure_label(const RirTrace& rir, Index start, Index window = kWindow);

/// Unaugmented labeled window. `rir` may be empty, in which case near_failure is false.
LabeledWindow make_window(const UniformSeries& series, const RirTrace& rir, Index start, Index window = kWindow);

struct AugmentParams {
    double stretch_min = 1.0;
    double stretch_max = 1.5;
    double amplitude_min = 0.6;
    double amplitude_max = 1.4;
};

/// Window built from the source span starting at `start` compressed by `stretch` (output point j
/// reads source position start + j * stretch, linearly interpolated) and scaled by `amplitude`.
/// Markers at source offset d map to output index round(d / stretch).
LabeledWindow augment_window_with(const UniformSeries& series, const RirTrace& rir, Index start, double stretch,
                                  double amplitude, Index window = kWindow);

/// Draws stretch ~ U[stretch_min, stretch_max] and amplitude ~ U[amplitude_min, amplitude_max].
/// Falls back to stretch 1 when the series tail cannot hold round(window * stretch_max) points.
LabeledWindow augment_window(const UniformSeries& series, const RirTrace& rir, Index start, Rng& rng,
                             const AugmentParams& params = {}, Index window = kWindow);

}  // namespace repcoach
