#include "repcoach/dataset.hpp"

#include "repcoach/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace repcoach {

void WindowingParams::validate() const {
    if (window <= 0 || train_stride <= 0 || infer_stride <= 0 || max_windows <= 0) {
        throw ValidationError("windowing parameters must be positive");
    }
}

Split split_sessions(int session_count, double fraction, std::uint64_t seed) {
    if (session_count < 2) throw ValidationError("need at least 2 sessions to split");
    if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split fraction must lie in (0, 1)");
    std::vector<int> ids(static_cast<std::size_t>(session_count));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(seed);
    rng.shuffle(ids.begin(), ids.end());
    auto n_train = static_cast<int>(std::floor(fraction * session_count));
    n_train = std::clamp(n_train, 1, session_count - 1);
    Split split;
    split.train.assign(ids.begin(), ids.begin() + n_train);
    split.validation.assign(ids.begin() + n_train, ids.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    return split;
}

std::vector<Index> extract_windows(Index length, Index window, Index stride) {
    if (stride < 1) throw ValidationError("stride must be >= 1");
    if (window < 1) throw ValidationError("window must be >= 1");
    std::vector<Index> starts;
    for (Index s = 0; s + window <= length; s += stride) starts.push_back(s);
    return starts;
}

Labels segmentation_labels(std::span<const Index> marker_indices, Index start, Index window, Index radius) {
    Labels labels(static_cast<std::size_t>(window), 0);
    for (Index m : marker_indices) {
        if (m < start || m >= start + window) continue;
        const Index lo = std::max(start, m - radius);
        const Index hi = std::min(start + window - 1, m + radius);
        for (Index i = lo; i <= hi; ++i) labels[static_cast<std::size_t>(i - start)] = 1;
    }
    return labels;
}

RirTrace rir_per_point(const UniformSeries& series) {
    const auto& markers = series.marker_indices;
    if (markers.empty()) throw ValidationError("RiR needs at least one end-of-rep marker");
    const auto n = static_cast<int>(markers.size());
    RirTrace rir(static_cast<std::size_t>(series.length()), 0);
    int rep = 0;  // 0-based index of the rep the current point belongs to
    for (Index k = 0; k < series.length(); ++k) {
        while (rep < n && k > markers[static_cast<std::size_t>(rep)]) ++rep;
        rir[static_cast<std::size_t>(k)] = rep < n ? n - (rep + 1) : 0;
    }
    return rir;
}

bool near_failure_label(const RirTrace& rir, Index start, Index window) {
    if (start < 0 || start + window > static_cast<Index>(rir.size())) {
        throw ValidationError("window exceeds RiR trace");
    }
    Index count = 0;
    for (Index k = start; k < start + window; ++k) {
        if (rir[static_cast<std::size_t>(k)] <= kNearFailureRir) ++count;
    }
    return 2 * count > window;
}

LabeledWindow make_window(const UniformSeries& series, const RirTrace& rir, Index start, Index window) {
    if (start < 0 || start + window > series.length()) throw ValidationError("window exceeds series");
    LabeledWindow out;
    out.data = series.channels.middleCols(start, window).cast<float>();
    out.seg_labels = segmentation_labels(series.marker_indices, start, window);
    out.near_failure = !rir.empty() && near_failure_label(rir, start, window);
    out.origin.start = start;
    return out;
}

LabeledWindow augment_window_with(const UniformSeries& series, const RirTrace& rir, Index start, double stretch,
                                  double amplitude, Index window) {
    const double last_pos = static_cast<double>(window - 1) * stretch;
    const Index last_needed = start + static_cast<Index>(std::ceil(last_pos));
    if (start < 0 || stretch < 1.0 || last_needed >= series.length()) {
        throw ValidationError("augmentation span exceeds series");
    }
    LabeledWindow out;
    out.origin.start = start;
    out.data.resize(6, window);
    Index qualifying = 0;
    for (Index j = 0; j < window; ++j) {
        const double pos = static_cast<double>(j) * stretch;
        const auto base = static_cast<Index>(std::floor(pos));
        const double frac = pos - static_cast<double>(base);
        const Index src = start + base;
        Channels6 v = series.channels.col(src);
        if (frac > 0.0) v += (series.channels.col(src + 1) - v) * frac;
        out.data.col(j) = (v * amplitude).cast<float>();
        if (!rir.empty()) {
            const auto nearest = start + static_cast<Index>(std::floor(pos + 0.5));
            if (rir[static_cast<std::size_t>(std::min<Index>(nearest, series.length() - 1))] <= kNearFailureRir) {
                ++qualifying;
            }
        }
    }
    out.near_failure = 2 * qualifying > window;

    const auto source_span = static_cast<Index>(std::llround(static_cast<double>(window) * stretch));
    std::vector<Index> mapped;
    for (Index m : series.marker_indices) {
        const Index d = m - start;
        if (d < 0 || d >= source_span) continue;
        const auto c = static_cast<Index>(std::floor(static_cast<double>(d) / stretch + 0.5));
        if (c < window) mapped.push_back(c);
    }
    out.seg_labels = segmentation_labels(mapped, 0, window);
    return out;
}

LabeledWindow augment_window(const UniformSeries& series, const RirTrace& rir, Index start, Rng& rng,
                             const AugmentParams& params, Index window) {
    double stretch = rng.uniform(params.stretch_min, params.stretch_max);
    const double amplitude = rng.uniform(params.amplitude_min, params.amplitude_max);
    const auto needed = static_cast<Index>(std::llround(static_cast<double>(window) * params.stretch_max));
    if (start + needed > series.length()) stretch = 1.0;
    return augment_window_with(series, rir, start, stretch, amplitude, window);
}

}  // namespace repcoach
