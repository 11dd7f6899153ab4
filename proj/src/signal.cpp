#include "repcoach/signal.hpp"

#include "repcoach/errors.hpp"

#include <cmath>

namespace repcoach {

void StreamResampler::push(const RawSample& sample, std::vector<Channels6>& out) {
    if (finished_) throw StateError("resampler already finished");
    if (!std::isfinite(sample.t) || !sample.values.allFinite()) {
        throw ValidationError("non-finite sample");
    }
    if (pending_t_) {
        if (sample.t < *pending_t_) throw ValidationError("timestamps must be non-decreasing");
        if (sample.t == *pending_t_) {
            pending_sum_ += sample.values;
            ++pending_count_;
            return;
        }
        process_knot(*pending_t_, pending_sum_ / static_cast<double>(pending_count_), out);
    }
    pending_t_ = sample.t;
    pending_sum_ = sample.values;
    pending_count_ = 1;
}

void StreamResampler::finish(std::vector<Channels6>& out) {
    if (finished_) return;
    if (pending_t_) {
        process_knot(*pending_t_, pending_sum_ / static_cast<double>(pending_count_), out);
        pending_t_.reset();
    }
    finished_ = true;
}

void StreamResampler::process_knot(double t, const Channels6& v, std::vector<Channels6>& out) {
    if (!start_) {
        start_ = t;
        prev_t_ = t;
        prev_v_ = v;
        out.push_back(v);
        next_k_ = 1;
        return;
    }
    while (true) {
        const double tk = *start_ + static_cast<double>(next_k_) / kSampleRate;
        if (tk > t) break;
        if (tk == t) {
            out.push_back(v);
        } else {
            const double frac = (tk - prev_t_) / (t - prev_t_);
            out.push_back(prev_v_ + (v - prev_v_) * frac);
        }
        ++next_k_;
    }
    prev_t_ = t;
    prev_v_ = v;
}

CausalSmoother::CausalSmoother(int width) : width_(width) {
    if (width <= 0) throw ValidationError("moving-average width must be positive");
}

Channels6 CausalSmoother::push(const Channels6& value) {
    history_.push_back(value);
    if (static_cast<int>(history_.size()) > width_) history_.pop_front();
    Channels6 sum = Channels6::Zero();
    for (const auto& h : history_) sum += h;
    return sum / static_cast<double>(history_.size());
}

Index time_to_index(double t, double start_t, Index length) {
    const double pos = (t - start_t) * kSampleRate;
    auto k = static_cast<Index>(std::ceil(pos - 0.5));
    if (k < 0) k = 0;
    if (k >= length) k = length - 1;
    return k;
}

UniformSeries resample_uniform(const Session& session) {
    if (session.samples.size() < 2) throw ValidationError("resampling needs at least 2 samples");
    StreamResampler resampler;
    std::vector<Channels6> grid;
    grid.reserve(static_cast<std::size_t>((session.samples.back().t - session.samples.front().t) * kSampleRate) + 2);
    for (const auto& s : session.samples) resampler.push(s, grid);
    resampler.finish(grid);
    if (session.samples.front().t == session.samples.back().t) {
        throw ValidationError("resampling needs at least 2 distinct timestamps");
    }
    UniformSeries series;
    series.start_t = resampler.start_time();
    series.channels.resize(6, static_cast<Index>(grid.size()));
    for (std::size_t k = 0; k < grid.size(); ++k) series.channels.col(static_cast<Index>(k)) = grid[k];
    for (double m : session.markers) {
        const Index k = time_to_index(m, series.start_t, series.length());
        if (series.marker_indices.empty() || k > series.marker_indices.back()) series.marker_indices.push_back(k);
    }
    return series;
}

UniformSeries smooth_moving_average(const UniformSeries& series, int width) {
    if (width <= 0) throw ValidationError("moving-average width must be positive");
    if (series.length() == 0) throw ValidationError("cannot smooth an empty series");
    CausalSmoother smoother(width);
    UniformSeries out;
    out.start_t = series.start_t;
    out.marker_indices = series.marker_indices;
    out.channels.resize(6, series.length());
    for (Index k = 0; k < series.length(); ++k) out.channels.col(k) = smoother.push(series.channels.col(k));
    return out;
}

Channels6 remap_watch_axes(const Channels6& s) {
    Channels6 out;
    out << s[1], -s[0], -s[2], s[4], -s[3], -s[5];
    return out;
}

UniformSeries preprocess(const Session& session, int width) {
    return smooth_moving_average(resample_uniform(session), width);
}

}  // namespace repcoach
