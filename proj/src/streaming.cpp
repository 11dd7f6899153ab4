#include "repcoach/streaming.hpp"

#include "repcoach/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

namespace repcoach {

// --- WindowBuffer ----------------------------------------------------------------------------

WindowBuffer::WindowBuffer(const WindowingParams& params) : params_(params) { params_.validate(); }

Index WindowBuffer::push_samples(std::span<const Channels6> samples) {
    Index completed = 0;
    {
        std::lock_guard lock(mutex_);
        if (closed_) throw StateError("window buffer is closed");
        for (const auto& s : samples) {
            recent_.push_back(s.cast<float>());
            if (static_cast<Index>(recent_.size()) > params_.window) recent_.pop_front();
            ++samples_;
            if (samples_ < params_.window || (samples_ - params_.window) % params_.infer_stride != 0) continue;
            WindowData w(6, params_.window);
            for (Index j = 0; j < params_.window; ++j) w.col(j) = recent_[static_cast<std::size_t>(j)];
            windows_.push_back(std::move(w));
            if (static_cast<Index>(windows_.size()) > params_.max_windows) windows_.pop_front();
            ++newest_;
            ++completed;
        }
    }
    if (completed > 0) cv_.notify_all();
    return completed;
}

void WindowBuffer::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool WindowBuffer::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

Index WindowBuffer::newest() const {
    std::lock_guard lock(mutex_);
    return newest_;
}

std::size_t WindowBuffer::size() const {
    std::lock_guard lock(mutex_);
    return windows_.size();
}

Index WindowBuffer::samples_seen() const {
    std::lock_guard lock(mutex_);
    return samples_;
}

std::optional<WindowData> WindowBuffer::window(Index index) const {
    std::lock_guard lock(mutex_);
    const Index oldest = newest_ - static_cast<Index>(windows_.size()) + 1;
    if (index < oldest || index > newest_) return std::nullopt;
    return windows_[static_cast<std::size_t>(index - oldest)];
}

std::vector<WindowData> WindowBuffer::windows() const {
    std::lock_guard lock(mutex_);
    return {windows_.begin(), windows_.end()};
}

Index WindowBuffer::wait_newer(Index after) const {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return newest_ > after || closed_; });
    return newest_;
}

// --- StreamingEngine -------------------------------------------------------------------------

StreamingEngine::StreamingEngine(const ClassificationModel<float>& model, const WindowBuffer& buffer)
    : model_(model), buffer_(buffer) {}

PredictionEvent StreamingEngine::tick_infer() {
    if (buffer_.newest() < 0) throw StateError("tick before the first complete window");
    auto events = poll();
    if (events.empty()) throw StateError("no new window since the last tick");
    return events.back();
}

std::vector<PredictionEvent> StreamingEngine::poll() {
    std::vector<PredictionEvent> events;
    const Index newest = buffer_.newest();
    while (next_window_ <= newest) events.push_back(run_tick(next_window_));
    return events;
}

PredictionEvent StreamingEngine::run_tick(Index k) {
    const auto& p = buffer_.params();
    const auto window = buffer_.window(k);
    if (!window) throw StateError("window " + std::to_string(k) + " was evicted before its tick");

    const auto begin = std::chrono::steady_clock::now();
    const auto frozen = model_.frozen_features(*window);
    projected_.push_back(model_.project(*window, frozen));
    if (static_cast<Index>(projected_.size()) > p.max_windows) projected_.pop_front();
    const std::vector<nn::Matrix<float>> recent(projected_.begin(), projected_.end());
    const auto conf = model_.predict_projected(recent);
    const auto end = std::chrono::steady_clock::now();

    PredictionEvent e;
    e.tick = k;
    e.wall_time = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    const Index start = k * p.infer_stride;
    e.sample_index = start + p.window;
    e.stream_time = static_cast<double>(e.sample_index) / kSampleRate;
    e.windows_used = static_cast<int>(recent.size());
    e.confidence = conf.back();
    e.flag = e.confidence >= 0.5;
    for (Index m : frozen.markers) {
        const Index absolute = start + m;
        if (absolute > last_marker_ + kMarkerRefractory) {
            e.new_markers.push_back(absolute);
            last_marker_ = absolute;
        }
    }
    e.latency_ms = std::chrono::duration<double, std::milli>(end - begin).count();
    ++next_window_;
    return e;
}

// --- LivePipeline ----------------------------------------------------------------------------

LivePipeline::LivePipeline(const ClassificationModel<float>& model, const LiveOptions& options,
                           const WindowingParams& params)
    : options_(options), smoother_(options.smooth_width), buffer_(params), engine_(model, buffer_) {
    if (options.transport_batch < 1) throw ValidationError("transport batch must be at least 1");
}

std::vector<PredictionEvent> LivePipeline::push(const RawSample& sample) {
    RawSample s = sample;
    if (options_.remap_watch_axes) s.values = remap_watch_axes(s.values);
    std::vector<Channels6> grid;
    resampler_.push(s, grid);
    return feed(grid, false);
}

std::vector<PredictionEvent> LivePipeline::finish() {
    std::vector<Channels6> grid;
    resampler_.finish(grid);
    auto events = feed(grid, true);
    buffer_.close();
    return events;
}

std::vector<PredictionEvent> LivePipeline::feed(std::vector<Channels6>& grid, bool flush) {
    for (const auto& g : grid) held_.push_back(smoother_.push(g));
    preprocessed_ += static_cast<Index>(grid.size());
    const auto& p = buffer_.params();
    auto windows_at = [&](Index n) { return n < p.window ? Index{0} : (n - p.window) / p.infer_stride + 1; };
    const Index pushed = buffer_.samples_seen();
    const Index pending = windows_at(pushed + static_cast<Index>(held_.size())) - windows_at(pushed);
    if (held_.empty() || (!flush && pending < options_.transport_batch)) return {};
    buffer_.push_samples(held_);
    held_.clear();
    return engine_.poll();
}

std::vector<PredictionEvent> replay_session(const Session& session, const ClassificationModel<float>& model,
                                            const LiveOptions& options) {
    LivePipeline pipeline(model, options);
    std::vector<PredictionEvent> events;
    for (const auto& s : session.samples) {
        auto e = pipeline.push(s);
        events.insert(events.end(), e.begin(), e.end());
    }
    auto e = pipeline.finish();
    events.insert(events.end(), e.begin(), e.end());
    return events;
}

// --- latency ---------------------------------------------------------------------------------

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::vector<LatencyRow> sweep(const ClassificationModel<float>& model, const std::vector<WindowData>& windows,
                              const BenchOptions& options) {
    std::vector<LatencyRow> rows;
    for (int n = 1; n <= options.max_windows; ++n) {
        const std::span<const WindowData> input(windows.data(), static_cast<std::size_t>(n));
        std::vector<double> times;
        for (int r = 0; r < options.warmup + options.repetitions; ++r) {
            const auto begin = std::chrono::steady_clock::now();
            const auto conf = model.forward(input);
            const auto end = std::chrono::steady_clock::now();
            if (conf.size() != static_cast<std::size_t>(n)) throw StateError("classifier returned a short sequence");
            if (r >= options.warmup) times.push_back(std::chrono::duration<double, std::milli>(end - begin).count());
        }
        LatencyRow row;
        row.windows = n;
        row.mean_ms = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
        row.min_ms = *std::min_element(times.begin(), times.end());
        row.max_ms = *std::max_element(times.begin(), times.end());
        rows.push_back(row);
    }
    return rows;
}

double overall_mean(const std::vector<LatencyRow>& rows) {
    double sum = 0.0;
    for (const auto& r : rows) sum += r.mean_ms;
    return sum / static_cast<double>(rows.size());
}

}  // namespace

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman needs two equal series of length >= 2");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

LatencyReport bench_latency(const ClassificationModel<float>& model, const BenchOptions& options) {
    if (options.repetitions < 1) throw ValidationError("repetitions must be at least 1");
    if (options.warmup < 0) throw ValidationError("warm-up count must be non-negative");
    if (options.max_windows < 2 || options.max_windows > 32) throw ValidationError("max_windows must be in 2..32");
    Rng rng(options.seed);
    std::vector<WindowData> windows(static_cast<std::size_t>(options.max_windows), WindowData(6, kWindow));
    for (auto& w : windows) {
        for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.normal());
    }

    LatencyReport report;
    report.repetitions = options.repetitions;
    report.warmup = options.warmup;
    report.rows = sweep(model, windows, options);
    report.overall_mean_ms = overall_mean(report.rows);
    report.mean_at_max_ms = report.rows.back().mean_ms;
    std::vector<double> counts, means;
    for (const auto& r : report.rows) {
        counts.push_back(r.windows);
        means.push_back(r.mean_ms);
    }
    report.spearman = spearman_correlation(counts, means);
    report.second_run_mean_ms = overall_mean(sweep(model, windows, options));
    report.run_ratio = std::max(report.overall_mean_ms, report.second_run_mean_ms) /
                       std::min(report.overall_mean_ms, report.second_run_mean_ms);
    return report;
}

void write_latency_table(const LatencyReport& r, std::ostream& out) {
    out << std::fixed << std::setprecision(3);
    out << "window_count mean_ms min_ms max_ms\n";
    for (const auto& row : r.rows) {
        out << row.windows << ' ' << row.mean_ms << ' ' << row.min_ms << ' ' << row.max_ms << '\n';
    }
    out << "# overall_mean_ms=" << r.overall_mean_ms << " mean_at_" << r.rows.size() << "_ms=" << r.mean_at_max_ms
        << " spearman=" << r.spearman << " repetitions=" << r.repetitions << " warmup=" << r.warmup
        << " second_run_mean_ms=" << r.second_run_mean_ms << " run_ratio=" << r.run_ratio << '\n';
}

void write_latency_json(const LatencyReport& r, std::ostream& out) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"window_count", row.windows}, {"mean_ms", row.mean_ms}, {"min_ms", row.min_ms},
                        {"max_ms", row.max_ms}});
    }
    nlohmann::json j = {{"rows", rows},
                        {"repetitions", r.repetitions},
                        {"warmup", r.warmup},
                        {"overall_mean_ms", r.overall_mean_ms},
                        {"mean_at_max_ms", r.mean_at_max_ms},
                        {"spearman", r.spearman},
                        {"second_run_mean_ms", r.second_run_mean_ms},
                        {"run_ratio", r.run_ratio}};
    out << j.dump(2) << '\n';
}

}  // namespace repcoach
