#include "repcoach/eval.hpp"

#include "repcoach/errors.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace repcoach {

BinaryMetrics BinaryMetrics::from_counts(long tp, long fp, long fn, long tn) {
    BinaryMetrics m;
    m.tp = tp;
    m.fp = fp;
    m.fn = fn;
    m.tn = tn;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.accuracy = m.total() > 0 ? static_cast<double>(tp + tn) / static_cast<double>(m.total()) : 0.0;
    return m;
}

BinaryMetrics& BinaryMetrics::operator+=(const BinaryMetrics& o) {
    *this = from_counts(tp + o.tp, fp + o.fp, fn + o.fn, tn + o.tn);
    return *this;
}

BinaryMetrics binary_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
    if (pred.size() != truth.size()) throw ValidationError("metrics: prediction and truth lengths differ");
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, t = truth[i] != 0;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
        tn += !p && !t;
    }
    return BinaryMetrics::from_counts(tp, fp, fn, tn);
}

Eigen::Matrix2d normalize_rows(const BinaryMetrics& c) {
    Eigen::Matrix2d m;
    m << static_cast<double>(c.tp), static_cast<double>(c.fn), static_cast<double>(c.fp), static_cast<double>(c.tn);
    for (int r = 0; r < 2; ++r) {
        const double sum = m.row(r).sum();
        if (sum > 0) m.row(r) /= sum;
    }
    return m;
}

Eigen::Matrix2d confusion_matrix(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
    return normalize_rows(binary_metrics(pred, truth));
}

MergedPrediction merge_overlapping_predictions(Index length, std::span<const Index> starts,
                                               std::span<const std::vector<float>> window_confidences) {
    if (starts.size() != window_confidences.size()) throw ValidationError("merge: one confidence vector per window");
    std::vector<double> sum(static_cast<std::size_t>(length), 0.0);
    MergedPrediction out;
    out.coverage.assign(static_cast<std::size_t>(length), 0);
    for (std::size_t w = 0; w < starts.size(); ++w) {
        const auto& conf = window_confidences[w];
        for (std::size_t j = 0; j < conf.size(); ++j) {
            const Index p = starts[w] + static_cast<Index>(j);
            if (p < 0 || p >= length) throw ValidationError("merge: window exceeds series");
            sum[static_cast<std::size_t>(p)] += conf[j];
            ++out.coverage[static_cast<std::size_t>(p)];
        }
    }
    out.confidence.resize(sum.size());
    for (std::size_t p = 0; p < sum.size(); ++p) {
        out.confidence[p] = out.coverage[p] > 0 ? sum[p] / out.coverage[p] : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

SessionPrediction simulate_realtime_session(const UniformSeries& series, const ClassificationModel<float>& model,
                                            const WindowingParams& params) {
    if (series.length() < params.window) throw ValidationError("series shorter than one window");
    const auto starts = extract_windows(series.length(), params.window, params.infer_stride);
    std::vector<std::vector<float>> seg_conf;
    std::vector<nn::Matrix<float>> projected;
    SessionPrediction out;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        const WindowData window = series.channels.middleCols(starts[k], params.window).cast<float>();
        const auto frozen = model.frozen_features(window);
        seg_conf.emplace_back(frozen.confidences.data(), frozen.confidences.data() + frozen.confidences.size());
        projected.push_back(model.project(window, frozen));

        const auto used = static_cast<std::size_t>(std::min<Index>(static_cast<Index>(k) + 1, params.max_windows));
        const std::vector<nn::Matrix<float>> recent(projected.end() - static_cast<std::ptrdiff_t>(used), projected.end());
        const auto conf = model.predict_projected(recent);
        TickRecord tick;
        tick.tick = static_cast<long>(k);
        tick.sample_index = starts[k] + params.window;
        tick.time = static_cast<double>(tick.sample_index) / kSampleRate;
        tick.windows_used = static_cast<int>(used);
        tick.confidence = conf.back();
        tick.flag = tick.confidence >= 0.5;
        out.ticks.push_back(tick);
    }
    out.segmentation = merge_overlapping_predictions(series.length(), starts, seg_conf);
    return out;
}

SessionReport score_session(const std::string& name, const UniformSeries& series, const RirTrace& rir,
                            const SessionPrediction& prediction, const WindowingParams& params) {
    SessionReport report;
    report.name = name;
    const Labels truth_points = segmentation_labels(series.marker_indices, 0, series.length());
    Labels pred, truth;
    for (Index p = 0; p < series.length(); ++p) {
        if (prediction.segmentation.coverage[static_cast<std::size_t>(p)] == 0) continue;
        pred.push_back(prediction.segmentation.confidence[static_cast<std::size_t>(p)] >= 0.5 ? 1 : 0);
        truth.push_back(truth_points[static_cast<std::size_t>(p)]);
    }
    report.segmentation = binary_metrics(pred, truth);

    Labels tick_pred, tick_truth;
    for (const auto& tick : prediction.ticks) {
        tick_pred.push_back(tick.flag ? 1 : 0);
        tick_truth.push_back(near_failure_label(rir, tick.sample_index - params.window, params.window) ? 1 : 0);
    }
    report.near_failure = binary_metrics(tick_pred, tick_truth);
    return report;
}

EvaluationReport aggregate(std::vector<SessionReport> sessions) {
    EvaluationReport r;
    r.sessions = std::move(sessions);
    BinaryMetrics seg_total, cls_total;
    for (const auto& s : r.sessions) {
        r.mean_seg_f1 += s.segmentation.f1;
        r.mean_seg_precision += s.segmentation.precision;
        r.mean_seg_recall += s.segmentation.recall;
        r.mean_seg_accuracy += s.segmentation.accuracy;
        r.mean_cls_f1 += s.near_failure.f1;
        r.mean_cls_precision += s.near_failure.precision;
        r.mean_cls_recall += s.near_failure.recall;
        r.mean_cls_accuracy += s.near_failure.accuracy;
        seg_total += s.segmentation;
        cls_total += s.near_failure;
    }
    if (!r.sessions.empty()) {
        const auto n = static_cast<double>(r.sessions.size());
        for (double* v : {&r.mean_seg_f1, &r.mean_seg_precision, &r.mean_seg_recall, &r.mean_seg_accuracy,
                          &r.mean_cls_f1, &r.mean_cls_precision, &r.mean_cls_recall, &r.mean_cls_accuracy}) {
            *v /= n;
        }
    }
    r.seg_confusion = normalize_rows(seg_total);
    r.cls_confusion = normalize_rows(cls_total);
    return r;
}

void write_report(const EvaluationReport& r, std::ostream& out) {
    out << std::fixed << std::setprecision(4);
    out << "# session seg_f1 seg_precision seg_recall seg_accuracy cls_f1 cls_precision cls_recall cls_accuracy\n";
    for (const auto& s : r.sessions) {
        out << "session " << s.name << ' ' << s.segmentation.f1 << ' ' << s.segmentation.precision << ' '
            << s.segmentation.recall << ' ' << s.segmentation.accuracy << ' ' << s.near_failure.f1 << ' '
            << s.near_failure.precision << ' ' << s.near_failure.recall << ' ' << s.near_failure.accuracy << '\n';
    }
    out << "mean segmentation f1=" << r.mean_seg_f1 << " precision=" << r.mean_seg_precision
        << " recall=" << r.mean_seg_recall << " accuracy=" << r.mean_seg_accuracy << '\n';
    out << "mean near_failure f1=" << r.mean_cls_f1 << " precision=" << r.mean_cls_precision
        << " recall=" << r.mean_cls_recall << " accuracy=" << r.mean_cls_accuracy << '\n';
    auto cm = [&](const char* name, const Eigen::Matrix2d& m) {
        out << "confusion " << name << " [[" << m(0, 0) << ", " << m(0, 1) << "], [" << m(1, 0) << ", " << m(1, 1)
            << "]]\n";
    };
    cm("segmentation", r.seg_confusion);
    cm("near_failure", r.cls_confusion);
}

}  // namespace repcoach
