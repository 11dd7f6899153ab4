#pragma once

#include "repcoach/dataset.hpp"
#include "repcoach/models.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace repcoach {

struct BinaryMetrics {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;

    long total() const { return tp + fp + fn + tn; }
    static BinaryMetrics from_counts(long tp, long fp, long fn, long tn);
    BinaryMetrics& operator+=(const BinaryMetrics& other);
};

BinaryMetrics binary_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

/// 2 × 2 matrix indexed [truth][prediction] with the positive class first (row 0 = truly positive,
/// column 0 = predicted positive). Each row is normalized to sum 1 when that class occurs.
Eigen::Matrix2d confusion_matrix(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);
Eigen::Matrix2d normalize_rows(const BinaryMetrics& counts);

struct MergedPrediction {
    std::vector<double> confidence;  // per point; NaN where no window covers the point
    std::vector<int> coverage;
};

/// Arithmetic mean of every window confidence covering each point.
MergedPrediction merge_overlapping_predictions(Index length, std::span<const Index> starts,
                                               std::span<const std::vector<float>> window_confidences);

struct TickRecord {
    long tick = 0;
    Index sample_index = 0;  // one past the newest sample of the newest window
    double time = 0.0;       // seconds since the session start
    int windows_used = 0;
    double confidence = 0.0;
    bool flag = false;
};

struct SessionPrediction {
    MergedPrediction segmentation;
    std::vector<TickRecord> ticks;
};

/// Replays a preprocessed series as if it arrived live: a tick every 64 samples once the first
/// 256 have arrived; each tick classifies the most recent min(k + 1, 32) windows and keeps the
/// newest window's prediction. Segmentation runs once per window and is overlap-averaged.
SessionPrediction simulate_realtime_session(const UniformSeries& series, const ClassificationModel<float>& model,
                                            const WindowingParams& params = {});

struct SessionReport {
    std::string name;
    BinaryMetrics segmentation;
    BinaryMetrics near_failure;
};

struct EvaluationReport {
    std::vector<SessionReport> sessions;
    double mean_seg_f1 = 0.0, mean_seg_precision = 0.0, mean_seg_recall = 0.0, mean_seg_accuracy = 0.0;
    double mean_cls_f1 = 0.0, mean_cls_precision = 0.0, mean_cls_recall = 0.0, mean_cls_accuracy = 0.0;
    Eigen::Matrix2d seg_confusion = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d cls_confusion = Eigen::Matrix2d::Zero();
};

/// Scores one session: per-point segmentation on covered points, per-tick near-failure against
/// the label of the newest window.
SessionReport score_session(const std::string& name, const UniformSeries& series, const RirTrace& rir,
                            const SessionPrediction& prediction, const WindowingParams& params = {});

/// Unweighted means of per-session metrics; confusion matrices pool all counts.
EvaluationReport aggregate(std::vector<SessionReport> sessions);

void write_report(const EvaluationReport& report, std::ostream& out);

}  // namespace repcoach
