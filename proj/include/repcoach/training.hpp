#pragma once

#include "repcoach/dataset.hpp"
#include "repcoach/models.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace repcoach {

struct TrainConfig {
    double lr_seg = 4.3e-3;
    double lr_cls = 7.9e-4;
    double weight_decay = 0.01;
    int batch = 128;
    int max_epochs = 50;
    int patience = 15;
    double alpha = 0.8;
    std::uint64_t seed = 0;
    bool augment = true;
    /// Windows drawn per segmentation epoch; 0 uses every stride-`train_stride` window.
    Index windows_per_epoch = 0;
    /// Sequences drawn per classification epoch; 0 uses all of them.
    Index sequences_per_epoch = 0;
    WindowingParams windowing;
    /// Stride of the validation windows scored after each segmentation epoch.
    Index val_stride = 2;

    void validate() const;
    static TrainConfig from_config(const KeyValueConfig& cfg);
    void to_config(KeyValueConfig& cfg) const;
};

/// Preprocessed session with its labels, the unit both trainers consume.
struct LabeledSeries {
    UniformSeries series;
    RirTrace rir;
    std::string name;
};

LabeledSeries label_series(const Session& session, std::string name = {});

/// T consecutive stride-64 windows starting at `start`.
struct SequenceSpan {
    Index start = 0;
    Index windows = 0;
};

/// Full max_windows sequences starting every infer_stride samples; a series shorter than one full
/// span yields a single sequence of every window that fits.
std::vector<SequenceSpan> make_sequence_batches(Index series_length, const WindowingParams& params = {});

struct HistoryRecord {
    int epoch = 0;
    std::string split;
    std::string metric;
    double value = 0.0;
};

/// Writes one JSON object per line.
void write_history(const std::vector<HistoryRecord>& history, std::ostream& out);

using ProgressFn = std::function<void(const HistoryRecord&)>;

struct SegTrainResult {
    SegmentationModel<float> model;
    std::vector<HistoryRecord> history;
    int best_epoch = 0;
    double best_val_f1 = -1.0;
    int epochs_run = 0;
};

/// Shuffled (optionally augmented) window batches, combined loss, per-epoch validation F1 on
/// unaugmented windows, best-F1 checkpointing and patience-based early stopping.
SegTrainResult train_segmentation(const std::vector<LabeledSeries>& train, const std::vector<LabeledSeries>& val,
                                  const SegModelConfig& model_config, const TrainConfig& config,
                                  const ProgressFn& progress = {});

/// Point-wise F1 of a segmentation model over all windows at `stride`.
double segmentation_window_f1(const SegmentationModel<float>& model, const std::vector<LabeledSeries>& sets,
                              Index stride);

struct ClsTrainResult {
    ClassificationModel<float> model;
    std::vector<HistoryRecord> history;
    int best_epoch = 0;
    double best_val_f1 = -1.0;
    int epochs_run = 0;
};

/// Sequence batches of stride-64 windows with per-window BCE; the segmentation model is frozen and
/// checked bit-for-bit after every optimizer step.
ClsTrainResult train_classification(const std::vector<LabeledSeries>& train, const std::vector<LabeledSeries>& val,
                                    const SegmentationModel<float>& seg, const ClsModelConfig& model_config,
                                    const TrainConfig& config, const ProgressFn& progress = {});

/// Per-window F1 of a classifier over every training-style sequence of the given sets.
double classification_sequence_f1(const ClassificationModel<float>& model, const std::vector<LabeledSeries>& sets,
                                  const WindowingParams& params);

}  // namespace repcoach
