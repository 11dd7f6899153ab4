#include "repcoach/training.hpp"

#include "repcoach/errors.hpp"
#include "repcoach/eval.hpp"
#include "repcoach/nn/adamw.hpp"
#include "repcoach/nn/loss.hpp"

#include <json.hpp>

#include <algorithm>
#include <ostream>

namespace repcoach {

void TrainConfig::validate() const {
    if (!(lr_seg > 0) || !(lr_cls > 0) || batch < 1 || max_epochs < 1 || patience < 1 || !(alpha >= 0 && alpha <= 1) ||
        weight_decay < 0 || windows_per_epoch < 0 || sequences_per_epoch < 0 || val_stride < 1) {
        throw ValidationError("invalid training config");
    }
    if (patience > max_epochs) throw ValidationError("patience must not exceed max_epochs");
    windowing.validate();
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
    TrainConfig c;
    c.lr_seg = cfg.get_double("train.lr_seg", c.lr_seg);
    c.lr_cls = cfg.get_double("train.lr_cls", c.lr_cls);
    c.weight_decay = cfg.get_double("train.weight_decay", c.weight_decay);
    c.batch = static_cast<int>(cfg.get_int("train.batch", c.batch));
    c.max_epochs = static_cast<int>(cfg.get_int("train.max_epochs", c.max_epochs));
    c.patience = static_cast<int>(cfg.get_int("train.patience", c.patience));
    c.alpha = cfg.get_double("train.alpha", c.alpha);
    c.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", static_cast<long long>(c.seed)));
    c.augment = cfg.get_int("train.augment", c.augment ? 1 : 0) != 0;
    c.windows_per_epoch = cfg.get_int("train.windows_per_epoch", c.windows_per_epoch);
    c.sequences_per_epoch = cfg.get_int("train.sequences_per_epoch", c.sequences_per_epoch);
    c.windowing.train_stride = cfg.get_int("train.train_stride", c.windowing.train_stride);
    c.val_stride = cfg.get_int("train.val_stride", c.val_stride);
    c.validate();
    return c;
}

void TrainConfig::to_config(KeyValueConfig& cfg) const {
    cfg.set("train.lr_seg", lr_seg);
    cfg.set("train.lr_cls", lr_cls);
    cfg.set("train.weight_decay", weight_decay);
    cfg.set("train.batch", batch);
    cfg.set("train.max_epochs", max_epochs);
    cfg.set("train.patience", patience);
    cfg.set("train.alpha", alpha);
    cfg.set("train.seed", static_cast<long long>(seed));
    cfg.set("train.augment", augment ? 1 : 0);
    cfg.set("train.windows_per_epoch", static_cast<long long>(windows_per_epoch));
    cfg.set("train.sequences_per_epoch", static_cast<long long>(sequences_per_epoch));
    cfg.set("train.train_stride", static_cast<long long>(windowing.train_stride));
    cfg.set("train.val_stride", static_cast<long long>(val_stride));
}

LabeledSeries label_series(const Session& session, std::string name) {
    LabeledSeries out;
    out.series = preprocess(session);
    out.rir = rir_per_point(out.series);
    out.name = std::move(name);
    return out;
}

std::vector<SequenceSpan> make_sequence_batches(Index series_length, const WindowingParams& params) {
    params.validate();
    std::vector<SequenceSpan> out;
    if (series_length < params.window) return out;
    if (series_length < params.span()) {
        out.push_back({0, (series_length - params.window) / params.infer_stride + 1});
        return out;
    }
    for (Index start = 0; start + params.span() <= series_length; start += params.infer_stride) {
        out.push_back({start, params.max_windows});
    }
    return out;
}

void write_history(const std::vector<HistoryRecord>& history, std::ostream& out) {
    for (const auto& r : history) {
        nlohmann::json j = {{"epoch", r.epoch}, {"split", r.split}, {"metric", r.metric}, {"value", r.value}};
        out << j.dump() << '\n';
    }
}

namespace {

void record(std::vector<HistoryRecord>& history, const ProgressFn& progress, HistoryRecord r) {
    if (progress) progress(r);
    history.push_back(std::move(r));
}

}  // namespace

double segmentation_window_f1(const SegmentationModel<float>& model, const std::vector<LabeledSeries>& sets,
                              Index stride) {
    constexpr Index kChunk = 64;
    BinaryMetrics total;
    for (const auto& set : sets) {
        const auto starts = extract_windows(set.series.length(), kWindow, stride);
        for (std::size_t first = 0; first < starts.size(); first += kChunk) {
            const auto n = static_cast<Index>(std::min<std::size_t>(kChunk, starts.size() - first));
            nn::Signal<float> x(nn::Matrix<float>(6, n * kWindow), n, kWindow);
            Labels truth, pred;
            for (Index b = 0; b < n; ++b) {
                const auto w = make_window(set.series, {}, starts[first + static_cast<std::size_t>(b)]);
                x.element(b) = w.data;
                truth.insert(truth.end(), w.seg_labels.begin(), w.seg_labels.end());
            }
            const auto out = model.infer(x);
            for (Index i = 0; i < out.confidences.size(); ++i) pred.push_back(out.confidences.data()[i] >= 0.5f ? 1 : 0);
            total += binary_metrics(pred, truth);
        }
    }
    return total.f1;
}

SegTrainResult train_segmentation(const std::vector<LabeledSeries>& train, const std::vector<LabeledSeries>& val,
                                  const SegModelConfig& model_config, const TrainConfig& config,
                                  const ProgressFn& progress) {
    config.validate();
    if (train.empty()) throw ValidationError("empty training split");
    Rng rng(config.seed);
    SegTrainResult result{SegmentationModel<float>(model_config), {}, 0, -1.0, 0};
    auto& model = result.model;
    model.init(rng);
    const auto params = model.parameters();
    nn::AdamW<float> opt(params, {config.lr_seg, config.weight_decay});

    std::vector<std::pair<int, Index>> index;
    for (std::size_t s = 0; s < train.size(); ++s) {
        for (Index start : extract_windows(train[s].series.length(), kWindow, config.windowing.train_stride)) {
            index.emplace_back(static_cast<int>(s), start);
        }
    }
    if (index.empty()) throw ValidationError("training sessions are shorter than one window");

    ModelWeights best = export_weights(params);
    int since_best = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(index.begin(), index.end());
        const auto used = config.windows_per_epoch > 0
                              ? std::min<std::size_t>(index.size(), static_cast<std::size_t>(config.windows_per_epoch))
                              : index.size();
        double loss_sum = 0.0;
        for (std::size_t first = 0; first < used; first += static_cast<std::size_t>(config.batch)) {
            const auto n = static_cast<Index>(std::min<std::size_t>(static_cast<std::size_t>(config.batch), used - first));
            nn::Signal<float> x(nn::Matrix<float>(6, n * kWindow), n, kWindow);
            nn::Matrix<float> target(kWindow, n);
            for (Index b = 0; b < n; ++b) {
                const auto [s, start] = index[first + static_cast<std::size_t>(b)];
                const auto& set = train[static_cast<std::size_t>(s)];
                const auto w = config.augment ? augment_window(set.series, {}, start, rng) : make_window(set.series, {}, start);
                x.element(b) = w.data;
                for (Index j = 0; j < kWindow; ++j) target(j, b) = w.seg_labels[static_cast<std::size_t>(j)];
            }
            opt.zero_grad();
            const auto out = model.forward(x, nn::Mode::train);
            const auto loss = nn::combined_seg_loss(out.confidences, target, config.alpha);
            nn::ensure_finite(Eigen::Matrix<float, 1, 1>::Constant(loss.value), "segmentation loss");
            model.backward(loss.grad);
            opt.step();
            loss_sum += static_cast<double>(loss.value) * static_cast<double>(n);
        }
        record(result.history, progress, {epoch, "train", "loss", loss_sum / static_cast<double>(used)});
        const double f1 = segmentation_window_f1(model, val.empty() ? train : val, config.val_stride);
        record(result.history, progress, {epoch, "validation", "f1", f1});
        result.epochs_run = epoch;
        if (f1 > result.best_val_f1) {
            result.best_val_f1 = f1;
            result.best_epoch = epoch;
            best = export_weights(params);
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    import_weights(params, best);
    return result;
}

namespace {

struct ClsSet {
    std::vector<WindowData> windows;
    std::vector<FrozenFeatures<float>> frozen;
    std::vector<std::uint8_t> labels;
};

ClsSet prepare_cls_set(const ClassificationModel<float>& model, const LabeledSeries& set, const WindowingParams& params) {
    ClsSet out;
    for (Index start : extract_windows(set.series.length(), params.window, params.infer_stride)) {
        out.windows.push_back(set.series.channels.middleCols(start, params.window).cast<float>());
        out.frozen.push_back(model.frozen_features(out.windows.back()));
        out.labels.push_back(near_failure_label(set.rir, start, params.window) ? 1 : 0);
    }
    return out;
}

BinaryMetrics sequence_metrics(const ClassificationModel<float>& model, const ClsSet& set, const WindowingParams& params) {
    std::vector<nn::Matrix<float>> projected;
    for (std::size_t k = 0; k < set.windows.size(); ++k) projected.push_back(model.project(set.windows[k], set.frozen[k]));
    Labels pred, truth;
    const Index length = static_cast<Index>(set.windows.size() - 1) * params.infer_stride + params.window;
    for (const auto& seq : make_sequence_batches(length, params)) {
        const auto k0 = static_cast<std::size_t>(seq.start / params.infer_stride);
        const std::vector<nn::Matrix<float>> slice(projected.begin() + static_cast<std::ptrdiff_t>(k0),
                                                   projected.begin() + static_cast<std::ptrdiff_t>(k0 + static_cast<std::size_t>(seq.windows)));
        const auto conf = model.predict_projected(slice);
        for (std::size_t t = 0; t < conf.size(); ++t) {
            pred.push_back(conf[t] >= 0.5f ? 1 : 0);
            truth.push_back(set.labels[k0 + t]);
        }
    }
    return binary_metrics(pred, truth);
}

}  // namespace

double classification_sequence_f1(const ClassificationModel<float>& model, const std::vector<LabeledSeries>& sets,
                                  const WindowingParams& params) {
    BinaryMetrics total;
    for (const auto& set : sets) {
        if (set.series.length() < params.window) continue;
        total += sequence_metrics(model, prepare_cls_set(model, set, params), params);
    }
    return total.f1;
}

ClsTrainResult train_classification(const std::vector<LabeledSeries>& train, const std::vector<LabeledSeries>& val,
                                    const SegmentationModel<float>& seg, const ClsModelConfig& model_config,
                                    const TrainConfig& config, const ProgressFn& progress) {
    config.validate();
    if (train.empty()) throw ValidationError("empty training split");
    Rng rng(config.seed);
    ClsTrainResult result{ClassificationModel<float>(seg, model_config), {}, 0, -1.0, 0};
    auto& model = result.model;
    model.init(rng);
    const auto& params_w = config.windowing;

    std::vector<ClsSet> train_sets, val_sets;
    for (const auto& s : train) train_sets.push_back(prepare_cls_set(model, s, params_w));
    for (const auto& s : val) val_sets.push_back(prepare_cls_set(model, s, params_w));

    struct SeqRef {
        std::size_t set;
        std::size_t first;
        Index windows;
    };
    std::vector<SeqRef> sequences;
    for (std::size_t s = 0; s < train_sets.size(); ++s) {
        if (train_sets[s].windows.empty()) continue;
        const Index length = static_cast<Index>(train_sets[s].windows.size() - 1) * params_w.infer_stride + params_w.window;
        for (const auto& seq : make_sequence_batches(length, params_w)) {
            sequences.push_back({s, static_cast<std::size_t>(seq.start / params_w.infer_stride), seq.windows});
        }
    }
    if (sequences.empty()) throw ValidationError("training sessions are shorter than one window");

    auto all_params = model.parameters();
    std::vector<nn::Matrix<float>> frozen_snapshot;
    nn::ParameterList<float> frozen_params;
    for (auto* p : all_params) {
        if (p->frozen) {
            frozen_params.push_back(p);
            frozen_snapshot.push_back(p->value);
        }
    }
    nn::AdamW<float> opt(model.own_parameters(), {config.lr_cls, config.weight_decay});

    auto evaluate = [&](const std::vector<ClsSet>& sets) {
        BinaryMetrics total;
        for (const auto& s : sets) {
            if (!s.windows.empty()) total += sequence_metrics(model, s, params_w);
        }
        return total.f1;
    };

    ModelWeights best = export_weights(all_params);
    int since_best = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(sequences.begin(), sequences.end());
        const auto used = config.sequences_per_epoch > 0
                              ? std::min<std::size_t>(sequences.size(), static_cast<std::size_t>(config.sequences_per_epoch))
                              : sequences.size();
        double loss_sum = 0.0;
        std::size_t loss_windows = 0;
        for (std::size_t first = 0; first < used; first += static_cast<std::size_t>(config.batch)) {
            const auto batch = static_cast<Index>(std::min<std::size_t>(static_cast<std::size_t>(config.batch), used - first));
            Index steps = 0;
            for (Index b = 0; b < batch; ++b) steps = std::max(steps, sequences[first + static_cast<std::size_t>(b)].windows);
            ClassificationModel<float>::SequenceInput in;
            in.batch = batch;
            in.steps = steps;
            const auto total = static_cast<std::size_t>(steps * batch);
            in.valid.assign(total, 0);
            in.windows.assign(total, nullptr);
            in.frozen.assign(total, nullptr);
            std::vector<float> targets(total, 0.0f);
            for (Index b = 0; b < batch; ++b) {
                const auto& seq = sequences[first + static_cast<std::size_t>(b)];
                const auto& set = train_sets[seq.set];
                for (Index t = 0; t < seq.windows; ++t) {
                    const auto i = static_cast<std::size_t>(t * batch + b);
                    const auto k = seq.first + static_cast<std::size_t>(t);
                    in.valid[i] = 1;
                    in.windows[i] = &set.windows[k];
                    in.frozen[i] = &set.frozen[k];
                    targets[i] = set.labels[k];
                }
            }
            opt.zero_grad();
            const auto conf = model.forward_train(in);
            std::vector<std::size_t> valid;
            for (std::size_t i = 0; i < total; ++i) {
                if (in.valid[i]) valid.push_back(i);
            }
            nn::Matrix<float> pred(1, static_cast<Index>(valid.size())), target(1, static_cast<Index>(valid.size()));
            for (std::size_t v = 0; v < valid.size(); ++v) {
                pred(0, static_cast<Index>(v)) = conf(0, static_cast<Index>(valid[v]));
                target(0, static_cast<Index>(v)) = targets[valid[v]];
            }
            const auto loss = nn::bce_loss(pred, target);
            nn::Matrix<float> grad = nn::Matrix<float>::Zero(1, static_cast<Index>(total));
            for (std::size_t v = 0; v < valid.size(); ++v) grad(0, static_cast<Index>(valid[v])) = loss.grad(0, static_cast<Index>(v));
            model.backward_train(grad);
            opt.step();
            for (std::size_t f = 0; f < frozen_params.size(); ++f) {
                if (frozen_params[f]->value != frozen_snapshot[f]) {
                    throw StateError("frozen tensor '" + frozen_params[f]->name + "' changed during training");
                }
            }
            loss_sum += static_cast<double>(loss.value) * static_cast<double>(valid.size());
            loss_windows += valid.size();
        }
        record(result.history, progress, {epoch, "train", "loss", loss_sum / static_cast<double>(loss_windows)});
        const double f1 = evaluate(val_sets.empty() ? train_sets : val_sets);
        record(result.history, progress, {epoch, "validation", "f1", f1});
        result.epochs_run = epoch;
        if (f1 > result.best_val_f1) {
            result.best_val_f1 = f1;
            result.best_epoch = epoch;
            best = export_weights(all_params);
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    import_weights(all_params, best);
    return result;
}

}  // namespace repcoach
