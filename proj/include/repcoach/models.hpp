#pragma once

#include "repcoach/config_file.hpp"
#include "repcoach/dataset.hpp"
#include "repcoach/nn/layers.hpp"
#include "repcoach/nn/lstm.hpp"
#include "repcoach/weights.hpp"

#include <optional>
#include <span>
#include <vector>

namespace repcoach {

inline constexpr Index kEncodingWidth = 512;
inline constexpr Index kTimeInRepWidth = kWindow;

/// Segmentation network family: a stem convolution followed by `stages` stages of residual
/// conv-BN-ReLU blocks. Each stage's first block has stride 2; stage widths are log-linearly
/// interpolated from first_channels to last_channels.
struct SegModelConfig {
    int first_kernel = 5;
    int stages = 7;
    int blocks_per_stage = 1;
    int first_channels = 186;
    int last_channels = 512;
    int block_kernel = 3;

    std::vector<Index> stage_channels() const;
    void validate() const;
    static SegModelConfig from_config(const KeyValueConfig& cfg, const std::string& prefix = "seg.");
    void to_config(KeyValueConfig& cfg, const std::string& prefix = "seg.") const;
    bool operator==(const SegModelConfig&) const = default;
};

/// Trainable parameter count of a segmentation model, computed from the layer shapes alone.
Index count_seg_params(const SegModelConfig& config);
Index seg_head_params();

struct SegConfigMatch {
    SegModelConfig config;
    Index params = 0;  // base (without head)
    Index delta = 0;   // params - target
};

struct SegConfigSearch {
    std::size_t grid_size = 0;
    std::vector<SegConfigMatch> exact;
    std::vector<SegConfigMatch> within_one_percent;  // sorted by |delta|
    SegConfigMatch closest;
};

/// Enumerates stages 4..8, blocks {1, 2}, first channels 64..256 (every integer), first kernel
/// {3, 5, 7}, last channels 512, and compares the base parameter count against `target_base`.
SegConfigSearch recover_seg_config(Index target_base);

inline constexpr Index kPaperSegParams = 2'971'648;
inline constexpr Index kPaperClsTrainable = 2'320'193;
inline constexpr Index kPaperClsTotal = 5'291'841;

struct ClsModelConfig {
    int skip_channels = 64;
    int skip_kernel = 3;
    int projection = 256;
    int lstm_layers = 4;
    int lstm_hidden = 256;

    Index feature_width() const { return kEncodingWidth + kTimeInRepWidth + skip_channels; }
    void validate() const;
    static ClsModelConfig from_config(const KeyValueConfig& cfg, const std::string& prefix = "cls.");
    void to_config(KeyValueConfig& cfg, const std::string& prefix = "cls.") const;
    bool operator==(const ClsModelConfig&) const = default;
};

Index count_cls_trainable_params(const ClsModelConfig& config);

struct MarkerParams {
    double threshold = 0.5;
    int smooth_width = 5;
};

/// Threshold, majority-vote smoothing over a centered window, then the floor midpoint of every
/// maximal positive run.
std::vector<Index> extract_rep_markers(std::span<const float> confidences, const MarkerParams& params = {});

/// Seconds since the latest marker at or before each point, or since the window start.
std::vector<float> time_in_rep(std::span<const Index> markers, Index window = kWindow);

// ---------------------------------------------------------------------------------------------

template <typename Scalar>
struct SegOutput {
    nn::Matrix<Scalar> confidences;  // window points × batch
    nn::Matrix<Scalar> encoding;     // 512 × batch
};

/// conv-BN-ReLU with an identity or 1x1 projection shortcut.
template <typename Scalar>
class ResidualBlock {
public:
    ResidualBlock(const std::string& name, Index in, Index out, Index stride, Index kernel)
        : conv_(name + ".conv", {in, out, kernel, stride, -1, true}),
          bn_(name + ".bn", {out}),
          projected_(in != out || stride != 1) {
        if (projected_) {
            proj_ = nn::Conv1d<Scalar>(name + ".proj", {in, out, 1, stride, 0, true});
            proj_bn_ = nn::BatchNorm1d<Scalar>(name + ".proj_bn", {out});
        }
    }

    void init(Rng& rng) {
        conv_.init(rng);
        if (projected_) proj_.init(rng);
    }

    nn::Signal<Scalar> forward(const nn::Signal<Scalar>& x, nn::Mode mode) {
        auto main = bn_.forward(conv_.forward(x), mode);
        main.data = nn::relu(main.data);
        activation_ = main.data;
        if (projected_) {
            main.data += proj_bn_.forward(proj_.forward(x), mode).data;
        } else {
            main.data += x.data;
        }
        return main;
    }

    nn::Signal<Scalar> infer(const nn::Signal<Scalar>& x) const {
        auto main = bn_.infer(conv_.infer(x));
        main.data = nn::relu(main.data);
        if (projected_) {
            main.data += proj_bn_.infer(proj_.infer(x)).data;
        } else {
            main.data += x.data;
        }
        return main;
    }

    nn::Signal<Scalar> backward(const nn::Signal<Scalar>& dy) {
        if (activation_.size() == 0) throw StateError("residual block: backward before forward");
        nn::Signal<Scalar> da(nn::relu_backward(dy.data, activation_), dy.batch, dy.length);
        auto dx = conv_.backward(bn_.backward(da));
        if (projected_) {
            dx.data += proj_.backward(proj_bn_.backward(dy)).data;
        } else {
            dx.data += dy.data;
        }
        return dx;
    }

    void collect(nn::ParameterList<Scalar>& out) {
        conv_.collect(out);
        bn_.collect(out);
        if (projected_) {
            proj_.collect(out);
            proj_bn_.collect(out);
        }
    }

private:
    nn::Conv1d<Scalar> conv_;
    nn::BatchNorm1d<Scalar> bn_;
    bool projected_;
    nn::Conv1d<Scalar> proj_;
    nn::BatchNorm1d<Scalar> proj_bn_;
    nn::Matrix<Scalar> activation_;
};

/// ResNet base (stem + residual stages + global average pooling) and a linear 512 -> 256 head
/// with sigmoid confidences, one per input point.
template <typename Scalar>
class SegmentationModel {
public:
    explicit SegmentationModel(const SegModelConfig& config = {}) : config_(config) {
        config.validate();
        const auto widths = config.stage_channels();
        stem_ = nn::Conv1d<Scalar>("seg.stem.conv", {6, widths.front(), config.first_kernel, 1, -1, true});
        stem_bn_ = nn::BatchNorm1d<Scalar>("seg.stem.bn", {widths.front()});
        Index in = widths.front();
        for (std::size_t s = 0; s < widths.size(); ++s) {
            for (int b = 0; b < config.blocks_per_stage; ++b) {
                const std::string name = "seg.stage" + std::to_string(s) + ".block" + std::to_string(b);
                blocks_.emplace_back(name, in, widths[s], b == 0 ? 2 : 1, config.block_kernel);
                in = widths[s];
            }
        }
        head_ = nn::Linear<Scalar>("seg.head", kEncodingWidth, kWindow);
    }

    const SegModelConfig& config() const { return config_; }

    void init(Rng& rng) {
        stem_.init(rng);
        for (auto& b : blocks_) b.init(rng);
        head_.init(rng);
    }

    SegOutput<Scalar> forward(const nn::Signal<Scalar>& x, nn::Mode mode) {
        check(x);
        auto h = stem_bn_.forward(stem_.forward(x), mode);
        h.data = nn::relu(h.data);
        stem_act_ = h.data;
        for (auto& b : blocks_) h = b.forward(h, mode);
        final_length_ = h.length;
        SegOutput<Scalar> out;
        out.encoding = nn::global_avg_pool(h);
        out.confidences = nn::sigmoid(head_.forward(out.encoding));
        confidences_ = out.confidences;
        return out;
    }

    SegOutput<Scalar> infer(const nn::Signal<Scalar>& x) const {
        check(x);
        auto h = stem_bn_.infer(stem_.infer(x));
        h.data = nn::relu(h.data);
        for (const auto& b : blocks_) h = b.infer(h);
        SegOutput<Scalar> out;
        out.encoding = nn::global_avg_pool(h);
        out.confidences = nn::sigmoid(head_.infer(out.encoding));
        return out;
    }

    /// Backpropagates d loss / d confidences through the whole network.
    void backward(const nn::Matrix<Scalar>& d_confidences) {
        if (confidences_.size() == 0) throw StateError("segmentation model: backward before forward");
        const auto d_logits = nn::sigmoid_backward(d_confidences, confidences_);
        auto dh = nn::global_avg_pool_backward(head_.backward(d_logits), final_length_);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dh = it->backward(dh);
        dh.data = nn::relu_backward(dh.data, stem_act_);
        stem_.backward(stem_bn_.backward(dh));
    }

    nn::ParameterList<Scalar> parameters() {
        nn::ParameterList<Scalar> out;
        stem_.collect(out);
        stem_bn_.collect(out);
        for (auto& b : blocks_) b.collect(out);
        head_.collect(out);
        return out;
    }

    Index parameter_count() { return nn::count_parameters(parameters(), false); }

private:
    void check(const nn::Signal<Scalar>& x) const {
        if (x.channels() != 6 || x.length != kWindow) throw ValidationError("segmentation model expects 6 x 256 windows");
    }

    SegModelConfig config_;
    nn::Conv1d<Scalar> stem_;
    nn::BatchNorm1d<Scalar> stem_bn_;
    std::vector<ResidualBlock<Scalar>> blocks_;
    nn::Linear<Scalar> head_;
    nn::Matrix<Scalar> stem_act_, confidences_;
    Index final_length_ = 0;
};

/// Frozen per-window outputs of the segmentation model as used by the classifier.
template <typename Scalar>
struct FrozenFeatures {
    nn::Vector<Scalar> encoding;     // 512
    nn::Vector<Scalar> confidences;  // 256
    std::vector<Index> markers;      // window-relative
    nn::Vector<Scalar> time_in_rep;  // 256, seconds
};

/// Near-failure classifier: frozen segmentation model, trainable skip branch (conv-BN-ReLU-GAP),
/// projection, stacked LSTM over the window axis and a 256 -> 1 sigmoid head.
template <typename Scalar>
class ClassificationModel {
public:
    ClassificationModel(const SegmentationModel<Scalar>& seg, const ClsModelConfig& config = {})
        : config_(config), seg_(seg) {
        config.validate();
        for (auto* p : seg_.parameters()) p->frozen = true;
        skip_ = nn::Conv1d<Scalar>("cls.skip.conv", {6, config.skip_channels, config.skip_kernel, 1, -1, true});
        skip_bn_ = nn::BatchNorm1d<Scalar>("cls.skip.bn", {config.skip_channels});
        projection_ = nn::Linear<Scalar>("cls.projection", config.feature_width(), config.projection);
        lstm_ = nn::Lstm<Scalar>("cls.lstm", {config.projection, config.lstm_hidden, config.lstm_layers});
        head_ = nn::Linear<Scalar>("cls.head", config.lstm_hidden, 1);
    }

    const ClsModelConfig& config() const { return config_; }
    const SegmentationModel<Scalar>& segmentation() const { return seg_; }
    SegmentationModel<Scalar>& segmentation() { return seg_; }
    const nn::LstmSpec& lstm_spec() const { return lstm_.spec(); }

    void init(Rng& rng) {
        skip_.init(rng);
        projection_.init(rng);
        lstm_.init(rng);
        head_.init(rng);
    }

    nn::ParameterList<Scalar> parameters() {
        auto out = seg_.parameters();
        auto own = own_parameters();
        out.insert(out.end(), own.begin(), own.end());
        return out;
    }

    nn::ParameterList<Scalar> own_parameters() {
        nn::ParameterList<Scalar> out;
        skip_.collect(out);
        skip_bn_.collect(out);
        projection_.collect(out);
        lstm_.collect(out);
        head_.collect(out);
        return out;
    }

    Index trainable_parameter_count() { return nn::count_parameters(parameters(), true); }
    Index total_parameter_count() { return nn::count_parameters(parameters(), false); }

    /// Segmentation outputs for one window (batch of one, eval mode).
    FrozenFeatures<Scalar> frozen_features(const WindowData& window, const MarkerParams& mp = {}) const {
        const auto out = seg_.infer(as_signal(window));
        FrozenFeatures<Scalar> f;
        f.encoding = out.encoding.col(0);
        f.confidences = out.confidences.col(0);
        const Eigen::VectorXf conf = f.confidences.template cast<float>();
        f.markers = extract_rep_markers(std::span<const float>(conf.data(), static_cast<std::size_t>(conf.size())), mp);
        const auto tir = time_in_rep(f.markers);
        f.time_in_rep = Eigen::Map<const Eigen::VectorXf>(tir.data(), static_cast<Index>(tir.size())).template cast<Scalar>();
        return f;
    }

    /// LSTM input for one window in eval mode.
    nn::Matrix<Scalar> project(const WindowData& window, const FrozenFeatures<Scalar>& frozen) const {
        auto skip = skip_bn_.infer(skip_.infer(as_signal(window)));
        skip.data = nn::relu(skip.data);
        return projection_.infer(concat(frozen, nn::global_avg_pool(skip)));
    }

    /// Per-window confidences for a sequence of projected inputs, carrying `state` if given.
    std::vector<Scalar> predict_projected(const std::vector<nn::Matrix<Scalar>>& projected,
                                          nn::LstmState<Scalar>* state = nullptr) const {
        const auto out = lstm_.infer(projected, state);
        if (state) *state = out.final;
        std::vector<Scalar> conf;
        for (const auto& h : out.hidden) conf.push_back(nn::sigmoid(head_.infer(h))(0, 0));
        return conf;
    }

    /// Classifies 1..32 windows; the prediction for window k depends only on windows 1..k.
    std::vector<Scalar> forward(std::span<const WindowData> windows, nn::LstmState<Scalar>* state = nullptr) const {
        if (windows.empty()) throw ValidationError("classifier needs at least one window");
        if (windows.size() > 32) throw ValidationError("classifier accepts at most 32 windows");
        std::vector<nn::Matrix<Scalar>> projected;
        for (const auto& w : windows) projected.push_back(project(w, frozen_features(w)));
        return predict_projected(projected, state);
    }

    // --- training path -------------------------------------------------------------------

    /// A batch of sequences laid out time-major: window (b, t) is column t * batch + b. Only
    /// `valid` windows carry data; padded steps are fed zeros and excluded from the loss.
    struct SequenceInput {
        Index batch = 0;
        Index steps = 0;
        std::vector<std::uint8_t> valid;          // steps * batch
        std::vector<const WindowData*> windows;   // steps * batch (nullptr when padded)
        std::vector<const FrozenFeatures<Scalar>*> frozen;
    };

    /// Confidence per (t, b), 1 × (steps · batch); padded entries are meaningless.
    nn::Matrix<Scalar> forward_train(const SequenceInput& in) {
        const Index total = in.steps * in.batch;
        valid_index_.clear();
        for (Index i = 0; i < total; ++i) {
            if (in.valid[static_cast<std::size_t>(i)]) valid_index_.push_back(i);
        }
        const auto nvalid = static_cast<Index>(valid_index_.size());
        if (nvalid == 0) throw ValidationError("sequence batch has no valid windows");
        nn::Signal<Scalar> raw(nn::Matrix<Scalar>(6, nvalid * kWindow), nvalid, kWindow);
        nn::Matrix<Scalar> frozen(kEncodingWidth + kTimeInRepWidth, nvalid);
        for (Index v = 0; v < nvalid; ++v) {
            const auto i = static_cast<std::size_t>(valid_index_[static_cast<std::size_t>(v)]);
            raw.element(v) = in.windows[i]->template cast<Scalar>();
            frozen.col(v) << in.frozen[i]->encoding, in.frozen[i]->time_in_rep;
        }
        auto skip = skip_bn_.forward(skip_.forward(raw), nn::Mode::train);
        skip.data = nn::relu(skip.data);
        skip_act_ = skip.data;
        nn::Matrix<Scalar> features(config_.feature_width(), nvalid);
        features.topRows(kEncodingWidth + kTimeInRepWidth) = frozen;
        features.bottomRows(config_.skip_channels) = nn::global_avg_pool(skip);
        const auto projected = projection_.forward(features);

        steps_ = in.steps;
        batch_ = in.batch;
        std::vector<nn::Matrix<Scalar>> seq(static_cast<std::size_t>(in.steps),
                                            nn::Matrix<Scalar>::Zero(config_.projection, in.batch));
        for (Index v = 0; v < nvalid; ++v) {
            const Index i = valid_index_[static_cast<std::size_t>(v)];
            seq[static_cast<std::size_t>(i / in.batch)].col(i % in.batch) = projected.col(v);
        }
        const auto out = lstm_.forward(seq);
        nn::Matrix<Scalar> hidden(config_.lstm_hidden, total);
        for (Index t = 0; t < in.steps; ++t) hidden.middleCols(t * in.batch, in.batch) = out.hidden[static_cast<std::size_t>(t)];
        confidences_ = nn::sigmoid(head_.forward(hidden));
        return confidences_;
    }

    void backward_train(const nn::Matrix<Scalar>& d_confidences) {
        if (confidences_.size() == 0) throw StateError("classifier: backward before forward");
        const auto d_hidden = head_.backward(nn::sigmoid_backward(d_confidences, confidences_));
        std::vector<nn::Matrix<Scalar>> dseq;
        for (Index t = 0; t < steps_; ++t) dseq.push_back(d_hidden.middleCols(t * batch_, batch_));
        const auto dprojected_seq = lstm_.backward(dseq);
        const auto nvalid = static_cast<Index>(valid_index_.size());
        nn::Matrix<Scalar> dprojected(config_.projection, nvalid);
        for (Index v = 0; v < nvalid; ++v) {
            const Index i = valid_index_[static_cast<std::size_t>(v)];
            dprojected.col(v) = dprojected_seq[static_cast<std::size_t>(i / batch_)].col(i % batch_);
        }
        const auto dfeatures = projection_.backward(dprojected);
        auto dskip = nn::global_avg_pool_backward<Scalar>(dfeatures.bottomRows(config_.skip_channels), kWindow);
        dskip.data = nn::relu_backward(dskip.data, skip_act_);
        skip_.backward(skip_bn_.backward(dskip));
    }

    static nn::Signal<Scalar> as_signal(const WindowData& window) {
        if (window.rows() != 6 || window.cols() != kWindow) throw ValidationError("window must be 6 x 256");
        return nn::Signal<Scalar>(window.template cast<Scalar>(), 1, kWindow);
    }

private:
    nn::Matrix<Scalar> concat(const FrozenFeatures<Scalar>& frozen, const nn::Matrix<Scalar>& skip) const {
        nn::Matrix<Scalar> f(config_.feature_width(), 1);
        f << frozen.encoding, frozen.time_in_rep, skip;
        return f;
    }

    ClsModelConfig config_;
    SegmentationModel<Scalar> seg_;
    nn::Conv1d<Scalar> skip_;
    nn::BatchNorm1d<Scalar> skip_bn_;
    nn::Linear<Scalar> projection_;
    nn::Lstm<Scalar> lstm_;
    nn::Linear<Scalar> head_;

    nn::Matrix<Scalar> skip_act_, confidences_;
    std::vector<Index> valid_index_;
    Index steps_ = 0, batch_ = 0;
};

// --- persistence -----------------------------------------------------------------------------

template <typename Scalar>
ModelWeights export_weights(const nn::ParameterList<Scalar>& params) {
    ModelWeights w;
    for (const auto* p : params) {
        Tensor t;
        t.shape.assign(p->shape.begin(), p->shape.end());
        t.data.resize(static_cast<std::size_t>(p->value.size()));
        // row-major flattening of the value matrix
        const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = p->value.template cast<float>();
        std::copy(rm.data(), rm.data() + rm.size(), t.data.begin());
        w.tensors.emplace(p->name, std::move(t));
    }
    return w;
}

/// Copies every named tensor into the matching parameter. Throws ValidationError when a tensor is
/// missing or its shape differs.
template <typename Scalar>
void import_weights(const nn::ParameterList<Scalar>& params, const ModelWeights& weights) {
    for (auto* p : params) {
        const auto it = weights.tensors.find(p->name);
        if (it == weights.tensors.end()) throw ValidationError("missing weight tensor '" + p->name + "'");
        const auto& t = it->second;
        if (!std::equal(t.shape.begin(), t.shape.end(), p->shape.begin(), p->shape.end())) {
            throw ValidationError("shape mismatch for weight tensor '" + p->name + "'");
        }
        const Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rm(
            t.data.data(), p->value.rows(), p->value.cols());
        p->value = rm.template cast<Scalar>();
    }
}

/// Serialized form of a trained pipeline: segmentation weights, optionally classifier weights.
struct PipelineFile {
    SegModelConfig seg_config;
    std::optional<ClsModelConfig> cls_config;
    ModelWeights weights;
};

PipelineFile load_pipeline(const std::filesystem::path& path);
void save_pipeline(const PipelineFile& file, const std::filesystem::path& path);

template <typename Scalar>
PipelineFile make_pipeline_file(SegmentationModel<Scalar>& seg) {
    PipelineFile f{seg.config(), std::nullopt, export_weights(seg.parameters())};
    return f;
}

template <typename Scalar>
PipelineFile make_pipeline_file(ClassificationModel<Scalar>& cls) {
    PipelineFile f{cls.segmentation().config(), cls.config(), export_weights(cls.parameters())};
    return f;
}

template <typename Scalar>
SegmentationModel<Scalar> segmentation_from(const PipelineFile& f) {
    SegmentationModel<Scalar> seg(f.seg_config);
    import_weights(seg.parameters(), f.weights);
    return seg;
}

/// Throws ValidationError when the file holds no classifier or the segmentation tensors are missing.
template <typename Scalar>
ClassificationModel<Scalar> classification_from(const PipelineFile& f) {
    if (!f.cls_config) throw ValidationError("model file holds no classifier");
    ClassificationModel<Scalar> cls(segmentation_from<Scalar>(f), *f.cls_config);
    import_weights(cls.parameters(), f.weights);
    return cls;
}

}  // namespace repcoach
