#include "repcoach/models.hpp"

#include "repcoach/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace repcoach {

std::vector<Index> SegModelConfig::stage_channels() const {
    std::vector<Index> out;
    if (stages == 1) return {last_channels};
    const double ratio = static_cast<double>(last_channels) / static_cast<double>(first_channels);
    for (int i = 0; i < stages; ++i) {
        const double c = first_channels * std::pow(ratio, static_cast<double>(i) / (stages - 1));
        out.push_back(static_cast<Index>(std::lround(c)));
    }
    return out;
}

void SegModelConfig::validate() const {
    if (stages < 1 || (Index{1} << stages) > kWindow) throw ValidationError("segmentation stages must be in [1, 8]");
    if (blocks_per_stage < 1) throw ValidationError("need at least one block per stage");
    if (first_channels < 1) throw ValidationError("first-stage channels must be positive");
    if (last_channels != kEncodingWidth) throw ValidationError("last-stage channels must equal the 512-wide encoding");
    if (first_kernel < 1 || first_kernel % 2 == 0) throw ValidationError("first kernel must be odd");
    if (block_kernel < 1 || block_kernel % 2 == 0) throw ValidationError("block kernel must be odd");
}

SegModelConfig SegModelConfig::from_config(const KeyValueConfig& cfg, const std::string& prefix) {
    SegModelConfig c;
    c.first_kernel = static_cast<int>(cfg.get_int(prefix + "first_kernel", c.first_kernel));
    c.stages = static_cast<int>(cfg.get_int(prefix + "stages", c.stages));
    c.blocks_per_stage = static_cast<int>(cfg.get_int(prefix + "blocks_per_stage", c.blocks_per_stage));
    c.first_channels = static_cast<int>(cfg.get_int(prefix + "first_channels", c.first_channels));
    c.last_channels = static_cast<int>(cfg.get_int(prefix + "last_channels", c.last_channels));
    c.block_kernel = static_cast<int>(cfg.get_int(prefix + "block_kernel", c.block_kernel));
    c.validate();
    return c;
}

void SegModelConfig::to_config(KeyValueConfig& cfg, const std::string& prefix) const {
    cfg.set(prefix + "first_kernel", first_kernel);
    cfg.set(prefix + "stages", stages);
    cfg.set(prefix + "blocks_per_stage", blocks_per_stage);
    cfg.set(prefix + "first_channels", first_channels);
    cfg.set(prefix + "last_channels", last_channels);
    cfg.set(prefix + "block_kernel", block_kernel);
}

Index seg_head_params() { return kEncodingWidth * kWindow + kWindow; }

namespace {

Index conv_bn(Index in, Index out, Index kernel) { return kernel * in * out + out + 2 * out; }

Index count_base(const SegModelConfig& c) {
    const auto widths = c.stage_channels();
    Index total = conv_bn(6, widths.front(), c.first_kernel);
    Index in = widths.front();
    for (const Index w : widths) {
        for (int b = 0; b < c.blocks_per_stage; ++b) {
            const Index stride = b == 0 ? 2 : 1;
            total += conv_bn(in, w, c.block_kernel);
            if (in != w || stride != 1) total += conv_bn(in, w, 1);
            in = w;
        }
    }
    return total;
}

}  // namespace

Index count_seg_params(const SegModelConfig& config) {
    config.validate();
    return count_base(config) + seg_head_params();
}

SegConfigSearch recover_seg_config(Index target_base) {
    SegConfigSearch search;
    bool have_closest = false;
    for (int stages = 4; stages <= 8; ++stages) {
        for (int blocks = 1; blocks <= 2; ++blocks) {
            for (int first = 64; first <= 256; ++first) {
                for (int kernel : {3, 5, 7}) {
                    ++search.grid_size;
                    SegModelConfig c;
                    c.stages = stages;
                    c.blocks_per_stage = blocks;
                    c.first_channels = first;
                    c.first_kernel = kernel;
                    SegConfigMatch m{c, count_base(c), 0};
                    m.delta = m.params - target_base;
                    if (m.delta == 0) search.exact.push_back(m);
                    if (std::abs(m.delta) * 100 <= target_base) search.within_one_percent.push_back(m);
                    if (!have_closest || std::abs(m.delta) < std::abs(search.closest.delta)) {
                        search.closest = m;
                        have_closest = true;
                    }
                }
            }
        }
    }
    std::stable_sort(search.within_one_percent.begin(), search.within_one_percent.end(),
                     [](const auto& a, const auto& b) { return std::abs(a.delta) < std::abs(b.delta); });
    return search;
}

void ClsModelConfig::validate() const {
    if (skip_channels < 1 || skip_kernel < 1 || skip_kernel % 2 == 0 || projection < 1 || lstm_layers < 1 ||
        lstm_hidden < 1) {
        throw ValidationError("invalid classifier config");
    }
}

ClsModelConfig ClsModelConfig::from_config(const KeyValueConfig& cfg, const std::string& prefix) {
    ClsModelConfig c;
    c.skip_channels = static_cast<int>(cfg.get_int(prefix + "skip_channels", c.skip_channels));
    c.skip_kernel = static_cast<int>(cfg.get_int(prefix + "skip_kernel", c.skip_kernel));
    c.projection = static_cast<int>(cfg.get_int(prefix + "projection", c.projection));
    c.lstm_layers = static_cast<int>(cfg.get_int(prefix + "lstm_layers", c.lstm_layers));
    c.lstm_hidden = static_cast<int>(cfg.get_int(prefix + "lstm_hidden", c.lstm_hidden));
    c.validate();
    return c;
}

void ClsModelConfig::to_config(KeyValueConfig& cfg, const std::string& prefix) const {
    cfg.set(prefix + "skip_channels", skip_channels);
    cfg.set(prefix + "skip_kernel", skip_kernel);
    cfg.set(prefix + "projection", projection);
    cfg.set(prefix + "lstm_layers", lstm_layers);
    cfg.set(prefix + "lstm_hidden", lstm_hidden);
}

Index count_cls_trainable_params(const ClsModelConfig& c) {
    const Index skip = 6 * c.skip_kernel * c.skip_channels + c.skip_channels;
    const Index skip_bn = 2 * c.skip_channels;
    const Index projection = c.feature_width() * c.projection + c.projection;
    const nn::LstmSpec lstm{c.projection, c.lstm_hidden, c.lstm_layers};
    const Index head = c.lstm_hidden + 1;
    return skip + skip_bn + projection + lstm.parameter_count() + head;
}

std::vector<Index> extract_rep_markers(std::span<const float> confidences, const MarkerParams& params) {
    if (params.smooth_width < 1) throw ValidationError("smoothing width must be positive");
    const auto n = static_cast<Index>(confidences.size());
    std::vector<std::uint8_t> binary(confidences.size());
    for (std::size_t i = 0; i < confidences.size(); ++i) binary[i] = confidences[i] >= params.threshold ? 1 : 0;

    const Index before = (params.smooth_width - 1) / 2;
    const Index after = params.smooth_width - 1 - before;
    std::vector<std::uint8_t> smooth(binary.size());
    for (Index i = 0; i < n; ++i) {
        const Index lo = std::max<Index>(0, i - before);
        const Index hi = std::min<Index>(n - 1, i + after);
        Index ones = 0;
        for (Index j = lo; j <= hi; ++j) ones += binary[static_cast<std::size_t>(j)];
        smooth[static_cast<std::size_t>(i)] = 2 * ones > hi - lo + 1 ? 1 : 0;
    }

    std::vector<Index> markers;
    Index i = 0;
    while (i < n) {
        if (!smooth[static_cast<std::size_t>(i)]) {
            ++i;
            continue;
        }
        Index j = i;
        while (j + 1 < n && smooth[static_cast<std::size_t>(j + 1)]) ++j;
        markers.push_back((i + j) / 2);
        i = j + 1;
    }
    return markers;
}

std::vector<float> time_in_rep(std::span<const Index> markers, Index window) {
    for (std::size_t k = 0; k < markers.size(); ++k) {
        if (markers[k] < 0 || markers[k] >= window) throw ValidationError("marker outside the window");
        if (k > 0 && markers[k] <= markers[k - 1]) throw ValidationError("markers must be sorted");
    }
    std::vector<float> out(static_cast<std::size_t>(window));
    std::size_t next = 0;
    Index last = 0;
    for (Index i = 0; i < window; ++i) {
        while (next < markers.size() && markers[next] <= i) last = markers[next++];
        out[static_cast<std::size_t>(i)] = static_cast<float>(static_cast<double>(i - last) / kSampleRate);
    }
    return out;
}

PipelineFile load_pipeline(const std::filesystem::path& path) {
    auto weights = load_weights(path);
    const auto meta = KeyValueConfig::parse(weights.metadata);
    PipelineFile f;
    f.seg_config = SegModelConfig::from_config(meta);
    if (meta.get("kind", "") == "classification") f.cls_config = ClsModelConfig::from_config(meta);
    f.weights = std::move(weights);
    return f;
}

void save_pipeline(const PipelineFile& file, const std::filesystem::path& path) {
    KeyValueConfig meta;
    meta.set("kind", file.cls_config ? "classification" : "segmentation");
    file.seg_config.to_config(meta);
    if (file.cls_config) file.cls_config->to_config(meta);
    ModelWeights w = file.weights;
    w.metadata = meta.to_string();
    save_weights(w, path);
}

}  // namespace repcoach
