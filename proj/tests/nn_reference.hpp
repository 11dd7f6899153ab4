#pragma once

// Naive reference implementations of the network layers and a small composed network used for
// finite-difference gradient checks. Shared by the unit tests and the acceptance runner.

#include "repcoach/models.hpp"
#include "repcoach/nn/layers.hpp"
#include "repcoach/nn/loss.hpp"
#include "repcoach/nn/lstm.hpp"
#include "repcoach/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace ref {

using repcoach::Rng;
using repcoach::nn::Index;
using Mat = repcoach::nn::Matrix<double>;

template <typename S>
repcoach::nn::Matrix<S> random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
    repcoach::nn::Matrix<S> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(scale * rng.normal());
    return m;
}

template <typename S>
repcoach::nn::Signal<S> random_signal(Rng& rng, Index channels, Index batch, Index length) {
    return repcoach::nn::Signal<S>(random_matrix<S>(rng, channels, batch * length), batch, length);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Direct triple loop: y[o, n, t] = b[o] + sum_{c, k} w[o, k, c] · x[c, n, t·stride + k − pad].
inline Mat conv1d(const Mat& x, Index batch, Index length, const repcoach::nn::Conv1dSpec& spec, const Mat& w,
                  const Mat& b) {
    const Index out_length = (length + 2 * spec.pad() - spec.kernel) / spec.stride + 1;
    Mat y = Mat::Zero(spec.out_channels, batch * out_length);
    for (Index n = 0; n < batch; ++n) {
        for (Index o = 0; o < spec.out_channels; ++o) {
            for (Index t = 0; t < out_length; ++t) {
                double acc = spec.bias ? b(o, 0) : 0.0;
                for (Index c = 0; c < spec.in_channels; ++c) {
                    for (Index k = 0; k < spec.kernel; ++k) {
                        const Index src = t * spec.stride + k - spec.pad();
                        if (src >= 0 && src < length) acc += w(o, k * spec.in_channels + c) * x(c, n * length + src);
                    }
                }
                y(o, n * out_length + t) = acc;
            }
        }
    }
    return y;
}

/// (x − μ)/√(σ² + eps)·γ + β per channel; batch statistics (biased variance) when `train`.
inline Mat batchnorm(const Mat& x, const Mat& gamma, const Mat& beta, const Mat& mean, const Mat& var, double eps,
                     bool train) {
    Mat y(x.rows(), x.cols());
    for (Index c = 0; c < x.rows(); ++c) {
        double mu = mean(c, 0), sigma2 = var(c, 0);
        if (train) {
            mu = 0.0;
            for (Index j = 0; j < x.cols(); ++j) mu += x(c, j);
            mu /= static_cast<double>(x.cols());
            sigma2 = 0.0;
            for (Index j = 0; j < x.cols(); ++j) sigma2 += (x(c, j) - mu) * (x(c, j) - mu);
            sigma2 /= static_cast<double>(x.cols());
        }
        for (Index j = 0; j < x.cols(); ++j) y(c, j) = (x(c, j) - mu) / std::sqrt(sigma2 + eps) * gamma(c, 0) + beta(c, 0);
    }
    return y;
}

/// Explicit dot products; features are rows.
inline Mat linear(const Mat& x, const Mat& w, const Mat& b) {
    Mat y(w.rows(), x.cols());
    for (Index n = 0; n < x.cols(); ++n) {
        for (Index g = 0; g < w.rows(); ++g) {
            double acc = b(g, 0);
            for (Index f = 0; f < w.cols(); ++f) acc += w(g, f) * x(f, n);
            y(g, n) = acc;
        }
    }
    return y;
}

inline Mat global_avg_pool(const Mat& x, Index batch, Index length) {
    Mat y(x.rows(), batch);
    for (Index c = 0; c < x.rows(); ++c) {
        for (Index n = 0; n < batch; ++n) {
            double acc = 0.0;
            for (Index t = 0; t < length; ++t) acc += x(c, n * length + t);
            y(c, n) = acc / static_cast<double>(length);
        }
    }
    return y;
}

struct LstmLayerRef {
    Mat w_ih, w_hh, b_ih, b_hh;
};

/// Scalar per-gate recurrence from zero state; returns the top-layer hidden state per step.
inline std::vector<Mat> lstm(const std::vector<Mat>& xs, const std::vector<LstmLayerRef>& layers, Index hidden) {
    const Index batch = xs.front().cols();
    std::vector<Mat> h(layers.size(), Mat::Zero(hidden, batch)), c(layers.size(), Mat::Zero(hidden, batch));
    std::vector<Mat> out;
    for (const auto& x : xs) {
        Mat input = x;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& L = layers[l];
            Mat h_new(hidden, batch), c_new(hidden, batch);
            for (Index n = 0; n < batch; ++n) {
                for (Index j = 0; j < hidden; ++j) {
                    double z[4];
                    for (int gate = 0; gate < 4; ++gate) {
                        const Index row = gate * hidden + j;
                        double acc = L.b_ih(row, 0) + L.b_hh(row, 0);
                        for (Index f = 0; f < input.rows(); ++f) acc += L.w_ih(row, f) * input(f, n);
                        for (Index f = 0; f < hidden; ++f) acc += L.w_hh(row, f) * h[l](f, n);
                        z[gate] = acc;
                    }
                    const double i = sigmoid(z[0]), f = sigmoid(z[1]), g = std::tanh(z[2]), o = sigmoid(z[3]);
                    c_new(j, n) = f * c[l](j, n) + i * g;
                    h_new(j, n) = o * std::tanh(c_new(j, n));
                }
            }
            h[l] = h_new;
            c[l] = c_new;
            input = h_new;
        }
        out.push_back(input);
    }
    return out;
}

template <typename S>
std::vector<LstmLayerRef> lstm_layers(const repcoach::nn::Lstm<S>& lstm) {
    std::vector<LstmLayerRef> out;
    for (const auto& l : lstm.layers()) {
        out.push_back({l.weight_ih.value.template cast<double>(), l.weight_hh.value.template cast<double>(),
                       l.bias_ih.value.template cast<double>(), l.bias_hh.value.template cast<double>()});
    }
    return out;
}

// --- finite differences ------------------------------------------------------------------------

struct GradCheck {
    Index checked = 0;
    double worst = 0.0;
    std::string worst_name;
};

/// |analytic − numeric| / max(|analytic| + |numeric|, floor), over every entry of every trainable
/// parameter, using central differences with step h. The floor sits above the rounding noise of
/// the difference quotient (about 1e-11 for an O(1) loss), so gradients that are exactly zero,
/// such as a bias followed by batch norm, compare as equal.
inline GradCheck finite_difference_check(const repcoach::nn::ParameterList<double>& params,
                                         const std::function<double()>& loss, double h = 1e-5,
                                         double floor = 1e-6) {
    GradCheck r;
    for (auto* p : params) {
        if (!p->trainable()) continue;
        for (Index i = 0; i < p->value.size(); ++i) {
            double& v = p->value.data()[i];
            const double saved = v;
            v = saved + h;
            const double up = loss();
            v = saved - h;
            const double down = loss();
            v = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p->grad.data()[i];
            const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
            ++r.checked;
            if (rel > r.worst) {
                r.worst = rel;
                r.worst_name = p->name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return r;
}

/// Miniature composed network: stem conv-BN-ReLU, a projected and an identity residual block,
/// GAP, a point head trained with the combined segmentation loss, and a projection feeding a
/// 2-layer LSTM whose per-step head is trained with BCE. Batch norm runs in train mode.
class MiniNet {
public:
    struct Shape {
        Index in_channels = 3, c1 = 4, c2 = 5, length = 12, batch = 2, points = 6;
        Index features = 3, hidden = 4, steps = 3, kernel = 3;
    };

    MiniNet(const Shape& s, std::uint64_t seed)
        : s_(s),
          stem_("mini.stem", {s.in_channels, s.c1, s.kernel, 1, -1, true}),
          stem_bn_("mini.stem_bn", {s.c1}),
          down_("mini.down", s.c1, s.c2, 2, 3),
          same_("mini.same", s.c2, s.c2, 1, 3),
          point_head_("mini.point_head", s.c2, s.points),
          proj_("mini.proj", s.c2, s.features),
          lstm_("mini.lstm", {s.features, s.hidden, 2}),
          step_head_("mini.step_head", s.hidden, 1) {
        Rng rng(seed);
        stem_.init(rng);
        down_.init(rng);
        same_.init(rng);
        point_head_.init(rng);
        proj_.init(rng);
        lstm_.init(rng);
        step_head_.init(rng);
        for (auto* p : parameters()) {
            if (p->kind == repcoach::nn::Parameter<double>::Kind::trainable && p->name.find("_bn") != std::string::npos) {
                for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += 0.2 * rng.normal();
            }
        }
        x_ = random_signal<double>(rng, s.in_channels, s.batch, s.length);
        point_target_ = Mat(s.points, s.batch);
        for (Index i = 0; i < point_target_.size(); ++i) point_target_.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
        for (Index t = 0; t < s.steps; ++t) extra_.push_back(random_matrix<double>(rng, s.features, s.batch, 0.5));
        step_target_ = Mat(1, s.steps * s.batch);
        for (Index i = 0; i < step_target_.size(); ++i) step_target_.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }

    repcoach::nn::ParameterList<double> parameters() {
        repcoach::nn::ParameterList<double> out;
        stem_.collect(out);
        stem_bn_.collect(out);
        down_.collect(out);
        same_.collect(out);
        point_head_.collect(out);
        proj_.collect(out);
        lstm_.collect(out);
        step_head_.collect(out);
        return out;
    }

    double loss() { return forward(false); }

    /// Loss value; fills the parameter gradients (after zeroing them).
    double loss_and_gradients() { return forward(true); }

private:
    double forward(bool backward) {
        using namespace repcoach::nn;
        auto h = stem_bn_.forward(stem_.forward(x_), Mode::train);
        h.data = relu(h.data);
        const Mat stem_act = h.data;
        h = down_.forward(h, Mode::train);
        h = same_.forward(h, Mode::train);
        const Index final_length = h.length;
        const Mat enc = global_avg_pool(h);

        const Mat conf = repcoach::nn::sigmoid(point_head_.forward(enc));
        const auto seg_loss = combined_seg_loss(conf, point_target_, 0.8);

        const Mat p = proj_.forward(enc);
        std::vector<Mat> xs;
        for (const auto& e : extra_) xs.push_back(p + e);
        const auto out = lstm_.forward(xs);
        Mat hidden(s_.hidden, s_.steps * s_.batch);
        for (Index t = 0; t < s_.steps; ++t) hidden.middleCols(t * s_.batch, s_.batch) = out.hidden[static_cast<std::size_t>(t)];
        const Mat step_conf = repcoach::nn::sigmoid(step_head_.forward(hidden));
        const auto cls_loss = bce_loss(step_conf, step_target_);
        if (!backward) return seg_loss.value + cls_loss.value;

        zero_grad(parameters());
        const Mat d_hidden = step_head_.backward(sigmoid_backward(cls_loss.grad, step_conf));
        std::vector<Mat> d_steps;
        for (Index t = 0; t < s_.steps; ++t) d_steps.push_back(d_hidden.middleCols(t * s_.batch, s_.batch));
        const auto dxs = lstm_.backward(d_steps);
        Mat dp = Mat::Zero(s_.features, s_.batch);
        for (const auto& d : dxs) dp += d;
        Mat denc = proj_.backward(dp);
        denc += point_head_.backward(sigmoid_backward(seg_loss.grad, conf));
        auto dh = global_avg_pool_backward<double>(denc, final_length);
        dh = same_.backward(dh);
        dh = down_.backward(dh);
        dh.data = relu_backward(dh.data, stem_act);
        stem_.backward(stem_bn_.backward(dh));
        return seg_loss.value + cls_loss.value;
    }

    Shape s_;
    repcoach::nn::Conv1d<double> stem_;
    repcoach::nn::BatchNorm1d<double> stem_bn_;
    repcoach::ResidualBlock<double> down_, same_;
    repcoach::nn::Linear<double> point_head_, proj_;
    repcoach::nn::Lstm<double> lstm_;
    repcoach::nn::Linear<double> step_head_;
    repcoach::nn::Signal<double> x_;
    Mat point_target_, step_target_;
    std::vector<Mat> extra_;
};

/// Random small shape for the composed network.
inline MiniNet::Shape random_mini_shape(Rng& rng) {
    MiniNet::Shape s;
    s.in_channels = 1 + static_cast<Index>(rng.index(4));
    s.c1 = 2 + static_cast<Index>(rng.index(4));
    s.c2 = s.c1 + 1 + static_cast<Index>(rng.index(3));
    s.length = 8 + static_cast<Index>(rng.index(9));
    s.batch = 2 + static_cast<Index>(rng.index(2));
    s.points = 2 + static_cast<Index>(rng.index(5));
    s.features = 2 + static_cast<Index>(rng.index(3));
    s.hidden = 2 + static_cast<Index>(rng.index(3));
    s.steps = 2 + static_cast<Index>(rng.index(3));
    s.kernel = 3 + 2 * static_cast<Index>(rng.index(2));
    return s;
}

// --- forward sweeps -----------------------------------------------------------------------------

/// Largest deviation |a − b| / max(1, |b|) of each 32-bit layer from its 64-bit naive reference
/// over `trials` random shapes. Outputs above 1 in magnitude are compared relatively, since a
/// 32-bit value near 8 is only resolved to about 1e-6.
struct ForwardSweep {
    double conv = 0, batchnorm_train = 0, batchnorm_eval = 0, linear = 0, gap = 0, lstm = 0;
};

inline ForwardSweep forward_sweep(std::uint64_t seed, int trials) {
    using namespace repcoach::nn;
    Rng rng(seed);
    ForwardSweep r;
    auto pick = [&](Index lo, Index hi) { return lo + static_cast<Index>(rng.index(static_cast<std::uint64_t>(hi - lo + 1))); };
    auto dev = [](const Matrix<float>& a, const Mat& b) {
        return ((a.cast<double>() - b).array().abs() / b.array().abs().max(1.0)).maxCoeff();
    };
    for (int trial = 0; trial < trials; ++trial) {
        {
            const Conv1dSpec spec{pick(1, 8), pick(1, 8), pick(1, 7), pick(1, 3), -1, rng.uniform() < 0.8};
            const Index batch = pick(1, 3), length = pick(spec.kernel, 40);
            Conv1d<float> conv("c", spec);
            conv.init(rng);
            const auto x = random_signal<float>(rng, spec.in_channels, batch, length);
            const auto y = conv.infer(x);
            const Mat b = spec.bias ? Mat(conv.bias.value.cast<double>()) : Mat(Mat::Zero(spec.out_channels, 1));
            r.conv = std::max(r.conv, dev(y.data, conv1d(x.data.cast<double>(), batch, length, spec, conv.weight.value.cast<double>(), b)));
        }
        {
            const Index channels = pick(1, 8), batch = pick(1, 4), length = pick(2, 40);
            BatchNorm1d<float> bn("bn", {channels});
            bn.gamma.value = random_matrix<float>(rng, channels, 1);
            bn.beta.value = random_matrix<float>(rng, channels, 1);
            const auto x = random_signal<float>(rng, channels, batch, length);
            const Mat xd = x.data.cast<double>();
            const auto y_train = bn.forward(x, Mode::train);
            r.batchnorm_train = std::max(r.batchnorm_train, dev(y_train.data, batchnorm(xd, bn.gamma.value.cast<double>(), bn.beta.value.cast<double>(), Mat(), Mat(), bn.spec().eps, true)));
            bn.running_mean.value = random_matrix<float>(rng, channels, 1);
            bn.running_var.value = random_matrix<float>(rng, channels, 1).cwiseAbs().array() + 0.1f;
            const auto y_eval = bn.forward(x, Mode::eval);
            r.batchnorm_eval = std::max(r.batchnorm_eval, dev(y_eval.data, batchnorm(xd, bn.gamma.value.cast<double>(), bn.beta.value.cast<double>(), bn.running_mean.value.cast<double>(), bn.running_var.value.cast<double>(), bn.spec().eps, false)));
        }
        {
            const Index in = pick(1, 16), out = pick(1, 16), batch = pick(1, 8);
            Linear<float> lin("l", in, out);
            lin.init(rng);
            const auto x = random_matrix<float>(rng, in, batch);
            r.linear = std::max(r.linear, dev(lin.infer(x), linear(x.cast<double>(), lin.weight.value.cast<double>(), lin.bias.value.cast<double>())));
        }
        {
            const Index channels = pick(1, 8), batch = pick(1, 4), length = pick(1, 64);
            const auto x = random_signal<float>(rng, channels, batch, length);
            r.gap = std::max(r.gap, dev(repcoach::nn::global_avg_pool(x), global_avg_pool(x.data.cast<double>(), batch, length)));
        }
        {
            const LstmSpec spec{pick(1, 6), pick(1, 6), pick(1, 3)};
            const Index batch = pick(1, 3), steps = pick(1, 6);
            Lstm<float> net("lstm", spec);
            net.init(rng);
            std::vector<Matrix<float>> xs;
            std::vector<Mat> xd;
            for (Index t = 0; t < steps; ++t) {
                xs.push_back(random_matrix<float>(rng, spec.input, batch));
                xd.push_back(xs.back().cast<double>());
            }
            const auto got = net.infer(xs);
            const auto want = lstm(xd, lstm_layers(net), spec.hidden);
            for (std::size_t t = 0; t < want.size(); ++t) r.lstm = std::max(r.lstm, dev(got.hidden[t], want[t]));
        }
    }
    return r;
}

}  // namespace ref
