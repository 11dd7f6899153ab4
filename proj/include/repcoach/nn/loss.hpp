#pragma once

#include "repcoach/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace repcoach::nn {

inline constexpr double kProbabilityClamp = 1e-7;

template <typename Scalar>
struct LossResult {
    Scalar value = 0;
    Matrix<Scalar> grad;  // d loss / d prediction
};

namespace detail {

template <typename Scalar>
void check_shapes(const Matrix<Scalar>& pred, const Matrix<Scalar>& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.size() == 0) {
        throw ValidationError("loss: prediction and target shapes differ");
    }
}

}  // namespace detail

/// Per-window objective averaged over the batch: alpha · mean BCE + (1 - alpha) · mean squared
/// error, both over the points of a window. Columns are windows, rows are points. Predictions are
/// confidences, clamped to [1e-7, 1 - 1e-7] for the logarithms (zero gradient where clamped).
template <typename Scalar>
LossResult<Scalar> combined_seg_loss(const Matrix<Scalar>& pred, const Matrix<Scalar>& target, double alpha = 0.8) {
    detail::check_shapes(pred, target);
    if (alpha < 0.0 || alpha > 1.0) throw ValidationError("loss: alpha must lie in [0, 1]");
    const auto lo = static_cast<Scalar>(kProbabilityClamp);
    const auto hi = static_cast<Scalar>(1.0 - kProbabilityClamp);
    const auto a = static_cast<Scalar>(alpha);
    const auto scale = Scalar(1) / static_cast<Scalar>(pred.size());  // 1 / (N · points)

    LossResult<Scalar> r;
    r.grad.resize(pred.rows(), pred.cols());
    Scalar total = 0;
    for (Index i = 0; i < pred.size(); ++i) {
        const Scalar raw = pred.data()[i];
        const Scalar p = std::clamp(raw, lo, hi);
        const Scalar y = target.data()[i];
        const Scalar bce = -(y * std::log(p) + (Scalar(1) - y) * std::log(Scalar(1) - p));
        const Scalar diff = raw - y;
        total += a * bce + (Scalar(1) - a) * diff * diff;
        const Scalar dbce = (raw > lo && raw < hi) ? (-y / p + (Scalar(1) - y) / (Scalar(1) - p)) : Scalar(0);
        r.grad.data()[i] = scale * (a * dbce + (Scalar(1) - a) * Scalar(2) * diff);
    }
    r.value = total * scale;
    return r;
}

/// Mean binary cross entropy over all elements.
template <typename Scalar>
LossResult<Scalar> bce_loss(const Matrix<Scalar>& pred, const Matrix<Scalar>& target) {
    return combined_seg_loss(pred, target, 1.0);
}

/// Mean squared error over all elements.
template <typename Scalar>
LossResult<Scalar> mse_loss(const Matrix<Scalar>& pred, const Matrix<Scalar>& target) {
    detail::check_shapes(pred, target);
    const Matrix<Scalar> diff = pred - target;
    const auto scale = Scalar(1) / static_cast<Scalar>(pred.size());
    return {diff.squaredNorm() * scale, diff * (Scalar(2) * scale)};
}

}  // namespace repcoach::nn
