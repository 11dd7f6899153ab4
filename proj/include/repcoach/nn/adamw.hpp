#pragma once

#include "repcoach/nn/tensor.hpp"

#include <cmath>

namespace repcoach::nn {

struct AdamWOptions {
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename Scalar>
struct AdamWMoments {
    Matrix<Scalar> m, v;
};

/// One decoupled-weight-decay Adam update; `step` is 1-based.
template <typename Scalar>
void adamw_step(Matrix<Scalar>& param, const Matrix<Scalar>& grad, AdamWMoments<Scalar>& state,
                const AdamWOptions& opt, long step) {
    if (state.m.size() == 0) {
        state.m = Matrix<Scalar>::Zero(param.rows(), param.cols());
        state.v = Matrix<Scalar>::Zero(param.rows(), param.cols());
    }
    if (grad.rows() != param.rows() || grad.cols() != param.cols()) throw ValidationError("adamw: gradient shape mismatch");
    const auto lr = static_cast<Scalar>(opt.lr);
    const auto b1 = static_cast<Scalar>(opt.beta1);
    const auto b2 = static_cast<Scalar>(opt.beta2);
    param *= Scalar(1) - lr * static_cast<Scalar>(opt.weight_decay);
    state.m = b1 * state.m + (Scalar(1) - b1) * grad;
    state.v = b2 * state.v + (Scalar(1) - b2) * grad.cwiseAbs2();
    const auto c1 = static_cast<Scalar>(1.0 - std::pow(opt.beta1, static_cast<double>(step)));
    const auto c2 = static_cast<Scalar>(1.0 - std::pow(opt.beta2, static_cast<double>(step)));
    param.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + static_cast<Scalar>(opt.eps));
}

/// Optimizer over a fixed parameter list. Frozen parameters and buffers are never touched.
template <typename Scalar>
class AdamW {
public:
    AdamW(ParameterList<Scalar> params, AdamWOptions options) : params_(std::move(params)), options_(options) {
        moments_.resize(params_.size());
    }

    void step() {
        ++steps_;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto* p = params_[i];
            if (!p->trainable()) continue;
            adamw_step(p->value, p->grad, moments_[i], options_, steps_);
        }
    }

    void zero_grad() { nn::zero_grad(params_); }
    long steps() const { return steps_; }
    AdamWOptions& options() { return options_; }

private:
    ParameterList<Scalar> params_;
    AdamWOptions options_;
    std::vector<AdamWMoments<Scalar>> moments_;
    long steps_ = 0;
};

}  // namespace repcoach::nn
