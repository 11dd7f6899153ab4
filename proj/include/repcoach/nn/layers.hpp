#pragma once

#include "repcoach/nn/tensor.hpp"
#include "repcoach/rng.hpp"

#include <cmath>
#include <string>

namespace repcoach::nn {

// ---------------------------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------------------------

struct Conv1dSpec {
    Index in_channels = 1;
    Index out_channels = 1;
    Index kernel = 3;
    Index stride = 1;
    Index padding = -1;  // negative selects kernel / 2
    bool bias = true;

    Index pad() const { return padding < 0 ? kernel / 2 : padding; }
    Index output_length(Index length) const { return (length + 2 * pad() - kernel) / stride + 1; }
    Index parameter_count() const { return out_channels * in_channels * kernel + (bias ? out_channels : 0); }

    void validate() const {
        if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1) {
            throw ValidationError("invalid convolution spec");
        }
    }
};

/// Unfolds a signal so that convolution becomes one matrix product. Row k * C + c of column
/// n * L_out + o holds input channel c at position o * stride + k - pad (zero outside).
template <typename Scalar>
Matrix<Scalar> im2col(const Signal<Scalar>& x, const Conv1dSpec& spec) {
    const Index channels = x.channels();
    const Index length = x.length;
    const Index out_length = spec.output_length(length);
    const Index kernel = spec.kernel;
    const Index pad = spec.pad();
    Matrix<Scalar> col = Matrix<Scalar>::Zero(kernel * channels, x.batch * out_length);
    for (Index n = 0; n < x.batch; ++n) {
        for (Index o = 0; o < out_length; ++o) {
            const Index c = n * out_length + o;
            for (Index k = 0; k < kernel; ++k) {
                const Index src = o * spec.stride + k - pad;
                if (src < 0 || src >= length) continue;
                col.col(c).segment(k * channels, channels) = x.data.col(n * length + src);
            }
        }
    }
    return col;
}

/// Adjoint of im2col: scatters column gradients back onto the input positions.
template <typename Scalar>
Signal<Scalar> col2im(const Matrix<Scalar>& dcol, const Conv1dSpec& spec, Index batch, Index length) {
    const Index channels = spec.in_channels;
    const Index out_length = spec.output_length(length);
    const Index pad = spec.pad();
    Signal<Scalar> dx(Matrix<Scalar>::Zero(channels, batch * length), batch, length);
    for (Index n = 0; n < batch; ++n) {
        for (Index o = 0; o < out_length; ++o) {
            const Index c = n * out_length + o;
            for (Index k = 0; k < spec.kernel; ++k) {
                const Index src = o * spec.stride + k - pad;
                if (src < 0 || src >= length) continue;
                dx.data.col(n * length + src) += dcol.col(c).segment(k * channels, channels);
            }
        }
    }
    return dx;
}

/// Cross-correlation with zero padding. `weight` is out × (kernel · in) in (out, kernel, in) order.
template <typename Scalar>
Signal<Scalar> conv1d_forward(const Signal<Scalar>& x, const Conv1dSpec& spec, const Matrix<Scalar>& weight,
                              const Matrix<Scalar>& bias) {
    if (x.channels() != spec.in_channels) throw ValidationError("conv1d: input channel mismatch");
    if (x.length < 1 || spec.output_length(x.length) < 1) throw ValidationError("conv1d: input too short");
    const Matrix<Scalar> col = im2col(x, spec);
    Signal<Scalar> y(weight * col, x.batch, spec.output_length(x.length));
    if (spec.bias) y.data.colwise() += bias.col(0);
    return y;
}

template <typename Scalar>
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(const std::string& name, const Conv1dSpec& spec)
        : weight(name + ".weight", {spec.out_channels, spec.kernel, spec.in_channels}, spec.out_channels,
                 spec.kernel * spec.in_channels),
          bias(name + ".bias", {spec.out_channels}, spec.out_channels, 1),
          spec_(spec) {
        spec.validate();
    }

    const Conv1dSpec& spec() const { return spec_; }

    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.in_channels * spec_.kernel));
        for (Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
        for (Index i = 0; i < bias.value.size(); ++i) bias.value.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    }

    Signal<Scalar> forward(const Signal<Scalar>& x) {
        if (x.channels() != spec_.in_channels) throw ValidationError("conv1d: input channel mismatch");
        col_ = im2col(x, spec_);
        batch_ = x.batch;
        length_ = x.length;
        Signal<Scalar> y(weight.value * col_, x.batch, spec_.output_length(x.length));
        if (spec_.bias) y.data.colwise() += bias.value.col(0);
        return y;
    }

    Signal<Scalar> infer(const Signal<Scalar>& x) const { return conv1d_forward(x, spec_, weight.value, bias.value); }

    Signal<Scalar> backward(const Signal<Scalar>& dy) {
        if (col_.size() == 0) throw StateError("conv1d: backward before forward");
        if (!weight.frozen) weight.grad.noalias() += dy.data * col_.transpose();
        if (spec_.bias && !bias.frozen) bias.grad.col(0) += dy.data.rowwise().sum();
        const Matrix<Scalar> dcol = weight.value.transpose() * dy.data;
        return col2im(dcol, spec_, batch_, length_);
    }

    void collect(ParameterList<Scalar>& out) {
        out.push_back(&weight);
        if (spec_.bias) out.push_back(&bias);
    }

    Parameter<Scalar> weight;
    Parameter<Scalar> bias;

private:
    Conv1dSpec spec_;
    Matrix<Scalar> col_;
    Index batch_ = 0, length_ = 0;
};

// ---------------------------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------------------------

struct BatchNormSpec {
    Index channels = 1;
    double eps = 1e-5;
    double momentum = 0.1;
};

/// Per-channel normalization over (batch, length). Train mode uses batch statistics and updates the
/// running estimates (unbiased variance); eval mode uses the running estimates.
template <typename Scalar>
class BatchNorm1d {
public:
    BatchNorm1d() = default;
    BatchNorm1d(const std::string& name, const BatchNormSpec& spec)
        : gamma(name + ".gamma", {spec.channels}, spec.channels, 1),
          beta(name + ".beta", {spec.channels}, spec.channels, 1),
          running_mean(name + ".running_mean", {spec.channels}, spec.channels, 1, Parameter<Scalar>::Kind::buffer),
          running_var(name + ".running_var", {spec.channels}, spec.channels, 1, Parameter<Scalar>::Kind::buffer),
          spec_(spec) {
        gamma.value.setOnes();
        running_var.value.setOnes();
    }

    const BatchNormSpec& spec() const { return spec_; }

    Signal<Scalar> forward(const Signal<Scalar>& x, Mode mode) {
        check(x);
        mode_ = mode;
        batch_ = x.batch;
        length_ = x.length;
        if (mode == Mode::eval) {
            inv_std_ = (running_var.value.col(0).array() + static_cast<Scalar>(spec_.eps)).rsqrt().matrix();
            return infer(x);
        }
        const Index m = x.data.cols();
        if (m == 0) throw ValidationError("batchnorm: empty batch in train mode");
        const Vector<Scalar> mean = x.data.rowwise().mean();
        xhat_ = x.data.colwise() - mean;
        const Vector<Scalar> var = xhat_.array().square().rowwise().mean().matrix();
        inv_std_ = (var.array() + static_cast<Scalar>(spec_.eps)).rsqrt().matrix();
        xhat_ = inv_std_.asDiagonal() * xhat_;
        const auto mom = static_cast<Scalar>(spec_.momentum);
        running_mean.value.col(0) = (Scalar(1) - mom) * running_mean.value.col(0) + mom * mean;
        const Scalar unbias = m > 1 ? static_cast<Scalar>(m) / static_cast<Scalar>(m - 1) : Scalar(1);
        running_var.value.col(0) = (Scalar(1) - mom) * running_var.value.col(0) + mom * unbias * var;
        Signal<Scalar> y(gamma.value.col(0).asDiagonal() * xhat_, x.batch, x.length);
        y.data.colwise() += beta.value.col(0);
        return y;
    }

    Signal<Scalar> infer(const Signal<Scalar>& x) const {
        check(x);
        const Vector<Scalar> inv_std = (running_var.value.col(0).array() + static_cast<Scalar>(spec_.eps)).rsqrt().matrix();
        const Vector<Scalar> scale = gamma.value.col(0).cwiseProduct(inv_std);
        const Vector<Scalar> shift = beta.value.col(0) - scale.cwiseProduct(running_mean.value.col(0));
        Signal<Scalar> y(scale.asDiagonal() * x.data, x.batch, x.length);
        y.data.colwise() += shift;
        return y;
    }

    Signal<Scalar> backward(const Signal<Scalar>& dy) {
        if (inv_std_.size() == 0) throw StateError("batchnorm: backward before forward");
        if (mode_ == Mode::eval) {
            return Signal<Scalar>(gamma.value.col(0).cwiseProduct(inv_std_).asDiagonal() * dy.data, batch_, length_);
        }
        if (!gamma.frozen) gamma.grad.col(0) += dy.data.cwiseProduct(xhat_).rowwise().sum();
        if (!beta.frozen) beta.grad.col(0) += dy.data.rowwise().sum();
        const auto m = static_cast<Scalar>(dy.data.cols());
        const Matrix<Scalar> dxhat = gamma.value.col(0).asDiagonal() * dy.data;
        const Vector<Scalar> sum_dxhat = dxhat.rowwise().sum();
        const Vector<Scalar> sum_dxhat_xhat = dxhat.cwiseProduct(xhat_).rowwise().sum();
        Matrix<Scalar> dx = (dxhat * m).colwise() - sum_dxhat;
        dx -= sum_dxhat_xhat.asDiagonal() * xhat_;
        dx = (inv_std_ / m).asDiagonal() * dx;
        return Signal<Scalar>(std::move(dx), batch_, length_);
    }

    void collect(ParameterList<Scalar>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
        out.push_back(&running_mean);
        out.push_back(&running_var);
    }

    Parameter<Scalar> gamma, beta, running_mean, running_var;

private:
    void check(const Signal<Scalar>& x) const {
        if (x.channels() != spec_.channels) throw ValidationError("batchnorm: channel mismatch");
    }

    BatchNormSpec spec_;
    Mode mode_ = Mode::eval;
    Matrix<Scalar> xhat_;
    Vector<Scalar> inv_std_;
    Index batch_ = 0, length_ = 0;
};

// ---------------------------------------------------------------------------------------------
// Affine layer: features are rows, batch elements are columns.
// ---------------------------------------------------------------------------------------------

template <typename Scalar>
Matrix<Scalar> linear_forward(const Matrix<Scalar>& x, const Matrix<Scalar>& weight, const Matrix<Scalar>& bias) {
    if (x.rows() != weight.cols()) throw ValidationError("linear: feature mismatch");
    Matrix<Scalar> y = weight * x;
    y.colwise() += bias.col(0);
    return y;
}

template <typename Scalar>
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, Index in_features, Index out_features)
        : weight(name + ".weight", {out_features, in_features}, out_features, in_features),
          bias(name + ".bias", {out_features}, out_features, 1) {}

    Index in_features() const { return weight.value.cols(); }
    Index out_features() const { return weight.value.rows(); }
    Index parameter_count() const { return weight.size() + bias.size(); }

    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_features()));
        for (Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
        for (Index i = 0; i < bias.value.size(); ++i) bias.value.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    }

    Matrix<Scalar> forward(const Matrix<Scalar>& x) {
        input_ = x;
        return linear_forward(x, weight.value, bias.value);
    }
    Matrix<Scalar> infer(const Matrix<Scalar>& x) const { return linear_forward(x, weight.value, bias.value); }

    Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
        if (input_.size() == 0) throw StateError("linear: backward before forward");
        if (!weight.frozen) weight.grad.noalias() += dy * input_.transpose();
        if (!bias.frozen) bias.grad.col(0) += dy.rowwise().sum();
        return weight.value.transpose() * dy;
    }

    void collect(ParameterList<Scalar>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

    Parameter<Scalar> weight, bias;

private:
    Matrix<Scalar> input_;
};

// ---------------------------------------------------------------------------------------------
// Pooling and activations
// ---------------------------------------------------------------------------------------------

/// Mean over the length axis: channels × batch.
template <typename Scalar>
Matrix<Scalar> global_avg_pool(const Signal<Scalar>& x) {
    if (x.length < 1) throw ValidationError("global average pool: empty length");
    Matrix<Scalar> out(x.channels(), x.batch);
    for (Index n = 0; n < x.batch; ++n) out.col(n) = x.element(n).rowwise().mean();
    return out;
}

template <typename Scalar>
Signal<Scalar> global_avg_pool_backward(const Matrix<Scalar>& dy, Index length) {
    Signal<Scalar> dx(Matrix<Scalar>(dy.rows(), dy.cols() * length), dy.cols(), length);
    const Scalar scale = Scalar(1) / static_cast<Scalar>(length);
    for (Index n = 0; n < dy.cols(); ++n) dx.element(n) = (dy.col(n) * scale).replicate(1, length);
    return dx;
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(typename Derived::Scalar(0));
}

/// Gradient of relu given its output.
template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& y) {
    return (y.array() > Scalar(0)).select(dy, Scalar(0));
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
    using S = typename Derived::Scalar;
    return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

/// Gradient of sigmoid given its output.
template <typename Scalar>
Matrix<Scalar> sigmoid_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& y) {
    return (dy.array() * y.array() * (Scalar(1) - y.array())).matrix();
}

}  // namespace repcoach::nn
