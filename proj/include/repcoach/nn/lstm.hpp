#pragma once

#include "repcoach/nn/layers.hpp"
#include "repcoach/nn/tensor.hpp"

#include <vector>

namespace repcoach::nn {

struct LstmSpec {
    Index input = 256;
    Index hidden = 256;
    Index layers = 4;

    /// 4h(in + h) + 8h per layer: input and recurrent weights plus two bias vectors.
    Index layer_parameter_count(Index layer) const {
        const Index in = layer == 0 ? input : hidden;
        return 4 * hidden * (in + hidden) + 8 * hidden;
    }
    Index parameter_count() const {
        Index total = 0;
        for (Index l = 0; l < layers; ++l) total += layer_parameter_count(l);
        return total;
    }
};

/// Hidden and cell state per layer, each hidden × batch.
template <typename Scalar>
struct LstmState {
    std::vector<Matrix<Scalar>> h, c;

    static LstmState zeros(const LstmSpec& spec, Index batch) {
        LstmState s;
        for (Index l = 0; l < spec.layers; ++l) {
            s.h.push_back(Matrix<Scalar>::Zero(spec.hidden, batch));
            s.c.push_back(Matrix<Scalar>::Zero(spec.hidden, batch));
        }
        return s;
    }
};

template <typename Scalar>
struct LstmOutput {
    std::vector<Matrix<Scalar>> hidden;  // top-layer hidden state per time step, hidden × batch
    LstmState<Scalar> final;
};

/// Unidirectional stacked LSTM with gate order (i, f, g, o) and separate input/recurrent biases.
/// Every time step is evaluated with the same per-step products, so running a sequence in one call
/// and stepping it with carried state give bit-identical results.
template <typename Scalar>
class Lstm {
public:
    struct Layer {
        Parameter<Scalar> weight_ih, weight_hh, bias_ih, bias_hh;
    };

    Lstm() = default;
    Lstm(const std::string& name, const LstmSpec& spec) : spec_(spec) {
        const Index g = 4 * spec.hidden;
        for (Index l = 0; l < spec.layers; ++l) {
            const Index in = l == 0 ? spec.input : spec.hidden;
            const std::string p = name + ".l" + std::to_string(l);
            layers_.push_back(Layer{Parameter<Scalar>(p + ".weight_ih", {g, in}, g, in),
                                    Parameter<Scalar>(p + ".weight_hh", {g, spec.hidden}, g, spec.hidden),
                                    Parameter<Scalar>(p + ".bias_ih", {g}, g, 1),
                                    Parameter<Scalar>(p + ".bias_hh", {g}, g, 1)});
        }
    }

    const LstmSpec& spec() const { return spec_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.hidden));
        for (auto& layer : layers_) {
            for (auto* p : {&layer.weight_ih, &layer.weight_hh, &layer.bias_ih, &layer.bias_hh}) {
                for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
            }
        }
    }

    /// One step of one layer: returns the gate activations (4h × batch) and updates h, c in place.
    static Matrix<Scalar> cell(const Layer& layer, const Matrix<Scalar>& x, Matrix<Scalar>& h, Matrix<Scalar>& c) {
        const Index hs = h.rows();
        Matrix<Scalar> z = layer.weight_ih.value * x;
        z.noalias() += layer.weight_hh.value * h;
        z.colwise() += layer.bias_ih.value.col(0) + layer.bias_hh.value.col(0);
        z.topRows(2 * hs) = sigmoid(z.topRows(2 * hs));
        z.middleRows(2 * hs, hs) = z.middleRows(2 * hs, hs).array().tanh().matrix();
        z.bottomRows(hs) = sigmoid(z.bottomRows(hs));
        c = z.topRows(hs).cwiseProduct(z.middleRows(2 * hs, hs)) + z.middleRows(hs, hs).cwiseProduct(c);
        h = z.bottomRows(hs).cwiseProduct(c.array().tanh().matrix());
        return z;
    }

    LstmOutput<Scalar> infer(const std::vector<Matrix<Scalar>>& xs, const LstmState<Scalar>* initial = nullptr) const {
        check(xs, initial);
        const Index batch = xs.front().cols();
        LstmOutput<Scalar> out;
        out.final = initial ? *initial : LstmState<Scalar>::zeros(spec_, batch);
        for (const auto& x : xs) {
            Matrix<Scalar> input = x;
            for (std::size_t l = 0; l < layers_.size(); ++l) {
                cell(layers_[l], input, out.final.h[l], out.final.c[l]);
                input = out.final.h[l];
            }
            out.hidden.push_back(std::move(input));
        }
        return out;
    }

    /// Records everything backward() needs.
    LstmOutput<Scalar> forward(const std::vector<Matrix<Scalar>>& xs, const LstmState<Scalar>* initial = nullptr) {
        check(xs, initial);
        const Index batch = xs.front().cols();
        const auto steps = xs.size();
        LstmOutput<Scalar> out;
        out.final = initial ? *initial : LstmState<Scalar>::zeros(spec_, batch);
        tape_.assign(layers_.size(), {});
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            tape_[l].h0 = out.final.h[l];
            tape_[l].c0 = out.final.c[l];
        }
        std::vector<Matrix<Scalar>> inputs = xs;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            auto& rec = tape_[l];
            rec.x = inputs;
            for (std::size_t t = 0; t < steps; ++t) {
                rec.gates.push_back(cell(layers_[l], inputs[t], out.final.h[l], out.final.c[l]));
                rec.c.push_back(out.final.c[l]);
                rec.h.push_back(out.final.h[l]);
            }
            inputs = rec.h;
        }
        out.hidden = inputs;
        return out;
    }

    /// Gradient of the loss w.r.t. the inputs, given the gradient w.r.t. every top-layer hidden state.
    /// Gradients flowing into the final state are taken as zero.
    std::vector<Matrix<Scalar>> backward(const std::vector<Matrix<Scalar>>& d_hidden) {
        if (tape_.empty()) throw StateError("lstm: backward before forward");
        const Index hs = spec_.hidden;
        std::vector<Matrix<Scalar>> upstream = d_hidden;
        for (std::size_t li = layers_.size(); li-- > 0;) {
            auto& layer = layers_[li];
            const auto& rec = tape_[li];
            const std::size_t steps = rec.x.size();
            if (upstream.size() != steps) throw ValidationError("lstm: gradient sequence length mismatch");
            const Index batch = rec.h0.cols();
            Matrix<Scalar> dh_next = Matrix<Scalar>::Zero(hs, batch);
            Matrix<Scalar> dc_next = Matrix<Scalar>::Zero(hs, batch);
            std::vector<Matrix<Scalar>> dx(steps);
            for (std::size_t t = steps; t-- > 0;) {
                const auto& z = rec.gates[t];
                const auto i = z.topRows(hs).array();
                const auto f = z.middleRows(hs, hs).array();
                const auto g = z.middleRows(2 * hs, hs).array();
                const auto o = z.bottomRows(hs).array();
                const Matrix<Scalar>& c_prev = t > 0 ? rec.c[t - 1] : rec.c0;
                const Matrix<Scalar>& h_prev = t > 0 ? rec.h[t - 1] : rec.h0;
                const Matrix<Scalar> tc = rec.c[t].array().tanh().matrix();

                const Matrix<Scalar> dh = upstream[t] + dh_next;
                const Matrix<Scalar> dc =
                    (dh.array() * o * (Scalar(1) - tc.array().square())).matrix() + dc_next;
                Matrix<Scalar> dz(4 * hs, batch);
                dz.topRows(hs) = (dc.array() * g * i * (Scalar(1) - i)).matrix();
                dz.middleRows(hs, hs) = (dc.array() * c_prev.array() * f * (Scalar(1) - f)).matrix();
                dz.middleRows(2 * hs, hs) = (dc.array() * i * (Scalar(1) - g.square())).matrix();
                dz.bottomRows(hs) = (dh.array() * tc.array() * o * (Scalar(1) - o)).matrix();
                dc_next = (dc.array() * f).matrix();

                if (!layer.weight_ih.frozen) layer.weight_ih.grad.noalias() += dz * rec.x[t].transpose();
                if (!layer.weight_hh.frozen) layer.weight_hh.grad.noalias() += dz * h_prev.transpose();
                const Vector<Scalar> db = dz.rowwise().sum();
                if (!layer.bias_ih.frozen) layer.bias_ih.grad.col(0) += db;
                if (!layer.bias_hh.frozen) layer.bias_hh.grad.col(0) += db;
                dh_next = layer.weight_hh.value.transpose() * dz;
                dx[t] = layer.weight_ih.value.transpose() * dz;
            }
            upstream = std::move(dx);
        }
        return upstream;
    }

    void collect(ParameterList<Scalar>& out) {
        for (auto& layer : layers_) {
            out.push_back(&layer.weight_ih);
            out.push_back(&layer.weight_hh);
            out.push_back(&layer.bias_ih);
            out.push_back(&layer.bias_hh);
        }
    }

private:
    struct Tape {
        std::vector<Matrix<Scalar>> x, gates, c, h;
        Matrix<Scalar> h0, c0;
    };

    void check(const std::vector<Matrix<Scalar>>& xs, const LstmState<Scalar>* initial) const {
        if (xs.empty()) throw ValidationError("lstm: empty sequence");
        const Index batch = xs.front().cols();
        for (const auto& x : xs) {
            if (x.rows() != spec_.input || x.cols() != batch) throw ValidationError("lstm: input shape mismatch");
        }
        if (initial && (initial->h.size() != layers_.size() || initial->h.front().cols() != batch)) {
            throw ValidationError("lstm: initial state shape mismatch");
        }
    }

    LstmSpec spec_;
    std::vector<Layer> layers_;
    std::vector<Tape> tape_;
};

}  // namespace repcoach::nn
