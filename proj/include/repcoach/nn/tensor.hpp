#pragma once

#include "repcoach/errors.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace repcoach::nn {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

enum class Mode { train, eval };

/// A batch of multi-channel 1D signals. Rows are channels; column n * length + t holds
/// position t of batch element n.
template <typename Scalar>
struct Signal {
    Matrix<Scalar> data;
    Index batch = 0;
    Index length = 0;

    Signal() = default;
    Signal(Matrix<Scalar> d, Index n, Index l) : data(std::move(d)), batch(n), length(l) {
        if (data.cols() != n * l) throw ValidationError("signal columns do not match batch * length");
    }
    Index channels() const { return data.rows(); }

    /// Columns of batch element n.
    auto element(Index n) { return data.middleCols(n * length, length); }
    auto element(Index n) const { return data.middleCols(n * length, length); }
};

/// Named tensor owned by a layer. Trainable parameters carry a gradient; buffers (batch-norm
/// running statistics) do not. The value is stored as a matrix whose row-major flattening is the
/// row-major flattening of `shape`.
template <typename Scalar>
struct Parameter {
    enum class Kind { trainable, buffer };

    std::string name;
    std::vector<Index> shape;
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    Kind kind = Kind::trainable;
    bool frozen = false;

    Parameter() = default;
    Parameter(std::string n, std::vector<Index> s, Index rows, Index cols, Kind k = Kind::trainable)
        : name(std::move(n)), shape(std::move(s)), value(Matrix<Scalar>::Zero(rows, cols)), kind(k) {
        if (kind == Kind::trainable) grad = Matrix<Scalar>::Zero(rows, cols);
    }

    bool trainable() const { return kind == Kind::trainable && !frozen; }
    Index size() const { return value.size(); }
    void zero_grad() {
        if (kind == Kind::trainable) grad.setZero(value.rows(), value.cols());
    }
};

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>*>;

template <typename Scalar>
Index count_parameters(const ParameterList<Scalar>& params, bool trainable_only) {
    Index total = 0;
    for (const auto* p : params) {
        if (p->kind != Parameter<Scalar>::Kind::trainable) continue;
        if (trainable_only && p->frozen) continue;
        total += p->size();
    }
    return total;
}

template <typename Scalar>
void zero_grad(const ParameterList<Scalar>& params) {
    for (auto* p : params) p->zero_grad();
}

template <typename Derived>
void ensure_finite(const Eigen::MatrixBase<Derived>& m, const char* where) {
    if (!m.allFinite()) throw ValidationError(std::string("non-finite values in ") + where);
}

}  // namespace repcoach::nn
