#pragma once

// Minimal dense reverse-mode differentiation engine. Values live in
// reference-counted Tensor nodes; a Tape records the backward closures of
// every op in creation order and replays them in reverse. Closures hold
// their operands, so intermediates live until the tape is replayed or dropped.

#include "ifr/error.hpp"

#include <cblas.h>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace ifr::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad; // empty until a gradient flows in
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(Shape s, bool trainable = false)
        : shape(std::move(s)), values(element_count(shape), T{0}), requires_grad(trainable) {}

    std::size_t size() const { return values.size(); }
    bool has_grad() const { return !grad.empty(); }
    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), T{0});
        return grad;
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
};

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <class T>
TensorPtr<T> make_tensor(Shape shape, bool trainable = false) {
    return std::make_shared<Tensor<T>>(std::move(shape), trainable);
}

class Tape {
public:
    void record(std::function<void()> backward) { ops_.push_back(std::move(backward)); }

    // Runs recorded closures newest-first. The caller seeds the root gradient.
    void backward() {
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
        ops_.clear();
    }

    std::size_t size() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
};

// Row-major C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
                 int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a,
                lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b,
                 int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a,
                lda, b, ldb, beta, c, ldc);
}

struct ConvGeometry {
    std::size_t channels = 0, height = 0, width = 0;
    std::size_t kernel = 0, stride = 1, pad = 0;

    std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
    std::size_t patch() const { return channels * kernel * kernel; }
};

// Writes one sample's patches into columns [col0, col0 + Ho*Wo) of a
// (patch x ld) matrix.
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col, std::size_t ld, std::size_t col0) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * ld + col0;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                              static_cast<std::ptrdiff_t>(g.pad);
                    T* dst = row + oy * wo;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                        std::fill(dst, dst + wo, T{0});
                        continue;
                    }
                    const T* src = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T{0}
                                                                                          : src[ix];
                    }
                }
            }
}

template <class T>
void col2im(const ConvGeometry& g, const T* col, std::size_t ld, std::size_t col0, T* dx) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * ld + col0;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                              static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    T* dst = dx + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    const T* src = row + oy * wo;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
                    }
                }
            }
}

// x: (B, C, H, W); weight: (O, C*k*k); bias: (O). Zero padding `pad`.
template <class T>
TensorPtr<T> conv2d(Tape& tape, const TensorPtr<T>& x, const TensorPtr<T>& weight, const TensorPtr<T>& bias,
                    std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (x->shape.size() != 4) throw DimensionMismatch("conv2d expects a 4-d input, got " + shape_string(x->shape));
    const std::size_t batch = x->shape[0];
    const ConvGeometry g{x->shape[1], x->shape[2], x->shape[3], kernel, stride, pad};
    const std::size_t out_ch = weight->shape[0];
    if (weight->shape.size() != 2 || weight->shape[1] != g.patch() || bias->size() != out_ch)
        throw DimensionMismatch("conv2d weight shape " + shape_string(weight->shape) + " incompatible with input " +
                                shape_string(x->shape));
    if (g.height + 2 * pad < kernel || g.width + 2 * pad < kernel)
        throw DimensionMismatch("conv2d kernel larger than padded input");
    const std::size_t ho = g.out_height(), wo = g.out_width(), pix = ho * wo;
    const std::size_t ld = batch * pix;
    const std::size_t in_stride = g.channels * g.height * g.width;

    auto cols = std::make_shared<std::vector<T>>(g.patch() * ld);
    for (std::size_t b = 0; b < batch; ++b) im2col(g, x->values.data() + b * in_stride, cols->data(), ld, b * pix);

    std::vector<T> y(out_ch * ld);
    for (std::size_t o = 0; o < out_ch; ++o) std::fill_n(y.data() + o * ld, ld, bias->values[o]);
    gemm(false, false, static_cast<int>(out_ch), static_cast<int>(ld), static_cast<int>(g.patch()), T{1},
         weight->values.data(), static_cast<int>(g.patch()), cols->data(), static_cast<int>(ld), T{1}, y.data(),
         static_cast<int>(ld));

    auto out = make_tensor<T>({batch, out_ch, ho, wo});
    for (std::size_t o = 0; o < out_ch; ++o)
        for (std::size_t b = 0; b < batch; ++b)
            std::copy_n(y.data() + o * ld + b * pix, pix, out->values.data() + (b * out_ch + o) * pix);

    tape.record([=] {
        const auto& o_ = out;
        if (!o_->has_grad()) return;
        std::vector<T> dy(out_ch * ld);
        for (std::size_t o = 0; o < out_ch; ++o)
            for (std::size_t b = 0; b < batch; ++b)
                std::copy_n(o_->grad.data() + (b * out_ch + o) * pix, pix, dy.data() + o * ld + b * pix);
        if (weight->requires_grad) {
            gemm(false, true, static_cast<int>(out_ch), static_cast<int>(g.patch()), static_cast<int>(ld), T{1},
                 dy.data(), static_cast<int>(ld), cols->data(), static_cast<int>(ld), T{1},
                 weight->ensure_grad().data(), static_cast<int>(g.patch()));
        }
        if (bias->requires_grad) {
            auto& gb = bias->ensure_grad();
            for (std::size_t o = 0; o < out_ch; ++o) {
                T s{0};
                for (std::size_t i = 0; i < ld; ++i) s += dy[o * ld + i];
                gb[o] += s;
            }
        }
        const auto& x_ = x;
        if (x_->requires_grad) {
            std::vector<T> dcol(g.patch() * ld);
            gemm(true, false, static_cast<int>(g.patch()), static_cast<int>(ld), static_cast<int>(out_ch), T{1},
                 weight->values.data(), static_cast<int>(g.patch()), dy.data(), static_cast<int>(ld), T{0},
                 dcol.data(), static_cast<int>(ld));
            auto& dx = x_->ensure_grad();
            for (std::size_t b = 0; b < batch; ++b) col2im(g, dcol.data(), ld, b * pix, dx.data() + b * in_stride);
        }
    });
    out->requires_grad = true;
    return out;
}

// x: (B, In); weight: (Out, In); bias: (Out). y = x W^T + b.
template <class T>
TensorPtr<T> linear(Tape& tape, const TensorPtr<T>& x, const TensorPtr<T>& weight, const TensorPtr<T>& bias) {
    if (x->shape.size() != 2 || weight->shape.size() != 2 || weight->shape[1] != x->shape[1] ||
        bias->size() != weight->shape[0])
        throw DimensionMismatch("linear: input " + shape_string(x->shape) + " incompatible with weight " +
                                shape_string(weight->shape));
    const std::size_t batch = x->shape[0], in = x->shape[1], outd = weight->shape[0];
    auto out = make_tensor<T>({batch, outd});
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(bias->values.data(), outd, out->values.data() + b * outd);
    gemm(false, true, static_cast<int>(batch), static_cast<int>(outd), static_cast<int>(in), T{1}, x->values.data(),
         static_cast<int>(in), weight->values.data(), static_cast<int>(in), T{1}, out->values.data(),
         static_cast<int>(outd));

    tape.record([=] {
        const auto& o_ = out;
        const auto& x_ = x;
        if (!o_->has_grad()) return;
        const T* dy = o_->grad.data();
        if (weight->requires_grad)
            gemm(true, false, static_cast<int>(outd), static_cast<int>(in), static_cast<int>(batch), T{1}, dy,
                 static_cast<int>(outd), x_->values.data(), static_cast<int>(in), T{1},
                 weight->ensure_grad().data(), static_cast<int>(in));
        if (bias->requires_grad) {
            auto& gb = bias->ensure_grad();
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t o = 0; o < outd; ++o) gb[o] += dy[b * outd + o];
        }
        if (x_->requires_grad)
            gemm(false, false, static_cast<int>(batch), static_cast<int>(in), static_cast<int>(outd), T{1}, dy,
                 static_cast<int>(outd), weight->values.data(), static_cast<int>(in), T{1},
                 x_->ensure_grad().data(), static_cast<int>(in));
    });
    out->requires_grad = true;
    return out;
}

template <class T>
TensorPtr<T> relu(Tape& tape, const TensorPtr<T>& x) {
    auto out = make_tensor<T>(x->shape);
    for (std::size_t i = 0; i < x->size(); ++i) out->values[i] = x->values[i] > T{0} ? x->values[i] : T{0};
    tape.record([x, out] {
        const auto& o_ = out;
        const auto& x_ = x;
        if (!o_->has_grad() || !x_->requires_grad) return;
        auto& dx = x_->ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (x_->values[i] > T{0}) dx[i] += o_->grad[i];
    });
    out->requires_grad = x->requires_grad;
    return out;
}

// x: (B, N); multiplies column j by the constant gain[j].
template <class T>
TensorPtr<T> scale_columns(Tape& tape, const TensorPtr<T>& x, std::vector<T> gain) {
    if (x->shape.size() != 2 || x->shape[1] != gain.size())
        throw DimensionMismatch("scale_columns: gain length does not match " + shape_string(x->shape));
    const std::size_t n = gain.size();
    auto out = make_tensor<T>(x->shape);
    for (std::size_t i = 0; i < x->size(); ++i) out->values[i] = x->values[i] * gain[i % n];
    tape.record([x, out, gain = std::move(gain)] {
        if (!out->has_grad() || !x->requires_grad) return;
        auto& dx = x->ensure_grad();
        const std::size_t n = gain.size();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += out->grad[i] * gain[i % n];
    });
    out->requires_grad = x->requires_grad;
    return out;
}

// Collapses all but the leading dimension.
template <class T>
TensorPtr<T> flatten(Tape& tape, const TensorPtr<T>& x) {
    const std::size_t batch = x->shape.empty() ? 1 : x->shape[0];
    auto out = make_tensor<T>({batch, x->size() / batch});
    out->values = x->values;
    tape.record([x, out] {
        const auto& o_ = out;
        const auto& x_ = x;
        if (!o_->has_grad() || !x_->requires_grad) return;
        auto& dx = x_->ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += o_->grad[i];
    });
    out->requires_grad = x->requires_grad;
    return out;
}

} // namespace ifr::nn
