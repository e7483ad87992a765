#pragma once

#include "ifr/face_model.hpp"
#include "ifr/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ifr::nn {

struct ConvLayerSpec {
    std::uint32_t out_channels = 0;
    std::uint32_t kernel = 3;
    std::uint32_t stride = 1;

    friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

// conv+ReLU stack, flatten, fc(hidden)+ReLU, fc(m), then a fixed
// per-output gain. Convolutions use zero padding kernel/2.
struct NetworkSpec {
    std::uint32_t input_resolution = 64;
    std::vector<ConvLayerSpec> conv{{32, 5, 2}, {64, 3, 2}, {96, 3, 2}, {128, 3, 2}};
    std::uint32_t hidden = 256;
    ParameterLayout layout{16, 8, 16};
    // Multiplies each network output; empty means all ones. Not trained.
    std::vector<float> output_scale;

    std::size_t outputs() const { return layout.m(); }
    // Spatial side length after the conv stack.
    std::size_t feature_side() const;
    std::size_t feature_count() const;
    void validate() const;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

inline std::size_t NetworkSpec::feature_side() const {
    std::size_t side = input_resolution;
    for (const auto& c : conv) side = (side + 2 * (c.kernel / 2) - c.kernel) / c.stride + 1;
    return side;
}

inline std::size_t NetworkSpec::feature_count() const {
    const std::size_t ch = conv.empty() ? 3 : conv.back().out_channels;
    return ch * feature_side() * feature_side();
}

inline void NetworkSpec::validate() const {
    if (input_resolution == 0) throw InvalidArgument("network input resolution must be positive");
    if (hidden == 0) throw InvalidArgument("network hidden width must be positive");
    if (!output_scale.empty() && output_scale.size() != outputs())
        throw InvalidArgument("network output_scale length does not match m");
    for (float s : output_scale)
        if (!(s > 0.0f) || !std::isfinite(s)) throw InvalidArgument("network output_scale entries must be positive");
    std::size_t side = input_resolution;
    for (const auto& c : conv) {
        if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0)
            throw InvalidArgument("conv layers need positive channels, kernel and stride");
        if (side + 2 * (c.kernel / 2) < c.kernel) throw InvalidArgument("conv kernel exceeds feature map");
        side = (side + 2 * (c.kernel / 2) - c.kernel) / c.stride + 1;
    }
}

// Weights of the regression network. T is float for training, double for
// gradient checks.
template <class T>
class ConvNet {
public:
    struct ConvParams {
        TensorPtr<T> weight, bias;
    };

    ConvNet() = default;

    explicit ConvNet(const NetworkSpec& spec) : spec_(spec) {
        spec.validate();
        std::size_t in_ch = 3;
        for (const auto& c : spec.conv) {
            conv_.push_back({make_tensor<T>({c.out_channels, in_ch * c.kernel * c.kernel}, true),
                             make_tensor<T>({c.out_channels}, true)});
            in_ch = c.out_channels;
        }
        fc1_ = {make_tensor<T>({spec.hidden, spec.feature_count()}, true), make_tensor<T>({spec.hidden}, true)};
        fc2_ = {make_tensor<T>({spec.outputs(), spec.hidden}, true), make_tensor<T>({spec.outputs()}, true)};
    }

    // Hidden layers: N(0, 2/fan_in); output layer: N(0, 0.01^2); biases 0.
    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        auto fill = [&rng](Tensor<T>& t, double stddev) {
            std::normal_distribution<double> n(0.0, stddev);
            for (auto& v : t.values) v = static_cast<T>(n(rng));
        };
        for (auto& c : conv_) {
            fill(*c.weight, std::sqrt(2.0 / static_cast<double>(c.weight->shape[1])));
            std::fill(c.bias->values.begin(), c.bias->values.end(), T{0});
        }
        fill(*fc1_.weight, std::sqrt(2.0 / static_cast<double>(fc1_.weight->shape[1])));
        std::fill(fc1_.bias->values.begin(), fc1_.bias->values.end(), T{0});
        fill(*fc2_.weight, 0.01);
        std::fill(fc2_.bias->values.begin(), fc2_.bias->values.end(), T{0});
    }

    // input: (B, 3, R, R) -> (B, m)
    TensorPtr<T> forward(Tape& tape, const TensorPtr<T>& input) const {
        const std::size_t r = spec_.input_resolution;
        if (input->shape.size() != 4 || input->shape[1] != 3 || input->shape[2] != r || input->shape[3] != r)
            throw DimensionMismatch("network expects input (B,3," + std::to_string(r) + "," + std::to_string(r) +
                                    "), got " + shape_string(input->shape));
        TensorPtr<T> h = input;
        for (std::size_t i = 0; i < conv_.size(); ++i) {
            const auto& c = spec_.conv[i];
            h = relu(tape, conv2d(tape, h, conv_[i].weight, conv_[i].bias, c.kernel, c.stride, c.kernel / 2));
        }
        h = flatten(tape, h);
        h = relu(tape, linear(tape, h, fc1_.weight, fc1_.bias));
        h = linear(tape, h, fc2_.weight, fc2_.bias);
        if (spec_.output_scale.empty()) return h;
        std::vector<T> gain(spec_.output_scale.begin(), spec_.output_scale.end());
        return scale_columns(tape, h, std::move(gain));
    }

    // Trainable tensors in a fixed order (conv w/b..., fc1 w/b, fc2 w/b).
    std::vector<TensorPtr<T>> parameters() const {
        std::vector<TensorPtr<T>> out;
        for (const auto& c : conv_) {
            out.push_back(c.weight);
            out.push_back(c.bias);
        }
        out.insert(out.end(), {fc1_.weight, fc1_.bias, fc2_.weight, fc2_.bias});
        return out;
    }

    void zero_grad() {
        for (auto& p : parameters()) p->zero_grad();
    }

    const NetworkSpec& spec() const { return spec_; }

    // Deep copy, optionally converting the scalar type.
    template <class U>
    ConvNet<U> cast() const {
        ConvNet<U> out(spec_);
        const auto src = parameters();
        const auto dst = out.parameters();
        for (std::size_t i = 0; i < src.size(); ++i)
            std::transform(src[i]->values.begin(), src[i]->values.end(), dst[i]->values.begin(),
                           [](T v) { return static_cast<U>(v); });
        return out;
    }

    ConvNet clone() const { return cast<T>(); }

private:
    NetworkSpec spec_;
    std::vector<ConvParams> conv_;
    ConvParams fc1_, fc2_;
};

} // namespace ifr::nn
