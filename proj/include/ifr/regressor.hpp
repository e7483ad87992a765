#pragma once

#include "ifr/adadelta.hpp"
#include "ifr/face_model.hpp"
#include "ifr/loss.hpp"
#include "ifr/network.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ifr {

// Network weights, optimizer accumulators and iteration counter.
struct RegressorState {
    nn::ConvNet<float> net;
    nn::AdaDelta<float> optimizer;
    std::uint64_t iteration = 0;

    RegressorState() = default;
    RegressorState(const nn::NetworkSpec& spec, std::uint64_t init_seed);
    RegressorState(const RegressorState& other);
    RegressorState& operator=(const RegressorState& other);
    RegressorState(RegressorState&&) noexcept = default;
    RegressorState& operator=(RegressorState&&) noexcept = default;

    const nn::NetworkSpec& spec() const { return net.spec(); }
};

// Box-filter resampling of an interleaved RGB8 image, each output pixel the
// area-weighted mean of the source pixels it covers.
std::vector<std::uint8_t> resample_area(std::span<const std::uint8_t> rgb, std::uint32_t width,
                                        std::uint32_t height, std::uint32_t out_side);

// (1, 3, R, R) tensor with values v/255 - 0.5. Throws DimensionMismatch when
// the image is not R x R.
nn::Tensor<float> normalize_input(std::span<const std::uint8_t> rgb, std::uint32_t width, std::uint32_t height,
                                  std::uint32_t resolution);

// Writes one normalized planar image into `dst` (3*R*R floats).
void normalize_into(std::span<const std::uint8_t> rgb, std::size_t resolution, float* dst);

// Images stored at network resolution plus flattened ground truth.
class TrainingSet {
public:
    TrainingSet() = default;
    TrainingSet(std::uint32_t resolution, ParameterLayout layout) : resolution_(resolution), layout_(layout) {}

    // Resamples the image when its size differs from the network resolution.
    void add(std::span<const std::uint8_t> rgb, std::uint32_t width, std::uint32_t height,
             std::span<const double> params);
    void reserve(std::size_t n);

    std::size_t size() const { return params_.size() / std::max<std::size_t>(1, layout_.m()); }
    bool empty() const { return params_.empty(); }
    std::uint32_t resolution() const { return resolution_; }
    const ParameterLayout& layout() const { return layout_; }
    std::span<const std::uint8_t> image(std::size_t i) const;
    std::span<const float> params(std::size_t i) const;

private:
    std::uint32_t resolution_ = 0;
    ParameterLayout layout_;
    std::vector<std::uint8_t> images_;
    std::vector<float> params_;
};

struct TracePoint {
    std::uint64_t iteration = 0; // iterations completed in this run
    double loss = 0;             // mean loss over the trace window
};

struct TrainOptions {
    std::size_t batch_size = 32;
    std::uint64_t iterations = 0;
    nn::AdaDeltaConfig optimizer;
    std::uint64_t seed = 1;
    std::uint64_t trace_every = 100;
    std::vector<double> metric; // diag(Sigma^T Sigma), length m
};

struct TrainResult {
    std::vector<TracePoint> trace;
};

// Mini-batch AdaDelta on the weighted parameter loss. Batches come from a
// seeded shuffled cursor over the set; single-threaded and deterministic.
TrainResult train(RegressorState& state, const TrainingSet& data, const TrainOptions& options);

// Forward pass over images already at network resolution; returns B x m.
std::vector<double> predict_batch(const RegressorState& state, std::span<const std::uint8_t> images,
                                  std::size_t count);

// Single image of any square size (resampled as needed).
ParameterVector predict(const RegressorState& state, std::span<const std::uint8_t> rgb, std::uint32_t width,
                        std::uint32_t height);

// One prediction per image in `data`, ground truth untouched.
std::vector<ParameterVector> predict_all(const RegressorState& state, const TrainingSet& data);

void write_state(const RegressorState& state, std::ostream& out);
RegressorState read_state(std::istream& in, const std::string& source = "<stream>");
void save_state(const RegressorState& state, const std::filesystem::path& path);
RegressorState load_state(const std::filesystem::path& path);
// Serialized bytes; equal states have equal bytes.
std::string state_bytes(const RegressorState& state);

void write_trace_csv(const std::vector<TracePoint>& trace, const std::filesystem::path& path);

} // namespace ifr
