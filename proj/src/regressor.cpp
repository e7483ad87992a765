#include "ifr/regressor.hpp"

#include "ifr/binary_io.hpp"
#include "ifr/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace ifr {

namespace {

constexpr std::uint32_t kStateVersion = 1;
constexpr std::size_t kPredictBatch = 64;

struct AxisWeights {
    std::vector<std::vector<std::pair<std::size_t, double>>> taps;
};

// Coverage of source cells by each destination cell along one axis.
AxisWeights axis_weights(std::size_t src, std::size_t dst) {
    AxisWeights w;
    w.taps.resize(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t o = 0; o < dst; ++o) {
        const double lo = o * scale, hi = (o + 1) * scale;
        for (auto s = static_cast<std::size_t>(std::floor(lo)); s < src && static_cast<double>(s) < hi; ++s) {
            const double cover = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
            if (cover > 0) w.taps[o].emplace_back(s, cover / scale);
        }
    }
    return w;
}

// Shuffled cursor; reshuffles on wrap-around.
class BatchCursor {
public:
    BatchCursor(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::shuffle(order_.begin(), order_.end(), rng_);
    }

    std::size_t next() {
        if (pos_ == order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            pos_ = 0;
        }
        return order_[pos_++];
    }

private:
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::mt19937_64 rng_;
};

void write_spec(binary::Writer& w, const nn::NetworkSpec& s) {
    w.put<std::uint32_t>(s.input_resolution);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.layout.n_shape));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.layout.n_expr));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.layout.n_refl));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.conv.size()));
    for (const auto& c : s.conv) {
        w.put<std::uint32_t>(c.out_channels);
        w.put<std::uint32_t>(c.kernel);
        w.put<std::uint32_t>(c.stride);
    }
    w.put<std::uint32_t>(s.hidden);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.output_scale.size()));
    w.put_array<float>(s.output_scale);
}

nn::NetworkSpec read_spec(binary::Reader& r) {
    nn::NetworkSpec s;
    s.input_resolution = r.get<std::uint32_t>();
    s.layout.n_shape = r.get<std::uint32_t>();
    s.layout.n_expr = r.get<std::uint32_t>();
    s.layout.n_refl = r.get<std::uint32_t>();
    const auto n_conv = r.get<std::uint32_t>();
    if (n_conv > 64) throw FormatError(r.source() + ": implausible conv layer count");
    s.conv.resize(n_conv);
    for (auto& c : s.conv) {
        c.out_channels = r.get<std::uint32_t>();
        c.kernel = r.get<std::uint32_t>();
        c.stride = r.get<std::uint32_t>();
    }
    s.hidden = r.get<std::uint32_t>();
    const auto n_scale = r.get<std::uint32_t>();
    if (n_scale != 0 && n_scale != s.layout.m()) throw FormatError(r.source() + ": output scale length mismatch");
    s.output_scale.resize(n_scale);
    r.get_array<float>(std::span<float>(s.output_scale));
    try {
        s.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(r.source() + ": " + e.what());
    }
    return s;
}

} // namespace

RegressorState::RegressorState(const nn::NetworkSpec& spec, std::uint64_t init_seed) : net(spec) {
    net.initialize(init_seed);
    optimizer = nn::AdaDelta<float>(net.parameters());
}

RegressorState::RegressorState(const RegressorState& other)
    : net(other.net.clone()), optimizer(other.optimizer), iteration(other.iteration) {}

RegressorState& RegressorState::operator=(const RegressorState& other) {
    if (this != &other) {
        net = other.net.clone();
        optimizer = other.optimizer;
        iteration = other.iteration;
    }
    return *this;
}

std::vector<std::uint8_t> resample_area(std::span<const std::uint8_t> rgb, std::uint32_t width,
                                        std::uint32_t height, std::uint32_t out_side) {
    if (rgb.size() != std::size_t{width} * height * 3) throw DimensionMismatch("resample_area: payload size mismatch");
    if (out_side == 0) throw InvalidArgument("resample_area: output size must be positive");
    if (width == out_side && height == out_side) return {rgb.begin(), rgb.end()};
    const AxisWeights wx = axis_weights(width, out_side), wy = axis_weights(height, out_side);
    std::vector<std::uint8_t> out(std::size_t{out_side} * out_side * 3);
    for (std::size_t oy = 0; oy < out_side; ++oy)
        for (std::size_t ox = 0; ox < out_side; ++ox)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0;
                for (const auto& [sy, fy] : wy.taps[oy])
                    for (const auto& [sx, fx] : wx.taps[ox]) acc += fy * fx * rgb[(sy * width + sx) * 3 + c];
                out[(oy * out_side + ox) * 3 + c] =
                    static_cast<std::uint8_t>(std::clamp(std::floor(acc + 0.5), 0.0, 255.0));
            }
    return out;
}

void normalize_into(std::span<const std::uint8_t> rgb, std::size_t resolution, float* dst) {
    const std::size_t plane = resolution * resolution;
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            dst[c * plane + i] = static_cast<float>(rgb[i * 3 + c]) / 255.0f - 0.5f;
}

nn::Tensor<float> normalize_input(std::span<const std::uint8_t> rgb, std::uint32_t width, std::uint32_t height,
                                  std::uint32_t resolution) {
    if (width != resolution || height != resolution || rgb.size() != std::size_t{width} * height * 3)
        throw DimensionMismatch("normalize_input: image is " + std::to_string(width) + "x" + std::to_string(height) +
                                ", network expects " + std::to_string(resolution) + "x" + std::to_string(resolution));
    nn::Tensor<float> t({1, 3, resolution, resolution});
    normalize_into(rgb, resolution, t.values.data());
    return t;
}

void TrainingSet::add(std::span<const std::uint8_t> rgb, std::uint32_t width, std::uint32_t height,
                      std::span<const double> params) {
    if (params.size() != layout_.m()) throw DimensionMismatch("training sample has the wrong parameter count");
    const auto img = resample_area(rgb, width, height, resolution_);
    images_.insert(images_.end(), img.begin(), img.end());
    for (double v : params) params_.push_back(static_cast<float>(v));
}

void TrainingSet::reserve(std::size_t n) {
    images_.reserve(n * resolution_ * resolution_ * 3);
    params_.reserve(n * layout_.m());
}

std::span<const std::uint8_t> TrainingSet::image(std::size_t i) const {
    const std::size_t n = std::size_t{resolution_} * resolution_ * 3;
    return std::span<const std::uint8_t>(images_).subspan(i * n, n);
}

std::span<const float> TrainingSet::params(std::size_t i) const {
    return std::span<const float>(params_).subspan(i * layout_.m(), layout_.m());
}

TrainResult train(RegressorState& state, const TrainingSet& data, const TrainOptions& options) {
    TrainResult result;
    if (options.iterations == 0) return result;
    if (data.empty()) throw InvalidArgument("cannot train on an empty corpus");
    const auto& spec = state.spec();
    const std::size_t m = spec.outputs();
    if (data.layout().m() != m)
        throw DimensionMismatch("corpus m=" + std::to_string(data.layout().m()) + " but network outputs " +
                                std::to_string(m));
    if (data.resolution() != spec.input_resolution) throw DimensionMismatch("training set resolution mismatch");
    if (options.metric.size() != m) throw DimensionMismatch("loss metric length does not match the network");
    if (options.batch_size == 0) throw InvalidArgument("batch size must be positive");

    const std::size_t res = spec.input_resolution;
    const std::size_t image_floats = 3 * res * res;
    const std::size_t batch = options.batch_size;
    BatchCursor cursor(data.size(), options.seed);
    const auto params = state.net.parameters();

    std::vector<double> truth(batch * m);
    double window_sum = 0;
    std::uint64_t window_n = 0;
    for (std::uint64_t it = 1; it <= options.iterations; ++it) {
        auto input = nn::make_tensor<float>({batch, 3, res, res});
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t idx = cursor.next();
            normalize_into(data.image(idx), res, input->values.data() + b * image_floats);
            const auto p = data.params(idx);
            std::copy(p.begin(), p.end(), truth.begin() + static_cast<std::ptrdiff_t>(b * m));
        }
        nn::Tape tape;
        auto out = state.net.forward(tape, input);
        auto loss = model_space_loss<float>(out->values, truth, options.metric);
        if (!std::isfinite(loss.loss))
            throw NumericalError("non-finite training loss at iteration " + std::to_string(it));
        state.net.zero_grad();
        out->grad = std::move(loss.gradient);
        tape.backward();
        state.optimizer.step(params, options.optimizer);
        ++state.iteration;

        window_sum += loss.loss;
        ++window_n;
        if (options.trace_every && (it % options.trace_every == 0 || it == options.iterations)) {
            result.trace.push_back({it, window_sum / static_cast<double>(window_n)});
            window_sum = 0;
            window_n = 0;
        }
    }
    return result;
}

std::vector<double> predict_batch(const RegressorState& state, std::span<const std::uint8_t> images,
                                  std::size_t count) {
    const std::size_t res = state.spec().input_resolution;
    const std::size_t image_bytes = 3 * res * res;
    if (images.size() != count * image_bytes) throw DimensionMismatch("predict_batch: image buffer size mismatch");
    const std::size_t m = state.spec().outputs();
    std::vector<double> out(count * m);
    for (std::size_t start = 0; start < count; start += kPredictBatch) {
        const std::size_t n = std::min(kPredictBatch, count - start);
        auto input = nn::make_tensor<float>({n, 3, res, res});
        for (std::size_t b = 0; b < n; ++b)
            normalize_into(images.subspan((start + b) * image_bytes, image_bytes), res,
                           input->values.data() + b * image_bytes);
        nn::Tape tape;
        const auto y = state.net.forward(tape, input);
        std::copy(y->values.begin(), y->values.end(), out.begin() + static_cast<std::ptrdiff_t>(start * m));
    }
    return out;
}

ParameterVector predict(const RegressorState& state, std::span<const std::uint8_t> rgb, std::uint32_t width,
                        std::uint32_t height) {
    const auto img = resample_area(rgb, width, height, state.spec().input_resolution);
    const auto flat = predict_batch(state, img, 1);
    return ParameterVector::from_flat(flat, state.spec().layout);
}

std::vector<ParameterVector> predict_all(const RegressorState& state, const TrainingSet& data) {
    if (data.resolution() != state.spec().input_resolution) throw DimensionMismatch("predict_all: resolution mismatch");
    std::vector<ParameterVector> out;
    out.reserve(data.size());
    const std::size_t m = state.spec().outputs();
    const std::size_t image_bytes = std::size_t{3} * data.resolution() * data.resolution();
    for (std::size_t start = 0; start < data.size(); start += kPredictBatch) {
        const std::size_t n = std::min(kPredictBatch, data.size() - start);
        std::vector<std::uint8_t> images;
        images.reserve(n * image_bytes);
        for (std::size_t i = 0; i < n; ++i) {
            const auto img = data.image(start + i);
            images.insert(images.end(), img.begin(), img.end());
        }
        const auto flat = predict_batch(state, images, n);
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(ParameterVector::from_flat(std::span<const double>(flat).subspan(i * m, m),
                                                     state.spec().layout));
    }
    return out;
}

void write_state(const RegressorState& state, std::ostream& out) {
    binary::Writer w(out);
    w.magic("IFNW");
    w.put<std::uint32_t>(kStateVersion);
    write_spec(w, state.spec());
    w.put<std::uint64_t>(state.iteration);
    const auto params = state.net.parameters();
    for (const auto& p : params) w.put_array<float>(p->values);
    for (const auto& a : state.optimizer.squared_gradients()) w.put_array<float>(a);
    for (const auto& a : state.optimizer.squared_updates()) w.put_array<float>(a);
}

RegressorState read_state(std::istream& in, const std::string& source) {
    binary::Reader r(in, source);
    r.expect_magic("IFNW");
    const auto version = r.get<std::uint32_t>();
    if (version != kStateVersion) throw FormatError(source + ": unsupported network version " + std::to_string(version));
    const auto spec = read_spec(r);
    RegressorState state(spec, 0);
    state.iteration = r.get<std::uint64_t>();
    for (const auto& p : state.net.parameters()) r.get_array<float>(std::span<float>(p->values));
    for (auto& a : state.optimizer.squared_gradients()) r.get_array<float>(std::span<float>(a));
    for (auto& a : state.optimizer.squared_updates()) r.get_array<float>(std::span<float>(a));
    if (!r.at_end()) throw FormatError(source + ": trailing bytes after network state");
    return state;
}

void save_state(const RegressorState& state, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    write_state(state, out);
}

RegressorState load_state(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    return read_state(in, path.string());
}

std::string state_bytes(const RegressorState& state) {
    std::ostringstream out(std::ios::binary);
    write_state(state, out);
    return std::move(out).str();
}

void write_trace_csv(const std::vector<TracePoint>& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "iteration,loss\n";
    char buf[64];
    for (const auto& t : trace) {
        std::snprintf(buf, sizeof buf, "%.9g", t.loss);
        out << t.iteration << ',' << buf << '\n';
    }
}

} // namespace ifr
