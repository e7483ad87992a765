#include <doctest.h>

#include "ifr/corpus.hpp"
#include "ifr/error.hpp"
#include "ifr/evaluation.hpp"

#include <cmath>
#include <random>

using namespace ifr;

namespace {

const FaceModel& desk_model() {
    static const FaceModel model = generate_model(ModelSpec{});
    return model;
}

RenderedSample flat_sample(std::uint32_t w, std::uint32_t h, std::uint8_t value, bool full_mask = true) {
    RenderedSample s;
    s.width = w;
    s.height = h;
    s.image.assign(std::size_t{w} * h * 3, value);
    s.mask.assign(std::size_t{w} * h, full_mask ? 1 : 0);
    s.depth.assign(std::size_t{w} * h, 0.0);
    return s;
}

} // namespace

TEST_CASE("photometric examples") {
    auto a = flat_sample(4, 4, 0);
    CHECK(photometric_error(a, a) == 0.0);
    auto white = flat_sample(4, 4, 255);
    CHECK(photometric_error(a, white) == doctest::Approx(255.0));
    CHECK(photometric_error(white, a) == doctest::Approx(255.0));

    auto in = flat_sample(4, 4, 0);
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> u(0, 245);
    for (auto& v : in.image) v = static_cast<std::uint8_t>(u(rng));
    auto shifted = in;
    for (auto& v : shifted.image) v += 10;
    CHECK(photometric_error(in, shifted) == doctest::Approx(10.0));

    // Only the input mask counts.
    auto half = flat_sample(4, 4, 0);
    for (std::size_t i = 8; i < 16; ++i) half.mask[i] = 0;
    auto other = flat_sample(4, 4, 0);
    for (std::size_t i = 8 * 3; i < other.image.size(); ++i) other.image[i] = 200;
    CHECK(photometric_error(half, other) == 0.0);

    CHECK_THROWS_AS(photometric_error(flat_sample(4, 4, 0, false), a), InvalidArgument);
    CHECK_THROWS_AS(photometric_error(a, flat_sample(2, 2, 0)), DimensionMismatch);
}

TEST_CASE("iou examples") {
    std::vector<std::uint8_t> full(16, 1), top(16, 0), empty(16, 0), bottom(16, 0);
    for (int i = 0; i < 8; ++i) top[i] = 1;
    for (int i = 8; i < 16; ++i) bottom[i] = 1;
    CHECK(iou(full, full) == 100.0);
    CHECK(iou(top, full) == doctest::Approx(50.0));
    CHECK(iou(full, top) == doctest::Approx(50.0));
    CHECK(iou(top, bottom) == 0.0);
    CHECK(iou(empty, empty) == 100.0);
    CHECK_THROWS_AS(iou(full, std::vector<std::uint8_t>(15, 1)), DimensionMismatch);
}

TEST_CASE("geometric error") {
    const auto& m = desk_model();
    const ParameterLayout L(m.spec);
    auto a = ParameterVector::zeros(m.spec);
    CHECK(geometric_error(m, a, a) == 0.0);

    // One mode: per-vertex oracle, and sigma*|delta|/sqrt(V) for a unit basis vector.
    auto b = a;
    b.shape[2] = -0.7;
    const auto mode = m.shape_mode(2);
    long double sum = 0;
    for (std::size_t v = 0; v < m.n_vertices(); ++v) {
        long double d2 = 0;
        for (int c = 0; c < 3; ++c) {
            const long double d = m.shape_sigma[2] * 0.7L * mode[3 * v + c];
            d2 += d * d;
        }
        sum += d2;
    }
    const double oracle = std::sqrt(static_cast<double>(sum / m.n_vertices()));
    CHECK(geometric_error(m, a, b) == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(oracle == doctest::Approx(m.shape_sigma[2] * 0.7 / std::sqrt(2304.0)).epsilon(1e-9));

    // Rotation is ignored; triangle inequality holds.
    auto rotated = b;
    rotated.rotation = {0.3, 0.2, 0.1};
    CHECK(geometric_error(m, a, rotated) == geometric_error(m, a, b));
    PriorSpec prior;
    for (int t = 0; t < 20; ++t) {
        const auto x = sample_prior(prior, L, 3 * t), y = sample_prior(prior, L, 3 * t + 1),
                   z = sample_prior(prior, L, 3 * t + 2);
        CHECK(geometric_error(m, x, z) <= geometric_error(m, x, y) + geometric_error(m, y, z) + 1e-12);
    }
}

TEST_CASE("mean and population std") {
    const std::vector<double> v{1, 2, 3, 4};
    const auto s = mean_std(v);
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("oracle predictions give a perfect report") {
    CameraSpec cam;
    cam.width = cam.height = 64;
    const auto shard = generate_corpus(desk_model(), cam, PriorSpec{}, 12);
    const ParameterLayout L(desk_model().spec);
    std::vector<RenderedSample> samples;
    std::vector<ParameterVector> truth;
    for (const auto& r : shard.records) {
        samples.push_back(to_sample(r, shard.header, L));
        truth.push_back(samples.back().params);
    }
    EvalOptions opt;
    opt.threads = 3;
    const auto rows = evaluate_predictions(desk_model(), cam, samples, truth, opt);
    for (const auto& r : rows) {
        CHECK(r.photometric == 0.0);
        CHECK(r.geometric == 0.0);
        CHECK(r.iou == 100.0);
        CHECK(r.weighted_loss == 0.0);
    }

    const auto mean = mean_parameters(samples);
    std::vector<ParameterVector> constant(samples.size(), mean);
    const auto base = summarize(evaluate_predictions(desk_model(), cam, samples, constant));
    CHECK(base.count == 12);
    CHECK(base.geometric.mean > 0.0);
    CHECK(base.weighted_loss.mean > 0.0);
    CHECK(base.iou.mean < 100.0);
    const auto again = summarize(evaluate_predictions(desk_model(), cam, samples, constant, opt));
    CHECK(again.geometric.mean == base.geometric.mean);
    CHECK(again.photometric.std == base.photometric.std);
}

TEST_CASE("unrenderable predictions score as empty renders") {
    CameraSpec cam;
    cam.width = cam.height = 48;
    const auto shard = generate_corpus(desk_model(), cam, PriorSpec{}, 1);
    const auto s = to_sample(shard.records[0], shard.header, ParameterLayout(desk_model().spec));
    auto bad = s.params;
    bad.shape[0] = 1e6; // pushes vertices behind the camera
    const std::vector<RenderedSample> samples{s};
    const std::vector<ParameterVector> preds{bad};
    const auto rows = evaluate_predictions(desk_model(), cam, samples, preds);
    CHECK(rows[0].iou == 0.0);
    CHECK(std::isfinite(rows[0].photometric));
}
