#include <doctest.h>

#include "ifr/adadelta.hpp"
#include "ifr/corpus.hpp"
#include "ifr/error.hpp"
#include "ifr/loss.hpp"
#include "ifr/network.hpp"
#include "ifr/regressor.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace ifr;

namespace {

nn::NetworkSpec tiny_spec() {
    nn::NetworkSpec s;
    s.input_resolution = 8;
    s.conv = {{4, 3, 2}, {5, 3, 1}};
    s.hidden = 6;
    s.layout = ParameterLayout(2, 1, 1);
    s.output_scale.assign(s.outputs(), 1.0f);
    for (std::size_t k = 0; k < s.output_scale.size(); ++k) s.output_scale[k] = 0.5f + 0.1f * static_cast<float>(k % 7);
    return s;
}

const FaceModel& desk_model() {
    static const FaceModel model = generate_model(ModelSpec{});
    return model;
}

TrainingSet small_set(std::size_t n, std::uint32_t res = 32) {
    CameraSpec cam;
    cam.width = cam.height = 64;
    const ParameterLayout L(desk_model().spec);
    TrainingSet set(res, L);
    generate_records(desk_model(), cam, PriorSpec{}, 0, n, {}, [&](std::uint64_t, RenderedSample&& s) {
        set.add(s.image, s.width, s.height, s.params.flatten());
    });
    return set;
}

nn::NetworkSpec small_net() {
    nn::NetworkSpec s;
    s.input_resolution = 32;
    s.conv = {{8, 5, 2}, {16, 3, 2}};
    s.hidden = 32;
    return s;
}

TrainOptions small_options(std::uint64_t iterations) {
    TrainOptions o;
    o.batch_size = 8;
    o.iterations = iterations;
    o.trace_every = 5;
    o.metric = loss_metric(LossKind::model_space, LossWeights::for_model(desk_model()));
    return o;
}

} // namespace

TEST_CASE("input normalization") {
    const std::vector<std::uint8_t> rgb{0, 255, 128, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    const auto t = normalize_input(rgb, 2, 2, 2);
    REQUIRE(t.shape == nn::Shape{1, 3, 2, 2});
    // Planar layout: channel-major.
    CHECK(t.values[0] == doctest::Approx(-0.5));
    CHECK(t.values[4] == doctest::Approx(0.5));
    CHECK(t.values[8] == doctest::Approx(128.0 / 255.0 - 0.5));
    CHECK(t.values[8] == doctest::Approx(0.00196).epsilon(0.01));
    for (int i : {1, 2, 3, 5, 6, 7, 9, 10, 11}) CHECK(t.values[i] == -0.5f);
    CHECK_THROWS_AS(normalize_input(rgb, 2, 2, 4), DimensionMismatch);
}

TEST_CASE("area resampling") {
    std::vector<std::uint8_t> img(4 * 4 * 3, 0);
    for (std::size_t i = 0; i < 4; ++i) img[i * 3] = 200; // first row red
    const auto half = resample_area(img, 4, 4, 2);
    REQUIRE(half.size() == 12);
    CHECK(half[0] == 100);
    CHECK(half[3] == 100);
    CHECK(half[6] == 0);
    const auto same = resample_area(img, 4, 4, 4);
    CHECK(same == img);
    // Non-integer ratio keeps a constant image constant.
    std::vector<std::uint8_t> flat(5 * 5 * 3, 77);
    for (auto v : resample_area(flat, 5, 5, 3)) CHECK(v == 77);
}

TEST_CASE("autodiff matches finite differences") {
    auto spec = tiny_spec();
    nn::ConvNet<double> net(spec);
    net.initialize(5);
    // Larger output weights than the real init so every path carries gradient.
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto& p : net.parameters())
        for (double& v : p->values) v = nd(rng);

    const std::size_t batch = 2, m = spec.outputs();
    auto x = nn::make_tensor<double>({batch, 3, 8, 8});
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double& v : x->values) v = u(rng);
    std::vector<double> truth(batch * m), metric(m);
    for (double& v : truth) v = nd(rng);
    for (double& v : metric) v = 0.5 + std::fabs(nd(rng));

    auto loss_of = [&]() {
        nn::Tape tape;
        auto y = net.forward(tape, x);
        return model_space_loss<double>(y->values, truth, metric).loss;
    };

    nn::Tape tape;
    auto y = net.forward(tape, x);
    auto loss = model_space_loss<double>(y->values, truth, metric);
    net.zero_grad();
    y->grad = loss.gradient;
    tape.backward();

    const double h = 1e-3;
    std::size_t checked = 0, bad = 0;
    for (auto& p : net.parameters()) {
        REQUIRE(p->has_grad());
        for (std::size_t k = 0; k < p->size(); ++k) {
            const double w = p->values[k];
            p->values[k] = w + h;
            const double lp = loss_of();
            p->values[k] = w - h;
            const double lm = loss_of();
            p->values[k] = w;
            const double numeric = (lp - lm) / (2 * h);
            const double analytic = p->grad[k];
            const double err = std::fabs(numeric - analytic);
            if (err > 1e-6 && err > 1e-3 * std::max(std::fabs(numeric), std::fabs(analytic))) {
                ++bad;
                MESSAGE("gradient mismatch: analytic " << analytic << " numeric " << numeric);
            }
            ++checked;
        }
    }
    CHECK(checked > 300);
    CHECK(bad == 0);
}

TEST_CASE("loss gradient matches finite differences") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd(0.0, 1.0);
    const std::size_t m = 70, batch = 3;
    std::vector<double> p(batch * m), t(batch * m), metric(m);
    for (double& v : p) v = nd(rng);
    for (double& v : t) v = nd(rng);
    for (double& v : metric) v = 1 + 100 * std::fabs(nd(rng));
    const auto r = model_space_loss<double>(p, t, metric);
    const double h = 1e-4;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto q = p;
        q[i] += h;
        const double lp = model_space_loss<double>(q, t, metric).loss;
        q[i] -= 2 * h;
        const double lm = model_space_loss<double>(q, t, metric).loss;
        const double numeric = (lp - lm) / (2 * h);
        CHECK(std::fabs(numeric - r.gradient[i]) <= 1e-6 * std::max(1.0, std::fabs(r.gradient[i])));
    }
}

TEST_CASE("loss examples") {
    const auto w = LossWeights::for_model(desk_model());
    const auto metric = loss_metric(LossKind::model_space, w);
    const std::size_t m = 70;
    std::vector<double> truth(m, 0.25);

    auto exact = model_space_loss<double>(truth, truth, metric);
    CHECK(exact.loss == 0.0);
    for (double g : exact.gradient) CHECK(g == 0.0);

    const double delta = 0.01;
    auto p = truth;
    p[0] += delta;
    CHECK(model_space_loss<double>(p, truth, metric).loss == doctest::Approx(400 * 400 * delta * delta));

    const ParameterLayout L(desk_model().spec);
    double previous = 1e300;
    for (std::size_t i = 0; i < L.n_shape; ++i) {
        p = truth;
        p[L.shape() + i] += delta;
        const double l = model_space_loss<double>(p, truth, metric).loss;
        const double s = 50 * desk_model().shape_sigma[i] * delta;
        CHECK(l == doctest::Approx(s * s));
        CHECK(l < previous);
        previous = l;
    }

    const auto euclid = loss_metric(LossKind::euclidean, w);
    for (double v : euclid) CHECK(v == 1.0);
    CHECK(parse_loss_kind("euclidean") == LossKind::euclidean);
    CHECK(parse_loss_kind(to_string(LossKind::model_space)) == LossKind::model_space);
    CHECK_THROWS_AS(parse_loss_kind("l1"), InvalidArgument);
    std::vector<double> short_p(69);
    CHECK_THROWS_AS(model_space_loss<double>(short_p, short_p, metric), DimensionMismatch);
}

TEST_CASE("adadelta examples") {
    auto w = nn::make_tensor<double>({3}, true);
    w->values = {1.0, -2.0, 0.5};
    std::vector<nn::TensorPtr<double>> params{w};
    nn::AdaDelta<double> opt(params);
    nn::AdaDeltaConfig cfg;
    cfg.weight_decay = 0;
    w->ensure_grad();
    opt.step(params, cfg);
    CHECK(w->values == std::vector<double>{1.0, -2.0, 0.5});

    // Identical states, identical steps.
    auto v = nn::make_tensor<double>({3}, true);
    *v = *w;
    std::vector<nn::TensorPtr<double>> vparams{v};
    nn::AdaDelta<double> opt2 = opt;
    w->grad = v->grad = {0.3, -0.1, 2.0};
    opt.step(params, cfg);
    opt2.step(vparams, cfg);
    CHECK(w->values == v->values);
    CHECK(opt == opt2);

    // Convex toy problem: minimize w^2.
    auto s = nn::make_tensor<double>({1}, true);
    s->values = {1.0};
    std::vector<nn::TensorPtr<double>> sp{s};
    nn::AdaDelta<double> toy(sp);
    double prev = 1.0;
    for (int i = 0; i < 100; ++i) {
        s->ensure_grad()[0] = 2 * s->values[0];
        toy.step(sp, nn::AdaDeltaConfig{});
        CHECK(std::fabs(s->values[0]) < prev);
        prev = std::fabs(s->values[0]);
    }

    // First step by hand: g = 2, Eg = 0.05*4, update = sqrt(eps)/sqrt(0.2+eps)*g.
    auto q = nn::make_tensor<double>({1}, true);
    q->values = {0.0};
    std::vector<nn::TensorPtr<double>> qp{q};
    nn::AdaDelta<double> hand(qp);
    q->ensure_grad()[0] = 2.0;
    hand.step(qp, nn::AdaDeltaConfig{});
    const double update = std::sqrt(1e-6) / std::sqrt(0.2 + 1e-6) * 2.0;
    CHECK(q->values[0] == doctest::Approx(-0.01 * update).epsilon(1e-12));
    CHECK(hand.squared_updates()[0][0] == doctest::Approx(0.05 * update * update).epsilon(1e-12));

    // Non-finite gradients leave everything untouched.
    const auto before = q->values;
    const auto acc = hand;
    q->grad[0] = std::nan("");
    CHECK_THROWS_AS(hand.step(qp, nn::AdaDeltaConfig{}), NumericalError);
    CHECK(q->values == before);
    CHECK(hand == acc);
}

TEST_CASE("forward examples") {
    nn::NetworkSpec spec = small_net();
    RegressorState st(spec, 3);
    for (auto& p : st.net.parameters())
        if (p == st.net.parameters().back() || p == st.net.parameters()[st.net.parameters().size() - 2])
            std::fill(p->values.begin(), p->values.end(), 0.0f);
    const auto set = small_set(3);
    const auto zero = predict_batch(st, std::span(set.image(0).data(), 3 * set.image(0).size()), 3);
    for (double v : zero) CHECK(v == 0.0);

    RegressorState fresh(spec, 3);
    std::vector<std::uint8_t> twice;
    twice.insert(twice.end(), set.image(1).begin(), set.image(1).end());
    twice.insert(twice.end(), set.image(1).begin(), set.image(1).end());
    const auto rows = predict_batch(fresh, twice, 2);
    const std::size_t m = spec.outputs();
    for (std::size_t k = 0; k < m; ++k) CHECK(rows[k] == rows[m + k]);
    CHECK(predict_batch(fresh, twice, 2) == rows);
    bool nonzero = false;
    for (double v : rows) nonzero |= v != 0.0;
    CHECK(nonzero);
}

TEST_CASE("training is deterministic") {
    const auto set = small_set(40);
    RegressorState a(small_net(), 9), b(small_net(), 9);
    const auto before = state_bytes(a);
    auto zero = small_options(0);
    CHECK(train(a, set, zero).trace.empty());
    CHECK(state_bytes(a) == before);

    const auto ra = train(a, set, small_options(12));
    const auto rb = train(b, set, small_options(12));
    REQUIRE(ra.trace.size() == 3);
    CHECK(ra.trace[0].iteration == 5);
    CHECK(ra.trace[2].iteration == 12);
    for (std::size_t i = 0; i < ra.trace.size(); ++i) CHECK(ra.trace[i].loss == rb.trace[i].loss);
    CHECK(state_bytes(a) == state_bytes(b));
    CHECK(a.iteration == 12);
    CHECK(state_bytes(a) != before);
}

TEST_CASE("training errors") {
    RegressorState st(small_net(), 1);
    TrainingSet empty(32, ParameterLayout(desk_model().spec));
    CHECK_THROWS_AS(train(st, empty, small_options(1)), InvalidArgument);
    TrainingSet other(32, ParameterLayout(4, 2, 3));
    other.add(std::vector<std::uint8_t>(32 * 32 * 3), 32, 32, std::vector<double>(ParameterLayout(4, 2, 3).m()));
    CHECK_THROWS_AS(train(st, other, small_options(1)), DimensionMismatch);
}

TEST_CASE("state file round trip") {
    auto spec = small_net();
    spec.output_scale = prior_std(PriorSpec{}, spec.layout);
    RegressorState st(spec, 4);
    train(st, small_set(16), small_options(3));
    const std::string bytes = state_bytes(st);
    std::istringstream in(bytes);
    const auto back = read_state(in);
    CHECK(state_bytes(back) == bytes);
    CHECK(back.iteration == 3);
    CHECK(back.spec() == spec);

    RegressorState copy = st;
    CHECK(state_bytes(copy) == bytes);
    copy.net.parameters()[0]->values[0] += 1.0f;
    CHECK(state_bytes(st) == bytes);

    std::istringstream cut(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_state(cut), TruncationError);
    std::string bad = bytes;
    bad[0] = 'Z';
    std::istringstream wrong(bad);
    CHECK_THROWS_AS(read_state(wrong), FormatError);
}

TEST_CASE("network spec validation") {
    nn::NetworkSpec s;
    CHECK(s.feature_side() == 4);
    CHECK(s.feature_count() == 128 * 16);
    s.output_scale = {1.0f};
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
    s.output_scale.assign(70, 1.0f);
    s.output_scale[3] = 0.0f;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
    s = nn::NetworkSpec{};
    s.input_resolution = 0;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
}
