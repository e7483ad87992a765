#include <doctest.h>

#include "ifr/corpus.hpp"
#include "ifr/error.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

using namespace ifr;

namespace {

const FaceModel& desk_model() {
    static const FaceModel model = generate_model(ModelSpec{});
    return model;
}

CameraSpec small_camera() {
    CameraSpec cam;
    cam.width = cam.height = 48;
    return cam;
}

std::string shard_bytes(const CorpusShard& s) {
    std::ostringstream out;
    write_shard(s, out);
    return out.str();
}

} // namespace

TEST_CASE("prior bounds and monochrome") {
    PriorSpec prior;
    const ParameterLayout L(desk_model().spec);
    const double yp = 40 * std::numbers::pi / 180, roll = 15 * std::numbers::pi / 180;
    double sum_e1 = 0, max_roll = 0, min_dc = 1e9;
    constexpr int kN = 100000;
    for (int i = 0; i < kN; ++i) {
        const auto p = sample_prior(prior, L, i);
        CHECK(std::fabs(p.rotation[0]) <= yp + 1e-6);
        CHECK(std::fabs(p.rotation[1]) <= yp + 1e-6);
        max_roll = std::max(max_roll, std::fabs(p.rotation[2]));
        min_dc = std::min(min_dc, p.light(0, 0));
        for (int k = 0; k < kShBands; ++k) {
            CHECK(p.light(k, 0) == p.light(k, 1));
            CHECK(p.light(k, 1) == p.light(k, 2));
            if (k > 0) CHECK(std::fabs(p.light(k, 0)) <= 0.2 + 1e-6);
        }
        for (std::size_t j = 1; j < p.expression.size(); ++j) CHECK(std::fabs(p.expression[j]) <= 12 + 1e-5);
        sum_e1 += p.expression[0];
    }
    CHECK(max_roll <= roll + 1e-6);
    CHECK(min_dc >= 0.6 - 1e-6);
    CHECK(std::fabs(sum_e1 / kN - 4.8) < 0.1);
}

TEST_CASE("prior samples are f32 exact and per-index") {
    PriorSpec prior;
    const ParameterLayout L(desk_model().spec);
    const auto a = sample_prior(prior, L, 42);
    CHECK(a == sample_prior(prior, L, 42));
    CHECK_FALSE(a == sample_prior(prior, L, 43));
    for (double v : a.flatten()) CHECK(static_cast<double>(static_cast<float>(v)) == v);
    prior.rng_seed = 2;
    CHECK_FALSE(a == sample_prior(prior, L, 42));
}

TEST_CASE("disabled groups and colored light") {
    PriorSpec prior;
    prior.shape_normal = false;
    prior.refl_normal = false;
    prior.monochrome = false;
    const ParameterLayout L(desk_model().spec);
    bool colored = false;
    for (int i = 0; i < 20; ++i) {
        const auto p = sample_prior(prior, L, i);
        for (double v : p.shape) CHECK(v == 0.0);
        for (double v : p.reflectance) CHECK(v == 0.0);
        colored |= p.light(1, 0) != p.light(1, 1);
    }
    CHECK(colored);
}

TEST_CASE("prior validation") {
    PriorSpec p;
    p.expr_min = 5;
    p.expr_max = 4;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = PriorSpec{};
    p.illum_dc_min = -1;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("prior std matches uniform and normal widths") {
    PriorSpec prior;
    const ParameterLayout L(desk_model().spec);
    const auto s = prior_std(prior, L);
    REQUIRE(s.size() == 70);
    CHECK(s[0] == doctest::Approx(2 * 40 * std::numbers::pi / 180 / std::sqrt(12.0)).epsilon(1e-6));
    CHECK(s[L.shape()] == 1.0f);
    CHECK(s[L.expression()] == doctest::Approx(24 / std::sqrt(12.0)).epsilon(1e-6));
    CHECK(s[L.illumination()] == doctest::Approx(0.6 / std::sqrt(12.0)).epsilon(1e-6));
    CHECK(s[L.illumination() + 3] == doctest::Approx(0.4 / std::sqrt(12.0)).epsilon(1e-6));
}

TEST_CASE("generation concatenates per index") {
    const auto cam = small_camera();
    PriorSpec prior;
    prior.rng_seed = 3;
    const auto both = generate_corpus(desk_model(), cam, prior, 2);
    CorpusShard joined;
    std::vector<RenderedSample> parts;
    generate_records(desk_model(), cam, prior, 0, 1, {}, [&](std::uint64_t, RenderedSample&& s) { parts.push_back(std::move(s)); });
    generate_records(desk_model(), cam, prior, 1, 1, {}, [&](std::uint64_t, RenderedSample&& s) { parts.push_back(std::move(s)); });
    REQUIRE(both.records.size() == 2);
    REQUIRE(parts.size() == 2);
    CHECK(both.records[0] == to_record(parts[0]));
    CHECK(both.records[1] == to_record(parts[1]));
}

TEST_CASE("thread count does not change the corpus") {
    const auto cam = small_camera();
    PriorSpec prior;
    GenerateOptions one, many;
    many.threads = 4;
    many.block = 7;
    CHECK(shard_bytes(generate_corpus(desk_model(), cam, prior, 30, one)) ==
          shard_bytes(generate_corpus(desk_model(), cam, prior, 30, many)));
}

TEST_CASE("shard round trip") {
    const auto cam = small_camera();
    const auto shard = generate_corpus(desk_model(), cam, PriorSpec{}, 5);
    CHECK(shard.header.m == 70);
    CHECK(shard.header.record_count == 5);
    const std::string bytes = shard_bytes(shard);
    std::istringstream in(bytes);
    const auto back = read_shard(in);
    CHECK(back == shard);
    CHECK(shard_bytes(back) == bytes);

    const auto L = ParameterLayout(desk_model().spec);
    const auto s = to_sample(shard.records[3], shard.header, L);
    const auto again = render(desk_model(), cam, s.params);
    CHECK(again.image == s.image);
    CHECK(again.mask == s.mask);

    const auto path = std::filesystem::temp_directory_path() / "ifr_test.ifnc";
    write_shard(shard, path);
    CHECK(read_shard(path) == shard);
    ShardReader reader(path);
    CHECK(reader.header() == shard.header);
    std::size_t n = 0;
    while (auto r = reader.next()) CHECK(*r == shard.records[n++]);
    CHECK(n == 5);
    std::filesystem::remove(path);
}

TEST_CASE("shard errors") {
    const auto shard = generate_corpus(desk_model(), small_camera(), PriorSpec{}, 2);
    const std::string bytes = shard_bytes(shard);

    std::istringstream cut(bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS_AS(read_shard(cut), TruncationError);

    std::string bad = bytes;
    bad[1] = '?';
    std::istringstream wrong(bad);
    CHECK_THROWS_AS(read_shard(wrong), FormatError);

    std::istringstream extra(bytes + "x");
    CHECK_THROWS_AS(read_shard(extra), FormatError);

    auto other = generate_model(ModelSpec{8, 8, 16, 48, 48, 7});
    CHECK_THROWS_AS(check_compatible(shard.header, other), DimensionMismatch);
    CHECK_NOTHROW(check_compatible(shard.header, desk_model()));
}

TEST_CASE("unrenderable records are skipped") {
    CameraSpec cam = small_camera();
    cam.face_distance_mm = 30; // the face straddles the camera plane
    std::vector<std::uint64_t> skipped;
    std::size_t rendered = 0;
    generate_records(desk_model(), cam, PriorSpec{}, 5, 3, {}, [&](std::uint64_t, RenderedSample&&) { ++rendered; },
                     [&](std::uint64_t i) { skipped.push_back(i); });
    CHECK(rendered == 0);
    CHECK(skipped == std::vector<std::uint64_t>{5, 6, 7});
    CHECK_THROWS_AS(generate_corpus(desk_model(), cam, PriorSpec{}, 3), Error);
}
