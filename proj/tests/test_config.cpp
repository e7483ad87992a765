#include <doctest.h>

#include "ifr/config.hpp"
#include "ifr/error.hpp"

#include <filesystem>
#include <fstream>

using namespace ifr;
using nlohmann::json;

TEST_CASE("empty config gives desk defaults") {
    const auto c = config_from_json(json::object());
    CHECK(c.model.m() == 70);
    CHECK(c.camera.width == 128);
    CHECK(c.network.input_resolution == 64);
    CHECK(c.network.layout == ParameterLayout(c.model));
    CHECK(c.training.batch_size == 32);
    CHECK(c.training.optimizer.learning_rate == 0.01);
    CHECK(c.training.optimizer.weight_decay == 0.001);
    CHECK(c.training.loss == LossKind::model_space);
    CHECK(c.breeding.n_breed == 4);
    CHECK(c.target_prior.expr_min == 4.0);
    CHECK(c.target_prior.expr_max == 12.0);
    CHECK_FALSE(c.target_prior.monochrome);
    CHECK(c.base_prior.monochrome);
}

TEST_CASE("default-constructed config equals the empty-json config") {
    const ExperimentConfig d;
    CHECK(config_to_json(d) == config_to_json(config_from_json(json::object())));
    CHECK(d.target_prior.expr_min == 4.0);
    CHECK(d.base_prior.rng_seed != d.target_prior.rng_seed);
}

TEST_CASE("section seeds derive from the global seed") {
    const auto a = config_from_json({{"seed", 1}});
    const auto b = config_from_json({{"seed", 2}});
    CHECK(a.base_prior.rng_seed != b.base_prior.rng_seed);
    CHECK(a.base_prior.rng_seed != a.target_prior.rng_seed);
    CHECK(config_from_json({{"seed", 1}}).training.seed == a.training.seed);
    const auto pinned = config_from_json({{"seed", 1}, {"priors", {{"base", {{"seed", 99}}}}}});
    CHECK(pinned.base_prior.rng_seed == 99);
}

TEST_CASE("json round trip") {
    json j = {{"seed", 5},
              {"model", {{"n_shape", 8}, {"n_expr", 4}, {"n_refl", 6}, {"grid", {20, 24}}}},
              {"camera", {{"resolution", 96}}},
              {"network", {{"input_resolution", 48}, {"conv", {{16, 3, 2}, {32, 3, 2}}}, {"hidden", 64}}},
              {"training", {{"loss", "euclidean"}, {"iterations", 10}}},
              {"breeding", {{"n_breed", 1}}}};
    const auto c = config_from_json(j);
    CHECK(c.model.m() == 3 + 8 + 4 + 6 + 27);
    CHECK(c.model.grid_rows == 20);
    CHECK(c.model.grid_cols == 24);
    CHECK(c.camera.height == 96);
    CHECK(c.network.conv.size() == 2);
    CHECK(c.training.loss == LossKind::euclidean);
    const auto again = config_from_json(config_to_json(c));
    CHECK(config_to_json(again) == config_to_json(c));
    CHECK(again.network == c.network);
    CHECK(again.base_prior == c.base_prior);
}

TEST_CASE("rejections") {
    CHECK_THROWS_AS(config_from_json({{"sed", 1}}), InvalidArgument);
    CHECK_THROWS_AS(config_from_json({{"training", {{"batch", 3}}}}), InvalidArgument);
    CHECK_THROWS_AS(config_from_json({{"network", {{"outputs", 71}}}}), InvalidArgument);
    CHECK_THROWS_AS(config_from_json({{"training", {{"loss", "l1"}}}}), InvalidArgument);
    CHECK_THROWS_AS(config_from_json({{"training", {{"learning_rate", -1}}}}), InvalidArgument);
    CHECK_THROWS_AS(config_from_json({{"camera", {{"resolution", "big"}}}}), InvalidArgument);
    CHECK_THROWS_AS(config_from_json({{"priors", {{"base", {{"expr_range", {3, 1}}}}}}}), InvalidArgument);
    CHECK_THROWS_AS(config_from_json({{"model", {{"grid", {4, 4}}}}}), InvalidArgument);
    ExperimentConfig c;
    CHECK_THROWS_AS(c.prior("shifted"), InvalidArgument);
}

TEST_CASE("config files") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto good = dir / "ifr_cfg_good.json", bad = dir / "ifr_cfg_bad.json";
    std::ofstream(good) << R"({"seed": 3, "training": {"iterations": 7}})";
    std::ofstream(bad) << "{ not json";
    CHECK(load_config(good).training.iterations == 7);
    CHECK_THROWS_AS(load_config(bad), FormatError);
    CHECK_THROWS_AS(load_config(dir / "ifr_cfg_missing.json"), IoError);
    try {
        load_config(bad);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find(bad.string()) != std::string::npos);
    }
    std::filesystem::remove(good);
    std::filesystem::remove(bad);
}

TEST_CASE("parameter json") {
    const ModelSpec spec;
    auto p = ParameterVector::zeros(spec);
    p.rotation = {0.1, -0.2, 0.3};
    p.expression[3] = 7.5;
    p.light(4, 1) = -0.25;
    const auto j = parameters_to_json(p);
    CHECK(j["illumination"].size() == 9);
    CHECK(j["illumination"][4][1] == -0.25);
    CHECK(parameters_from_json(j) == p);
    auto broken = j;
    broken.erase("shape");
    CHECK_THROWS_AS(parameters_from_json(broken), FormatError);
    broken = j;
    broken["illumination"].erase(0);
    CHECK_THROWS(parameters_from_json(broken));
}
