#include "ifr/config.hpp"

#include "ifr/error.hpp"
#include "ifr/rng.hpp"

#include <fstream>

namespace ifr {

using nlohmann::json;

namespace {

template <class T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            j.at(key).get_to(out);
        } catch (const json::exception& e) {
            throw InvalidArgument(std::string("config key '") + key + "': " + e.what());
        }
    }
}

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw InvalidArgument(std::string("config section '") + section + "' must be an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw InvalidArgument(std::string("unknown key '") + k + "' in config section '" + section + "'");
    }
}

PriorSpec prior_from_json(const json& j, PriorSpec p, const char* section) {
    check_keys(j, section,
               {"yaw_pitch_range_deg", "roll_range_deg", "shape_normal", "refl_normal", "expr_range",
                "expr_bias_first", "illum_ac_range", "illum_dc_range", "monochrome", "seed"});
    get_to(j, "yaw_pitch_range_deg", p.yaw_pitch_range_deg);
    get_to(j, "roll_range_deg", p.roll_range_deg);
    get_to(j, "shape_normal", p.shape_normal);
    get_to(j, "refl_normal", p.refl_normal);
    if (j.contains("expr_range")) {
        std::array<double, 2> r{};
        get_to(j, "expr_range", r);
        p.expr_min = r[0];
        p.expr_max = r[1];
    }
    get_to(j, "expr_bias_first", p.expr_bias_first);
    get_to(j, "illum_ac_range", p.illum_ac_range);
    if (j.contains("illum_dc_range")) {
        std::array<double, 2> r{};
        get_to(j, "illum_dc_range", r);
        p.illum_dc_min = r[0];
        p.illum_dc_max = r[1];
    }
    get_to(j, "monochrome", p.monochrome);
    get_to(j, "seed", p.rng_seed);
    return p;
}

json prior_to_json(const PriorSpec& p) {
    return {{"yaw_pitch_range_deg", p.yaw_pitch_range_deg},
            {"roll_range_deg", p.roll_range_deg},
            {"shape_normal", p.shape_normal},
            {"refl_normal", p.refl_normal},
            {"expr_range", {p.expr_min, p.expr_max}},
            {"expr_bias_first", p.expr_bias_first},
            {"illum_ac_range", p.illum_ac_range},
            {"illum_dc_range", {p.illum_dc_min, p.illum_dc_max}},
            {"monochrome", p.monochrome},
            {"seed", p.rng_seed}};
}

} // namespace

PriorSpec default_target_prior() {
    PriorSpec p;
    p.expr_min = 4.0;
    p.expr_max = 12.0;
    p.expr_bias_first = 0.0;
    p.monochrome = false;
    return p;
}

ExperimentConfig::ExperimentConfig() : target_prior(default_target_prior()) { reseed(seed); }

void ExperimentConfig::reseed(std::uint64_t s) {
    seed = s;
    model.rng_seed = mix_seed(seed, {1});
    base_prior.rng_seed = mix_seed(seed, {2});
    target_prior.rng_seed = mix_seed(seed, {3});
    training.seed = mix_seed(seed, {4});
    training.init_seed = mix_seed(seed, {5});
    breeding.rng_seed = mix_seed(seed, {6});
}

void ExperimentConfig::validate() const {
    model.validate();
    camera.validate();
    base_prior.validate();
    target_prior.validate();
    network.validate();
    breeding.validate();
    if (network.layout != ParameterLayout(model))
        throw InvalidArgument("network output layout (m=" + std::to_string(network.layout.m()) +
                              ") does not match the model (m=" + std::to_string(model.m()) + ")");
    if (training.batch_size == 0) throw InvalidArgument("training batch_size must be positive");
    if (!(training.optimizer.learning_rate > 0) || training.optimizer.weight_decay < 0 ||
        !(training.optimizer.rho > 0 && training.optimizer.rho < 1) || !(training.optimizer.epsilon > 0))
        throw InvalidArgument("invalid optimizer hyperparameters");
    auto w = training.weights;
    w.shape_sigma.assign(1, 1.0);
    w.expr_sigma.assign(1, 1.0);
    w.refl_sigma.assign(1, 1.0);
    w.validate();
}

const PriorSpec& ExperimentConfig::prior(const std::string& name) const {
    if (name == "base") return base_prior;
    if (name == "target") return target_prior;
    throw InvalidArgument("unknown prior '" + name + "' (expected base or target)");
}

TrainOptions ExperimentConfig::train_options(const FaceModel& model) const {
    TrainOptions o;
    o.batch_size = training.batch_size;
    o.iterations = training.iterations;
    o.optimizer = training.optimizer;
    o.seed = training.seed;
    o.trace_every = training.trace_every;
    LossWeights w = training.weights;
    w.shape_sigma = model.shape_sigma;
    w.expr_sigma = model.expr_sigma;
    w.refl_sigma = model.refl_sigma;
    o.metric = loss_metric(training.loss, w);
    return o;
}

ExperimentConfig config_from_json(const json& j) {
    check_keys(j, "<root>",
               {"seed", "model", "camera", "priors", "network", "training", "breeding", "output_dir", "threads"});
    ExperimentConfig c;
    std::uint64_t seed = c.seed;
    get_to(j, "seed", seed);
    c.reseed(seed);

    if (j.contains("model")) {
        const auto& m = j["model"];
        check_keys(m, "model", {"n_shape", "n_expr", "n_refl", "grid", "seed"});
        get_to(m, "n_shape", c.model.n_shape);
        get_to(m, "n_expr", c.model.n_expr);
        get_to(m, "n_refl", c.model.n_refl);
        if (m.contains("grid")) {
            std::array<std::uint32_t, 2> g{};
            get_to(m, "grid", g);
            c.model.grid_rows = g[0];
            c.model.grid_cols = g[1];
        }
        get_to(m, "seed", c.model.rng_seed);
    }
    if (j.contains("camera")) {
        const auto& m = j["camera"];
        check_keys(m, "camera", {"resolution", "vertical_fov_deg", "face_distance_mm"});
        if (m.contains("resolution")) {
            get_to(m, "resolution", c.camera.width);
            c.camera.height = c.camera.width;
        }
        get_to(m, "vertical_fov_deg", c.camera.vertical_fov_deg);
        get_to(m, "face_distance_mm", c.camera.face_distance_mm);
    }
    if (j.contains("priors")) {
        const auto& m = j["priors"];
        check_keys(m, "priors", {"base", "target"});
        if (m.contains("base")) c.base_prior = prior_from_json(m["base"], c.base_prior, "priors.base");
        if (m.contains("target")) c.target_prior = prior_from_json(m["target"], c.target_prior, "priors.target");
    }
    c.network.layout = ParameterLayout(c.model);
    if (j.contains("network")) {
        const auto& m = j["network"];
        check_keys(m, "network", {"input_resolution", "conv", "hidden", "outputs"});
        get_to(m, "input_resolution", c.network.input_resolution);
        if (m.contains("conv")) {
            c.network.conv.clear();
            for (const auto& layer : m["conv"]) {
                if (!layer.is_array() || layer.size() != 3)
                    throw InvalidArgument("network.conv entries must be [out_channels, kernel, stride]");
                c.network.conv.push_back({layer[0].get<std::uint32_t>(), layer[1].get<std::uint32_t>(),
                                          layer[2].get<std::uint32_t>()});
            }
        }
        get_to(m, "hidden", c.network.hidden);
        if (m.contains("outputs") && m["outputs"].get<std::size_t>() != c.model.m())
            throw InvalidArgument("network.outputs=" + m["outputs"].dump() + " but the model has m=" +
                                  std::to_string(c.model.m()));
    }
    if (j.contains("training")) {
        const auto& m = j["training"];
        check_keys(m, "training",
                   {"batch_size", "iterations", "learning_rate", "weight_decay", "rho", "epsilon", "seed",
                    "init_seed", "trace_every", "loss", "loss_weights"});
        get_to(m, "batch_size", c.training.batch_size);
        get_to(m, "iterations", c.training.iterations);
        get_to(m, "learning_rate", c.training.optimizer.learning_rate);
        get_to(m, "weight_decay", c.training.optimizer.weight_decay);
        get_to(m, "rho", c.training.optimizer.rho);
        get_to(m, "epsilon", c.training.optimizer.epsilon);
        get_to(m, "seed", c.training.seed);
        get_to(m, "init_seed", c.training.init_seed);
        get_to(m, "trace_every", c.training.trace_every);
        if (m.contains("loss")) c.training.loss = parse_loss_kind(m["loss"].get<std::string>());
        if (m.contains("loss_weights")) {
            const auto& w = m["loss_weights"];
            check_keys(w, "training.loss_weights", {"rotation", "shape", "expression", "reflectance", "illumination"});
            get_to(w, "rotation", c.training.weights.rotation);
            get_to(w, "shape", c.training.weights.shape);
            get_to(w, "expression", c.training.weights.expression);
            get_to(w, "reflectance", c.training.weights.reflectance);
            get_to(w, "illumination", c.training.weights.illumination);
        }
    }
    if (j.contains("breeding")) {
        const auto& m = j["breeding"];
        check_keys(m, "breeding",
                   {"warmup_iterations", "n_breed", "finetune_iterations", "perturbations_per_seed",
                    "rotation_noise_deg", "shape_noise", "expression_noise", "reflectance_noise",
                    "illumination_noise", "seed"});
        get_to(m, "warmup_iterations", c.breeding.warmup_iterations);
        get_to(m, "n_breed", c.breeding.n_breed);
        get_to(m, "finetune_iterations", c.breeding.finetune_iterations);
        get_to(m, "perturbations_per_seed", c.breeding.perturbations_per_seed);
        get_to(m, "rotation_noise_deg", c.breeding.rotation_noise_deg);
        get_to(m, "shape_noise", c.breeding.shape_noise);
        get_to(m, "expression_noise", c.breeding.expression_noise);
        get_to(m, "reflectance_noise", c.breeding.reflectance_noise);
        get_to(m, "illumination_noise", c.breeding.illumination_noise);
        get_to(m, "seed", c.breeding.rng_seed);
    }
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    get_to(j, "threads", c.threads);
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json conv = json::array();
    for (const auto& l : c.network.conv) conv.push_back({l.out_channels, l.kernel, l.stride});
    return {
        {"seed", c.seed},
        {"model",
         {{"n_shape", c.model.n_shape},
          {"n_expr", c.model.n_expr},
          {"n_refl", c.model.n_refl},
          {"grid", {c.model.grid_rows, c.model.grid_cols}},
          {"seed", c.model.rng_seed}}},
        {"camera",
         {{"resolution", c.camera.width},
          {"vertical_fov_deg", c.camera.vertical_fov_deg},
          {"face_distance_mm", c.camera.face_distance_mm}}},
        {"priors", {{"base", prior_to_json(c.base_prior)}, {"target", prior_to_json(c.target_prior)}}},
        {"network",
         {{"input_resolution", c.network.input_resolution},
          {"conv", conv},
          {"hidden", c.network.hidden},
          {"outputs", c.network.outputs()}}},
        {"training",
         {{"batch_size", c.training.batch_size},
          {"iterations", c.training.iterations},
          {"learning_rate", c.training.optimizer.learning_rate},
          {"weight_decay", c.training.optimizer.weight_decay},
          {"rho", c.training.optimizer.rho},
          {"epsilon", c.training.optimizer.epsilon},
          {"seed", c.training.seed},
          {"init_seed", c.training.init_seed},
          {"trace_every", c.training.trace_every},
          {"loss", to_string(c.training.loss)},
          {"loss_weights",
           {{"rotation", c.training.weights.rotation},
            {"shape", c.training.weights.shape},
            {"expression", c.training.weights.expression},
            {"reflectance", c.training.weights.reflectance},
            {"illumination", c.training.weights.illumination}}}}},
        {"breeding",
         {{"warmup_iterations", c.breeding.warmup_iterations},
          {"n_breed", c.breeding.n_breed},
          {"finetune_iterations", c.breeding.finetune_iterations},
          {"perturbations_per_seed", c.breeding.perturbations_per_seed},
          {"rotation_noise_deg", c.breeding.rotation_noise_deg},
          {"shape_noise", c.breeding.shape_noise},
          {"expression_noise", c.breeding.expression_noise},
          {"reflectance_noise", c.breeding.reflectance_noise},
          {"illumination_noise", c.breeding.illumination_noise},
          {"seed", c.breeding.rng_seed}}},
        {"output_dir", c.output_dir.string()},
        {"threads", c.threads},
    };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open config");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

json parameters_to_json(const ParameterVector& p) {
    json illum = json::array();
    for (int k = 0; k < kShBands; ++k) illum.push_back({p.light(k, 0), p.light(k, 1), p.light(k, 2)});
    return {{"rotation", p.rotation},
            {"shape", p.shape},
            {"expression", p.expression},
            {"reflectance", p.reflectance},
            {"illumination", illum}};
}

ParameterVector parameters_from_json(const json& j) {
    try {
        ParameterVector p;
        j.at("rotation").get_to(p.rotation);
        j.at("shape").get_to(p.shape);
        j.at("expression").get_to(p.expression);
        j.at("reflectance").get_to(p.reflectance);
        const auto& illum = j.at("illumination");
        if (!illum.is_array() || illum.size() != kShBands)
            throw InvalidArgument("illumination must hold 9 RGB triples");
        for (int k = 0; k < kShBands; ++k) {
            const auto& t = illum.at(static_cast<std::size_t>(k));
            if (!t.is_array() || t.size() != 3) throw InvalidArgument("illumination entries must be RGB triples");
            for (int c = 0; c < 3; ++c) p.light(k, c) = t.at(static_cast<std::size_t>(c)).get<double>();
        }
        if (!p.all_finite()) throw InvalidArgument("parameters must be finite");
        return p;
    } catch (const json::exception& e) {
        throw FormatError(std::string("parameter JSON: ") + e.what());
    }
}

} // namespace ifr
