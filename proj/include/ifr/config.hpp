#pragma once

#include "ifr/breeding.hpp"
#include "ifr/corpus.hpp"
#include "ifr/face_model.hpp"
#include "ifr/loss.hpp"
#include "ifr/network.hpp"
#include "ifr/regressor.hpp"
#include "ifr/renderer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace ifr {

struct TrainingConfig {
    std::size_t batch_size = 32;
    std::uint64_t iterations = 5000;
    nn::AdaDeltaConfig optimizer;
    std::uint64_t seed = 0;      // batch order
    std::uint64_t init_seed = 0; // weight initialization
    std::uint64_t trace_every = 100;
    LossKind loss = LossKind::model_space;
    LossWeights weights;         // sigma vectors filled from the model at use
};

// Everything one experiment needs. A default-constructed config equals the
// one loaded from "{}". Section seeds not given in JSON derive from `seed`.
struct ExperimentConfig {
    ExperimentConfig();

    std::uint64_t seed = 1;
    ModelSpec model;
    CameraSpec camera;
    PriorSpec base_prior;
    PriorSpec target_prior;
    nn::NetworkSpec network;
    TrainingConfig training;
    BreedingConfig breeding;
    std::filesystem::path output_dir = ".";
    unsigned threads = 0;

    // Throws InvalidArgument on any inconsistency, before work starts.
    void validate() const;

    const PriorSpec& prior(const std::string& name) const;

    // Sets `seed` and rederives every section seed from it.
    void reseed(std::uint64_t s);

    // Options for `train` given the loaded model.
    TrainOptions train_options(const FaceModel& model) const;
};

// Shifted prior used as the stand-in target distribution.
PriorSpec default_target_prior();

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json parameters_to_json(const ParameterVector& p);
ParameterVector parameters_from_json(const nlohmann::json& j);

} // namespace ifr
