#pragma once

#include "ifr/corpus.hpp"
#include "ifr/evaluation.hpp"
#include "ifr/regressor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace ifr {

struct BreedingConfig {
    std::uint64_t warmup_iterations = 1000;
    std::uint32_t n_breed = 4;
    std::uint64_t finetune_iterations = 500;
    std::uint32_t perturbations_per_seed = 2;
    double rotation_noise_deg = 5.0;  // U(-r, r) per angle
    double shape_noise = 0.05;        // N(0, s)
    double expression_noise = 0.1;
    double reflectance_noise = 0.2;
    double illumination_noise = 0.02; // each of the 27 scalars
    std::uint64_t rng_seed = 11;

    void validate() const;
};

// One forward pass per target image. Only the images are read.
std::vector<ParameterVector> infer_corpus(const RegressorState& state, const CorpusShard& target);

// perturbations_per_seed perturbed copies of each seed, seed-major. Each draw
// is a pure function of (rng_seed, round, seed index, replicate).
std::vector<ParameterVector> perturb(std::span<const ParameterVector> seeds, const BreedingConfig& config,
                                     std::uint32_t round = 0);

struct RoundMetrics {
    std::uint32_t round = 0; // 1-based
    std::size_t bred_samples = 0;
    double final_train_loss = 0;
    EvalSummary held_out;
};

struct BreedOptions {
    TrainOptions finetune;                          // iterations overridden by the config
    std::span<const RenderedSample> held_out;      // labelled slice of the target distribution
    unsigned threads = 1;
    // Called with each round's bred corpus (rendered at camera resolution).
    std::function<void(std::uint32_t, const CorpusShard&)> on_bred_corpus;
};

struct BreedResult {
    std::vector<RoundMetrics> rounds;
};

// Breeding loop: infer -> perturb -> render -> fine-tune, n_breed times.
// The state must already be warm-trained on the base prior.
BreedResult breed(RegressorState& state, const CorpusShard& target, const FaceModel& model, const CameraSpec& camera,
                  const BreedingConfig& config, const BreedOptions& options);

void write_round_metrics_csv(const std::vector<RoundMetrics>& rounds, const std::filesystem::path& path);

} // namespace ifr
