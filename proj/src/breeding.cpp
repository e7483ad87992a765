#include "ifr/breeding.hpp"

#include "ifr/error.hpp"
#include "ifr/parallel.hpp"
#include "ifr/rng.hpp"

#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>

namespace ifr {

namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void add_normal(std::mt19937_64& rng, double stddev, std::span<double> values) {
    if (stddev <= 0) return;
    std::normal_distribution<double> n(0.0, stddev);
    for (double& v : values) v = f32(v + n(rng));
}

} // namespace

void BreedingConfig::validate() const {
    if (n_breed > 0 && (finetune_iterations == 0 || perturbations_per_seed == 0))
        throw InvalidArgument("breeding needs positive fine-tune iterations and perturbation count");
    if (rotation_noise_deg < 0 || shape_noise < 0 || expression_noise < 0 || reflectance_noise < 0 ||
        illumination_noise < 0)
        throw InvalidArgument("breeding noise scales must be non-negative");
}

std::vector<ParameterVector> infer_corpus(const RegressorState& state, const CorpusShard& target) {
    if (target.records.empty()) throw InvalidArgument("target corpus is empty");
    if (target.header.m != state.spec().outputs())
        throw DimensionMismatch("target shard m=" + std::to_string(target.header.m) + " but network outputs " +
                                std::to_string(state.spec().outputs()));
    TrainingSet images(state.spec().input_resolution, state.spec().layout);
    images.reserve(target.records.size());
    const std::vector<double> unused(state.spec().outputs(), 0.0);
    for (const auto& r : target.records) images.add(r.image, target.header.width, target.header.height, unused);
    return predict_all(state, images);
}

std::vector<ParameterVector> perturb(std::span<const ParameterVector> seeds, const BreedingConfig& config,
                                     std::uint32_t round) {
    config.validate();
    std::vector<ParameterVector> out;
    out.reserve(seeds.size() * config.perturbations_per_seed);
    const double rot = config.rotation_noise_deg * std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!seeds[i].all_finite()) throw NumericalError("perturb: non-finite seed vector " + std::to_string(i));
        for (std::uint32_t r = 0; r < config.perturbations_per_seed; ++r) {
            std::mt19937_64 rng(mix_seed(config.rng_seed, {round, i, r}));
            ParameterVector p = seeds[i];
            if (rot > 0) {
                std::uniform_real_distribution<double> u(-rot, rot);
                for (double& a : p.rotation) a = f32(a + u(rng));
            }
            add_normal(rng, config.shape_noise, p.shape);
            add_normal(rng, config.expression_noise, p.expression);
            add_normal(rng, config.reflectance_noise, p.reflectance);
            add_normal(rng, config.illumination_noise, p.illumination);
            out.push_back(std::move(p));
        }
    }
    return out;
}

BreedResult breed(RegressorState& state, const CorpusShard& target, const FaceModel& model, const CameraSpec& camera,
                  const BreedingConfig& config, const BreedOptions& options) {
    config.validate();
    camera.validate();
    BreedResult result;
    if (config.n_breed == 0) return result;
    check_compatible(target.header, model);

    for (std::uint32_t round = 1; round <= config.n_breed; ++round) {
        const auto seeds = infer_corpus(state, target);
        const auto bred_params = perturb(seeds, config, round);

        TrainingSet data(state.spec().input_resolution, state.spec().layout);
        data.reserve(bred_params.size());
        CorpusShard bred;
        bred.header.m = static_cast<std::uint32_t>(model.spec.m());
        bred.header.width = camera.width;
        bred.header.height = camera.height;
        bred.header.global_seed = mix_seed(config.rng_seed, {round});
        constexpr std::size_t kBlock = 256;
        std::vector<std::optional<RenderedSample>> renders;
        for (std::size_t start = 0; start < bred_params.size(); start += kBlock) {
            const std::size_t n = std::min(kBlock, bred_params.size() - start);
            renders.assign(n, std::nullopt);
            parallel_for(n, options.threads, [&](std::size_t i) {
                try {
                    renders[i] = render(model, camera, bred_params[start + i]);
                } catch (const ProjectionError&) {
                    renders[i].reset();
                }
            });
            for (std::size_t i = 0; i < n; ++i) {
                if (!renders[i]) {
                    bred.header.skipped.push_back(start + i);
                    continue;
                }
                data.add(renders[i]->image, renders[i]->width, renders[i]->height, bred_params[start + i].flatten());
                if (options.on_bred_corpus) bred.records.push_back(to_record(*renders[i]));
            }
        }
        if (data.empty()) throw Error("breeding round " + std::to_string(round) + ": no perturbed sample rendered");
        bred.header.record_count = bred.records.size();
        if (options.on_bred_corpus) options.on_bred_corpus(round, bred);

        TrainOptions finetune = options.finetune;
        finetune.iterations = config.finetune_iterations;
        finetune.seed = mix_seed(options.finetune.seed, {round});
        TrainResult trained;
        try {
            trained = train(state, data, finetune);
        } catch (const NumericalError& e) {
            throw NumericalError("breeding round " + std::to_string(round) + ": " + e.what());
        }

        RoundMetrics metrics;
        metrics.round = round;
        metrics.bred_samples = data.size();
        metrics.final_train_loss = trained.trace.empty() ? 0.0 : trained.trace.back().loss;
        if (!options.held_out.empty()) {
            TrainingSet probe(state.spec().input_resolution, state.spec().layout);
            const std::vector<double> unused(state.spec().outputs(), 0.0);
            for (const auto& s : options.held_out) probe.add(s.image, s.width, s.height, unused);
            const auto predictions = predict_all(state, probe);
            EvalOptions eval;
            eval.threads = options.threads;
            metrics.held_out =
                summarize(evaluate_predictions(model, camera, options.held_out, predictions, eval));
        }
        result.rounds.push_back(metrics);
    }
    return result;
}

void write_round_metrics_csv(const std::vector<RoundMetrics>& rounds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "round,weighted_loss,photometric,geometric,iou\n";
    char buf[256];
    for (const auto& r : rounds) {
        std::snprintf(buf, sizeof buf, "%u,%.6f,%.6f,%.6f,%.6f\n", r.round, r.held_out.weighted_loss.mean,
                      r.held_out.photometric.mean, r.held_out.geometric.mean, r.held_out.iou.mean);
        out << buf;
    }
}

} // namespace ifr
