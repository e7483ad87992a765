#pragma once

#include "ifr/corpus.hpp"
#include "ifr/face_model.hpp"
#include "ifr/regressor.hpp"
#include "ifr/renderer.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ifr {

// RMSE of 8-bit RGB values over the pixels inside the input mask.
// Throws InvalidArgument for an empty input mask.
double photometric_error(const RenderedSample& input, const RenderedSample& predicted_render);

// RMSE over vertices of the Euclidean distance between the two unposed meshes.
double geometric_error(const FaceModel& model, const ParameterVector& truth, const ParameterVector& predicted);

// 100 * |A n B| / |A u B|, and 100 when both masks are empty.
double iou(std::span<const std::uint8_t> mask_a, std::span<const std::uint8_t> mask_b);

struct Stat {
    double mean = 0;
    double std = 0; // population
};

Stat mean_std(std::span<const double> values);

struct EvalRow {
    std::size_t index = 0;
    double weighted_loss = 0;
    double photometric = 0;
    double geometric = 0;
    double iou = 0;
};

struct EvalSummary {
    std::size_t count = 0;
    Stat weighted_loss, photometric, geometric, iou;
};

EvalSummary summarize(std::span<const EvalRow> rows);

struct EvalReport {
    std::vector<EvalRow> rows;     // network, one per sample
    EvalSummary network;
    EvalSummary baseline;          // constant mean-of-ground-truth predictor
    std::vector<EvalRow> baseline_rows;
};

struct EvalOptions {
    unsigned threads = 1;
    std::vector<double> metric; // weights for the weighted_loss column; model-space when empty
};

// Scores each prediction against the matching sample: re-renders the
// prediction with `camera` and compares against the sample's ground truth.
std::vector<EvalRow> evaluate_predictions(const FaceModel& model, const CameraSpec& camera,
                                          std::span<const RenderedSample> samples,
                                          std::span<const ParameterVector> predictions,
                                          const EvalOptions& options = {});

// Network and mean-predictor evaluation on a labelled shard.
EvalReport evaluate(const RegressorState& state, const CorpusShard& test, const FaceModel& model,
                    const CameraSpec& camera, const EvalOptions& options = {});

// Same as above on already-decoded samples.
EvalReport evaluate(const RegressorState& state, std::span<const RenderedSample> samples, const FaceModel& model,
                    const CameraSpec& camera, const EvalOptions& options = {});

// Element-wise mean of the ground-truth vectors.
ParameterVector mean_parameters(std::span<const RenderedSample> samples);

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
std::string format_summary(const EvalReport& report);

} // namespace ifr
