#pragma once

#include "ifr/error.hpp"
#include "ifr/face_model.hpp"

#include <span>
#include <string>
#include <vector>

namespace ifr {

// Group importance weights and the model standard deviations that form the
// diagonal weight matrix Sigma.
struct LossWeights {
    double rotation = 400.0;
    double shape = 50.0;
    double expression = 50.0;
    double reflectance = 100.0;
    double illumination = 20.0;
    std::vector<double> shape_sigma;
    std::vector<double> expr_sigma;
    std::vector<double> refl_sigma;

    static LossWeights for_model(const FaceModel& model);

    // diag(Sigma), length m.
    std::vector<double> sigma_diagonal() const;
    // diag(Sigma^T Sigma), length m.
    std::vector<double> metric() const;
    void validate() const;
};

enum class LossKind { model_space, euclidean };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

// Diagonal of the metric used by `kind` (all ones for euclidean).
std::vector<double> loss_metric(LossKind kind, const LossWeights& weights);

template <class T>
struct LossResult {
    double loss = 0;           // batch mean
    std::vector<T> gradient;   // d loss / d prediction, batch x m
};

// Mean over the batch of (p - theta)^T diag(metric) (p - theta).
template <class T>
LossResult<T> model_space_loss(std::span<const T> predicted, std::span<const double> truth,
                               std::span<const double> metric) {
    const std::size_t m = metric.size();
    if (m == 0 || predicted.size() != truth.size() || predicted.size() % m != 0)
        throw DimensionMismatch("model_space_loss: prediction/truth/metric sizes disagree");
    const std::size_t batch = predicted.size() / m;
    LossResult<T> out;
    out.gradient.resize(predicted.size());
    double total = 0;
    for (std::size_t b = 0; b < batch; ++b) {
        double row = 0;
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t i = b * m + k;
            const double d = static_cast<double>(predicted[i]) - truth[i];
            row += metric[k] * d * d;
            out.gradient[i] = static_cast<T>(2.0 * metric[k] * d / static_cast<double>(batch));
        }
        total += row;
    }
    out.loss = total / static_cast<double>(batch);
    return out;
}

// Unaveraged loss of one vector pair.
double sample_loss(std::span<const double> predicted, std::span<const double> truth, std::span<const double> metric);

} // namespace ifr
