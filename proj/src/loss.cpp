#include "ifr/loss.hpp"

#include <algorithm>

namespace ifr {

LossWeights LossWeights::for_model(const FaceModel& model) {
    LossWeights w;
    w.shape_sigma = model.shape_sigma;
    w.expr_sigma = model.expr_sigma;
    w.refl_sigma = model.refl_sigma;
    return w;
}

std::vector<double> LossWeights::sigma_diagonal() const {
    std::vector<double> d;
    d.reserve(kRotationSize + shape_sigma.size() + expr_sigma.size() + refl_sigma.size() + kIlluminationSize);
    d.insert(d.end(), kRotationSize, rotation);
    for (double s : shape_sigma) d.push_back(shape * s);
    for (double s : expr_sigma) d.push_back(expression * s);
    for (double s : refl_sigma) d.push_back(reflectance * s);
    d.insert(d.end(), kIlluminationSize, illumination);
    return d;
}

std::vector<double> LossWeights::metric() const {
    auto d = sigma_diagonal();
    for (double& x : d) x *= x;
    return d;
}

void LossWeights::validate() const {
    auto positive = [](double v) { return v > 0.0; };
    if (!(rotation > 0 && shape > 0 && expression > 0 && reflectance > 0 && illumination > 0) ||
        !std::all_of(shape_sigma.begin(), shape_sigma.end(), positive) ||
        !std::all_of(expr_sigma.begin(), expr_sigma.end(), positive) ||
        !std::all_of(refl_sigma.begin(), refl_sigma.end(), positive))
        throw InvalidArgument("loss weights must be positive");
}

LossKind parse_loss_kind(const std::string& name) {
    if (name == "model_space") return LossKind::model_space;
    if (name == "euclidean") return LossKind::euclidean;
    throw InvalidArgument("unknown loss '" + name + "' (expected model_space or euclidean)");
}

std::string to_string(LossKind kind) { return kind == LossKind::model_space ? "model_space" : "euclidean"; }

std::vector<double> loss_metric(LossKind kind, const LossWeights& weights) {
    weights.validate();
    auto metric = weights.metric();
    if (kind == LossKind::euclidean) std::fill(metric.begin(), metric.end(), 1.0);
    return metric;
}

double sample_loss(std::span<const double> predicted, std::span<const double> truth, std::span<const double> metric) {
    if (predicted.size() != metric.size() || truth.size() != metric.size())
        throw DimensionMismatch("sample_loss: size mismatch");
    double s = 0;
    for (std::size_t k = 0; k < metric.size(); ++k) {
        const double d = predicted[k] - truth[k];
        s += metric[k] * d * d;
    }
    return s;
}

} // namespace ifr
