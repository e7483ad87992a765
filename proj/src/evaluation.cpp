#include "ifr/evaluation.hpp"

#include "ifr/error.hpp"
#include "ifr/loss.hpp"
#include "ifr/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ifr {

double photometric_error(const RenderedSample& input, const RenderedSample& predicted_render) {
    if (input.width != predicted_render.width || input.height != predicted_render.height ||
        input.image.size() != predicted_render.image.size() || input.mask.size() != input.pixel_count())
        throw DimensionMismatch("photometric_error: image dimensions differ");
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < input.mask.size(); ++i) {
        if (!input.mask[i]) continue;
        for (std::size_t c = 0; c < 3; ++c) {
            const double d = static_cast<double>(input.image[3 * i + c]) - predicted_render.image[3 * i + c];
            sum += d * d;
        }
        n += 3;
    }
    if (n == 0) throw InvalidArgument("photometric_error: input mask is empty");
    return std::sqrt(sum / static_cast<double>(n));
}

double geometric_error(const FaceModel& model, const ParameterVector& truth, const ParameterVector& predicted) {
    const auto a = evaluate_geometry(model, truth);
    const auto b = evaluate_geometry(model, predicted);
    double sum = 0;
    const std::size_t nv = model.n_vertices();
    for (std::size_t v = 0; v < nv; ++v) {
        const double dx = a[3 * v] - b[3 * v], dy = a[3 * v + 1] - b[3 * v + 1], dz = a[3 * v + 2] - b[3 * v + 2];
        sum += dx * dx + dy * dy + dz * dz;
    }
    return std::sqrt(sum / static_cast<double>(nv));
}

double iou(std::span<const std::uint8_t> mask_a, std::span<const std::uint8_t> mask_b) {
    if (mask_a.size() != mask_b.size()) throw DimensionMismatch("iou: mask sizes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < mask_a.size(); ++i) {
        const bool a = mask_a[i] != 0, b = mask_b[i] != 0;
        inter += a && b;
        uni += a || b;
    }
    return uni == 0 ? 100.0 : 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

Stat mean_std(std::span<const double> values) {
    if (values.empty()) return {};
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

EvalSummary summarize(std::span<const EvalRow> rows) {
    EvalSummary s;
    s.count = rows.size();
    std::vector<double> l, p, g, i;
    for (const auto& r : rows) {
        l.push_back(r.weighted_loss);
        p.push_back(r.photometric);
        g.push_back(r.geometric);
        i.push_back(r.iou);
    }
    s.weighted_loss = mean_std(l);
    s.photometric = mean_std(p);
    s.geometric = mean_std(g);
    s.iou = mean_std(i);
    return s;
}

std::vector<EvalRow> evaluate_predictions(const FaceModel& model, const CameraSpec& camera,
                                          std::span<const RenderedSample> samples,
                                          std::span<const ParameterVector> predictions,
                                          const EvalOptions& options) {
    if (samples.size() != predictions.size()) throw DimensionMismatch("one prediction per sample is required");
    const auto metric = options.metric.empty() ? loss_metric(LossKind::model_space, LossWeights::for_model(model))
                                               : options.metric;
    std::vector<EvalRow> rows(samples.size());
    parallel_for(samples.size(), options.threads, [&](std::size_t i) {
        const auto& s = samples[i];
        if (s.width != camera.width || s.height != camera.height)
            throw DimensionMismatch("evaluation camera resolution differs from the sample resolution");
        RenderedSample re;
        try {
            re = render(model, camera, predictions[i]);
        } catch (const ProjectionError&) {
            // Degenerate prediction: scored as an empty render.
            re.width = s.width;
            re.height = s.height;
            re.image.assign(s.image.size(), 0);
            re.mask.assign(s.mask.size(), 0);
        }
        const auto truth = s.params.flatten();
        const auto pred = predictions[i].flatten();
        rows[i] = {i, sample_loss(pred, truth, metric), photometric_error(s, re),
                   geometric_error(model, s.params, predictions[i]), iou(s.mask, re.mask)};
    });
    return rows;
}

ParameterVector mean_parameters(std::span<const RenderedSample> samples) {
    if (samples.empty()) throw InvalidArgument("mean_parameters: no samples");
    const auto layout = samples.front().params.layout();
    std::vector<double> acc(layout.m(), 0.0);
    for (const auto& s : samples) {
        const auto f = s.params.flatten();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += f[k];
    }
    for (double& v : acc) v /= static_cast<double>(samples.size());
    return ParameterVector::from_flat(acc, layout);
}

EvalReport evaluate(const RegressorState& state, std::span<const RenderedSample> samples, const FaceModel& model,
                    const CameraSpec& camera, const EvalOptions& options) {
    if (samples.empty()) throw InvalidArgument("cannot evaluate on an empty shard");
    std::vector<ParameterVector> predictions;
    predictions.reserve(samples.size());
    // Inference only sees the images.
    TrainingSet images(state.spec().input_resolution, state.spec().layout);
    const std::vector<double> no_params(state.spec().outputs(), 0.0);
    for (const auto& s : samples) images.add(s.image, s.width, s.height, no_params);
    predictions = predict_all(state, images);

    EvalReport report;
    report.rows = evaluate_predictions(model, camera, samples, predictions, options);
    report.network = summarize(report.rows);
    const std::vector<ParameterVector> baseline(samples.size(), mean_parameters(samples));
    report.baseline_rows = evaluate_predictions(model, camera, samples, baseline, options);
    report.baseline = summarize(report.baseline_rows);
    return report;
}

EvalReport evaluate(const RegressorState& state, const CorpusShard& test, const FaceModel& model,
                    const CameraSpec& camera, const EvalOptions& options) {
    check_compatible(test.header, model);
    const ParameterLayout layout(model.spec);
    std::vector<RenderedSample> samples;
    samples.reserve(test.records.size());
    for (const auto& r : test.records) samples.push_back(to_sample(r, test.header, layout));
    return evaluate(state, samples, model, camera, options);
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void summary_rows(std::ostream& out, const std::string& name, const EvalSummary& s) {
    out << name << "_mean,," << fmt(s.weighted_loss.mean) << ',' << fmt(s.photometric.mean) << ','
        << fmt(s.geometric.mean) << ',' << fmt(s.iou.mean) << '\n';
    out << name << "_std,," << fmt(s.weighted_loss.std) << ',' << fmt(s.photometric.std) << ','
        << fmt(s.geometric.std) << ',' << fmt(s.iou.std) << '\n';
}

} // namespace

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "row,index,weighted_loss,photometric,geometric,iou\n";
    for (const auto& r : report.rows)
        out << "sample," << r.index << ',' << fmt(r.weighted_loss) << ',' << fmt(r.photometric) << ','
            << fmt(r.geometric) << ',' << fmt(r.iou) << '\n';
    summary_rows(out, "network", report.network);
    summary_rows(out, "mean_predictor", report.baseline);
}

std::string format_summary(const EvalReport& report) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %8s %24s %22s %22s %24s\n", "approach", "samples", "weighted loss",
                  "photometric [8 bit]", "geometric [mm]", "IOU [%]");
    out << line;
    auto row = [&](const char* name, const EvalSummary& s) {
        std::snprintf(line, sizeof line, "%-16s %8zu %12.2f +-%9.2f %11.2f +-%7.2f %11.3f +-%7.3f %11.2f +-%7.2f\n",
                      name, s.count, s.weighted_loss.mean, s.weighted_loss.std, s.photometric.mean,
                      s.photometric.std, s.geometric.mean, s.geometric.std, s.iou.mean, s.iou.std);
        out << line;
    };
    row("network", report.network);
    row("mean predictor", report.baseline);
    return out.str();
}

} // namespace ifr
