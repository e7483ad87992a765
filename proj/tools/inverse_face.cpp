// inverse-face: command-line front end for model generation, corpus
// synthesis, training, breeding, inference, rendering and evaluation.

#include "ifr/breeding.hpp"
#include "ifr/config.hpp"
#include "ifr/corpus.hpp"
#include "ifr/error.hpp"
#include "ifr/evaluation.hpp"
#include "ifr/face_model.hpp"
#include "ifr/image_io.hpp"
#include "ifr/parallel.hpp"
#include "ifr/regressor.hpp"
#include "ifr/renderer.hpp"

#include <CLI11.hpp>
#include <cblas.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

using namespace ifr;

namespace {

struct Paths {
    std::string config, model, corpus, net, target, out, trace, metrics, image, params, mask, compare, report,
        held_out, bred_dir, init;
};

unsigned env_threads() {
    if (const char* v = std::getenv("IFR_THREADS")) {
        char* end = nullptr;
        const unsigned long n = std::strtoul(v, &end, 10);
        if (end == v || *end != '\0') throw InvalidArgument(std::string("IFR_THREADS must be an integer, got '") + v + "'");
        return static_cast<unsigned>(n);
    }
    return 0;
}

// Command-line flag, then config, then environment.
unsigned pick_threads(int flag, const ExperimentConfig* config) {
    if (flag >= 0) return resolve_threads(static_cast<unsigned>(flag));
    if (config && config->threads) return config->threads;
    return resolve_threads(env_threads());
}

TrainingSet load_training_set(const std::filesystem::path& path, const FaceModel& model, std::uint32_t resolution) {
    ShardReader reader(path);
    check_compatible(reader.header(), model);
    const ParameterLayout layout(model.spec);
    TrainingSet set(resolution, layout);
    set.reserve(reader.header().record_count);
    std::vector<double> params(layout.m());
    while (auto r = reader.next()) {
        std::copy(r->params.begin(), r->params.end(), params.begin());
        set.add(r->image, reader.header().width, reader.header().height, params);
    }
    return set;
}

void require_camera_match(const ShardHeader& h, const CameraSpec& cam, const std::string& path) {
    if (h.width != cam.width || h.height != cam.height)
        throw DimensionMismatch(path + ": shard images are " + std::to_string(h.width) + "x" + std::to_string(h.height) +
                                " but the config camera is " + std::to_string(cam.width) + "x" +
                                std::to_string(cam.height));
}

std::vector<RenderedSample> decode(const CorpusShard& shard, const FaceModel& model) {
    std::vector<RenderedSample> out;
    out.reserve(shard.records.size());
    const ParameterLayout layout(model.spec);
    for (const auto& r : shard.records) out.push_back(to_sample(r, shard.header, layout));
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << text;
    if (!out) throw IoError(path.string() + ": write failed");
}

int cmd_gen_model(const Paths& p) {
    const auto config = load_config(p.config);
    save_model(generate_model(config.model), p.out);
    return 0;
}

int cmd_gen_corpus(const Paths& p, const std::string& prior_name, std::uint64_t count, std::uint64_t first,
                   int threads_flag) {
    const auto config = load_config(p.config);
    const auto model = load_model(p.model);
    if (model.spec != config.model)
        throw DimensionMismatch(p.model + ": model does not match the config's model section");
    GenerateOptions opt;
    opt.threads = pick_threads(threads_flag, &config);
    const auto shard = [&] {
        CorpusShard s;
        s.header.m = static_cast<std::uint32_t>(model.spec.m());
        s.header.width = config.camera.width;
        s.header.height = config.camera.height;
        s.header.global_seed = config.prior(prior_name).rng_seed;
        generate_records(
            model, config.camera, config.prior(prior_name), first, count, opt,
            [&](std::uint64_t, RenderedSample&& r) { s.records.push_back(to_record(r)); },
            [&](std::uint64_t i) { s.header.skipped.push_back(i); });
        s.header.record_count = s.records.size();
        return s;
    }();
    if (shard.records.empty()) throw Error("no record could be rendered; nothing written to " + p.out);
    if (!shard.header.skipped.empty())
        std::fprintf(stderr, "inverse-face: %zu of %llu records skipped (face behind the camera)\n",
                     shard.header.skipped.size(), static_cast<unsigned long long>(count));
    write_shard(shard, p.out);
    return 0;
}

int cmd_train(const Paths& p, std::optional<std::uint64_t> iters) {
    const auto config = load_config(p.config);
    const auto model = load_model(p.model);
    RegressorState state = p.init.empty() ? RegressorState(config.network, config.training.init_seed)
                                          : load_state(p.init);
    if (state.spec().layout != ParameterLayout(model.spec))
        throw DimensionMismatch("network outputs do not match model " + p.model);
    const auto data = load_training_set(p.corpus, model, state.spec().input_resolution);
    auto opt = config.train_options(model);
    if (iters) opt.iterations = *iters;
    const auto result = train(state, data, opt);
    save_state(state, p.out);
    if (!p.trace.empty()) write_trace_csv(result.trace, p.trace);
    if (!result.trace.empty())
        std::fprintf(stderr, "inverse-face: %llu iterations, final window loss %.6g\n",
                     static_cast<unsigned long long>(result.trace.back().iteration), result.trace.back().loss);
    return 0;
}

int cmd_breed(const Paths& p, int threads_flag) {
    const auto config = load_config(p.config);
    const auto model = load_model(p.model);
    RegressorState state = load_state(p.net);
    const auto target = read_shard(std::filesystem::path(p.target));
    check_compatible(target.header, model);
    require_camera_match(target.header, config.camera, p.target);

    BreedOptions opt;
    opt.finetune = config.train_options(model);
    opt.threads = pick_threads(threads_flag, &config);
    std::vector<RenderedSample> held;
    if (!p.held_out.empty()) {
        const auto shard = read_shard(std::filesystem::path(p.held_out));
        check_compatible(shard.header, model);
        require_camera_match(shard.header, config.camera, p.held_out);
        held = decode(shard, model);
        opt.held_out = held;
    }
    if (!p.bred_dir.empty()) {
        std::filesystem::create_directories(p.bred_dir);
        opt.on_bred_corpus = [&](std::uint32_t round, const CorpusShard& bred) {
            if (bred.records.empty()) return;
            write_shard(bred, std::filesystem::path(p.bred_dir) / ("round_" + std::to_string(round) + ".ifnc"));
        };
    }
    const auto result = breed(state, target, model, config.camera, config.breeding, opt);
    save_state(state, p.out);
    if (!p.metrics.empty()) write_round_metrics_csv(result.rounds, p.metrics);
    return 0;
}

int cmd_infer(const Paths& p) {
    const auto state = load_state(p.net);
    const auto img = read_ppm(p.image);
    if (img.width != img.height)
        throw DimensionMismatch(p.image + ": expected a square image, got " + std::to_string(img.width) + "x" +
                                std::to_string(img.height));
    const auto theta = predict(state, img.data, img.width, img.height);
    write_text(p.out, parameters_to_json(theta).dump(2) + "\n");
    return 0;
}

int cmd_render(const Paths& p, std::uint32_t resolution) {
    const auto model = load_model(p.model);
    CameraSpec camera;
    if (!p.config.empty()) camera = load_config(p.config).camera;
    if (resolution) camera.width = camera.height = resolution;
    camera.validate();

    std::ifstream in(p.params);
    if (!in) throw IoError(p.params + ": cannot open parameters");
    ParameterVector theta;
    try {
        theta = parameters_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(p.params + ": " + e.what());
    } catch (const Error& e) {
        throw FormatError(p.params + ": " + e.what());
    }
    check_dimensions(model, theta);
    const auto sample = render(model, camera, theta);
    write_ppm(p.out, sample.width, sample.height, sample.image);
    if (!p.mask.empty()) write_pgm_mask(p.mask, sample.width, sample.height, sample.mask);
    if (!p.compare.empty()) {
        const auto ref = read_pgm_mask(p.compare);
        if (ref.width != sample.width || ref.height != sample.height)
            throw DimensionMismatch(p.compare + ": mask size differs from the render");
        std::fprintf(stderr, "IOU vs %s: %.2f\n", p.compare.c_str(), iou(ref.data, sample.mask));
    }
    return 0;
}

int cmd_eval(const Paths& p, int threads_flag) {
    const auto config = load_config(p.config);
    const auto model = load_model(p.model);
    const auto state = load_state(p.net);
    const auto test = read_shard(std::filesystem::path(p.corpus));
    check_compatible(test.header, model);
    require_camera_match(test.header, config.camera, p.corpus);
    EvalOptions opt;
    opt.threads = pick_threads(threads_flag, &config);
    opt.metric = config.train_options(model).metric;
    const auto report = evaluate(state, test, model, config.camera, opt);
    if (!p.report.empty()) write_report_csv(report, p.report);
    std::cout << format_summary(report);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    // Parallelism comes from our own workers; keep BLAS on the calling thread.
    openblas_set_num_threads(1);

    CLI::App app{"Inverse face rendering: synthesize, train, breed and evaluate a single-shot face regressor"};
    app.require_subcommand(1);
    int threads = -1;
    app.add_option("--threads", threads, "Worker threads (0 = all cores; default from config or IFR_THREADS)")
        ->check(CLI::NonNegativeNumber);

    Paths p;
    std::string prior_name = "base";
    std::uint64_t count = 0, first = 0;
    std::optional<std::uint64_t> iters;
    std::uint32_t resolution = 0;

    auto* gen_model = app.add_subcommand("gen-model", "Generate the procedural face model");
    gen_model->add_option("--config", p.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    gen_model->add_option("--out", p.out, "Output model (.ifnm)")->required();

    auto* gen_corpus = app.add_subcommand("gen-corpus", "Render a labelled corpus shard from a prior");
    gen_corpus->add_option("--config", p.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    gen_corpus->add_option("--model", p.model, "Face model (.ifnm)")->required();
    gen_corpus->add_option("--prior", prior_name, "Prior section to sample")->check(CLI::IsMember({"base", "target"}));
    gen_corpus->add_option("--count", count, "Number of records")->required()->check(CLI::PositiveNumber);
    gen_corpus->add_option("--first", first, "Index of the first record");
    gen_corpus->add_option("--out", p.out, "Output shard (.ifnc)")->required();

    auto* train_cmd = app.add_subcommand("train", "Train the regressor on a corpus shard");
    train_cmd->add_option("--config", p.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--model", p.model, "Face model (.ifnm)")->required();
    train_cmd->add_option("--corpus", p.corpus, "Training shard (.ifnc)")->required();
    train_cmd->add_option("--iters", iters, "Iterations (default from config)");
    train_cmd->add_option("--init", p.init, "Continue from this network instead of a fresh one");
    train_cmd->add_option("--out", p.out, "Output network (.ifnw)")->required();
    train_cmd->add_option("--trace", p.trace, "Loss trace CSV");

    auto* breed_cmd = app.add_subcommand("breed", "Adapt a trained network to unlabelled target images");
    breed_cmd->add_option("--config", p.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    breed_cmd->add_option("--model", p.model, "Face model (.ifnm)")->required();
    breed_cmd->add_option("--net", p.net, "Warm-started network (.ifnw)")->required();
    breed_cmd->add_option("--target", p.target, "Target shard; only its images are used")->required();
    breed_cmd->add_option("--held-out", p.held_out, "Labelled shard scored after every round");
    breed_cmd->add_option("--bred-dir", p.bred_dir, "Directory for each round's bred shard");
    breed_cmd->add_option("--out", p.out, "Output network (.ifnw)")->required();
    breed_cmd->add_option("--metrics", p.metrics, "Per-round metrics CSV");

    auto* infer_cmd = app.add_subcommand("infer", "Regress parameters from a pre-masked square PPM");
    infer_cmd->add_option("--net", p.net, "Network (.ifnw)")->required();
    infer_cmd->add_option("--image", p.image, "Input image (binary PPM)")->required();
    infer_cmd->add_option("--out", p.out, "Output parameters (JSON)")->required();

    auto* render_cmd = app.add_subcommand("render", "Render a parameter vector");
    render_cmd->add_option("--model", p.model, "Face model (.ifnm)")->required();
    render_cmd->add_option("--params", p.params, "Parameters (JSON)")->required();
    render_cmd->add_option("--config", p.config, "Take the camera from this config")->check(CLI::ExistingFile);
    render_cmd->add_option("--resolution", resolution, "Square output size (overrides the config)");
    render_cmd->add_option("--out", p.out, "Output image (PPM)")->required();
    render_cmd->add_option("--mask", p.mask, "Output mask (PGM)");
    render_cmd->add_option("--compare", p.compare, "Reference mask (PGM); IOU is reported on stderr");

    auto* eval_cmd = app.add_subcommand("eval", "Score a network and the mean predictor on a labelled shard");
    eval_cmd->add_option("--config", p.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--model", p.model, "Face model (.ifnm)")->required();
    eval_cmd->add_option("--net", p.net, "Network (.ifnw)")->required();
    eval_cmd->add_option("--corpus", p.corpus, "Test shard (.ifnc)")->required();
    eval_cmd->add_option("--report", p.report, "Per-sample CSV report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen_model) return cmd_gen_model(p);
        if (*gen_corpus) return cmd_gen_corpus(p, prior_name, count, first, threads);
        if (*train_cmd) return cmd_train(p, iters);
        if (*breed_cmd) return cmd_breed(p, threads);
        if (*infer_cmd) return cmd_infer(p);
        if (*render_cmd) return cmd_render(p, resolution);
        if (*eval_cmd) return cmd_eval(p, threads);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& c : msg)
            if (c == '\n') c = ' ';
        std::fprintf(stderr, "inverse-face: error: %s\n", msg.c_str());
        return 1;
    }
    return 1;
}
