#include "ifr/corpus.hpp"

#include "ifr/binary_io.hpp"
#include "ifr/error.hpp"
#include "ifr/parallel.hpp"
#include "ifr/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace ifr {

namespace {

constexpr std::uint32_t kShardVersion = 1;

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

std::mt19937_64 group_rng(const PriorSpec& prior, std::uint64_t index, ParamGroup g) {
    return std::mt19937_64(mix_seed(prior.rng_seed, {index, static_cast<std::uint64_t>(g)}));
}

void write_header(binary::Writer& w, const ShardHeader& h) {
    w.magic("IFNC");
    w.put<std::uint32_t>(kShardVersion);
    w.put<std::uint64_t>(h.record_count);
    w.put<std::uint32_t>(h.m);
    w.put<std::uint32_t>(h.width);
    w.put<std::uint32_t>(h.height);
    w.put<std::uint64_t>(h.global_seed);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(h.skipped.size()));
    w.put_array<std::uint64_t>(h.skipped);
}

ShardHeader read_header(binary::Reader& r) {
    r.expect_magic("IFNC");
    const auto version = r.get<std::uint32_t>();
    if (version != kShardVersion)
        throw FormatError(r.source() + ": unsupported shard version " + std::to_string(version));
    ShardHeader h;
    h.record_count = r.get<std::uint64_t>();
    h.m = r.get<std::uint32_t>();
    h.width = r.get<std::uint32_t>();
    h.height = r.get<std::uint32_t>();
    h.global_seed = r.get<std::uint64_t>();
    h.skipped.resize(r.get<std::uint32_t>());
    r.get_array<std::uint64_t>(h.skipped);
    if (h.record_count == 0) throw FormatError(r.source() + ": shard declares zero records");
    if (h.m == 0 || h.width == 0 || h.height == 0) throw FormatError(r.source() + ": shard header has zero dimensions");
    return h;
}

void write_record(binary::Writer& w, const ShardHeader& h, const ShardRecord& rec) {
    if (rec.params.size() != h.m || rec.image.size() != h.image_bytes() ||
        rec.mask.size() != std::size_t{h.width} * h.height)
        throw DimensionMismatch("shard record does not match its header");
    w.put_array<float>(rec.params);
    w.put_array<std::uint8_t>(rec.image);
    std::vector<std::uint8_t> packed(h.mask_bytes(), 0);
    for (std::size_t i = 0; i < rec.mask.size(); ++i)
        if (rec.mask[i]) packed[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    w.put_array<std::uint8_t>(packed);
}

ShardRecord read_record(binary::Reader& r, const ShardHeader& h) {
    ShardRecord rec;
    rec.params.resize(h.m);
    rec.image.resize(h.image_bytes());
    r.get_array<float>(rec.params);
    r.get_array<std::uint8_t>(rec.image);
    std::vector<std::uint8_t> packed(h.mask_bytes());
    r.get_array<std::uint8_t>(packed);
    rec.mask.resize(std::size_t{h.width} * h.height);
    for (std::size_t i = 0; i < rec.mask.size(); ++i) rec.mask[i] = (packed[i / 8] >> (7 - i % 8)) & 1u;
    return rec;
}

} // namespace

void PriorSpec::validate() const {
    if (!(yaw_pitch_range_deg > 0) || !(roll_range_deg > 0)) throw InvalidArgument("rotation ranges must be positive");
    if (!(expr_max > expr_min)) throw InvalidArgument("expression range is degenerate");
    if (!(illum_ac_range > 0)) throw InvalidArgument("illumination ac range must be positive");
    if (!(illum_dc_min > 0) || !(illum_dc_max > illum_dc_min))
        throw InvalidArgument("illumination dc range must be positive and non-degenerate");
}

ParameterVector sample_prior(const PriorSpec& prior, const ParameterLayout& layout, std::uint64_t index) {
    ParameterVector p = ParameterVector::zeros(layout);

    {
        auto rng = group_rng(prior, index, ParamGroup::rotation);
        const double yp = deg2rad(prior.yaw_pitch_range_deg), roll = deg2rad(prior.roll_range_deg);
        std::uniform_real_distribution<double> u_yp(-yp, yp), u_roll(-roll, roll);
        p.rotation[0] = f32(u_yp(rng));
        p.rotation[1] = f32(u_yp(rng));
        p.rotation[2] = f32(u_roll(rng));
    }
    if (prior.shape_normal) {
        auto rng = group_rng(prior, index, ParamGroup::shape);
        std::normal_distribution<double> n(0.0, 1.0);
        for (auto& v : p.shape) v = f32(n(rng));
    }
    {
        auto rng = group_rng(prior, index, ParamGroup::expression);
        std::uniform_real_distribution<double> u(prior.expr_min, prior.expr_max);
        for (auto& v : p.expression) v = u(rng);
        if (!p.expression.empty()) p.expression[0] += prior.expr_bias_first;
        for (auto& v : p.expression) v = f32(v);
    }
    if (prior.refl_normal) {
        auto rng = group_rng(prior, index, ParamGroup::reflectance);
        std::normal_distribution<double> n(0.0, 1.0);
        for (auto& v : p.reflectance) v = f32(n(rng));
    }
    {
        auto rng = group_rng(prior, index, ParamGroup::illumination);
        std::uniform_real_distribution<double> dc(prior.illum_dc_min, prior.illum_dc_max);
        std::uniform_real_distribution<double> ac(-prior.illum_ac_range, prior.illum_ac_range);
        for (int k = 0; k < kShBands; ++k) {
            auto& dist = k == 0 ? dc : ac;
            if (prior.monochrome) {
                const double v = f32(dist(rng));
                for (int c = 0; c < 3; ++c) p.light(k, c) = v;
            } else {
                for (int c = 0; c < 3; ++c) p.light(k, c) = f32(dist(rng));
            }
        }
    }
    return p;
}

std::vector<float> prior_std(const PriorSpec& prior, const ParameterLayout& layout) {
    const double sqrt12 = std::sqrt(12.0);
    std::vector<float> s;
    s.reserve(layout.m());
    const double yp = 2 * deg2rad(prior.yaw_pitch_range_deg) / sqrt12;
    s.insert(s.end(), {static_cast<float>(yp), static_cast<float>(yp),
                       static_cast<float>(2 * deg2rad(prior.roll_range_deg) / sqrt12)});
    s.insert(s.end(), layout.n_shape, prior.shape_normal ? 1.0f : 0.0f);
    s.insert(s.end(), layout.n_expr, static_cast<float>((prior.expr_max - prior.expr_min) / sqrt12));
    s.insert(s.end(), layout.n_refl, prior.refl_normal ? 1.0f : 0.0f);
    s.insert(s.end(), 3, static_cast<float>((prior.illum_dc_max - prior.illum_dc_min) / sqrt12));
    s.insert(s.end(), kIlluminationSize - 3, static_cast<float>(2 * prior.illum_ac_range / sqrt12));
    return s;
}

ParameterVector ShardRecord::parameters(const ParameterLayout& layout) const {
    std::vector<double> flat(params.begin(), params.end());
    return ParameterVector::from_flat(flat, layout);
}

ShardRecord to_record(const RenderedSample& sample) {
    ShardRecord rec;
    const auto flat = sample.params.flatten();
    rec.params.assign(flat.begin(), flat.end());
    rec.image = sample.image;
    rec.mask = sample.mask;
    return rec;
}

RenderedSample to_sample(const ShardRecord& record, const ShardHeader& header, const ParameterLayout& layout) {
    RenderedSample s;
    s.width = header.width;
    s.height = header.height;
    s.image = record.image;
    s.mask = record.mask;
    s.params = record.parameters(layout);
    return s;
}

void check_compatible(const ShardHeader& header, const FaceModel& model) {
    if (header.m != model.spec.m())
        throw DimensionMismatch("shard parameter count m=" + std::to_string(header.m) +
                                " does not match the face model (m=" + std::to_string(model.spec.m()) + ")");
}

void generate_records(const FaceModel& model, const CameraSpec& camera, const PriorSpec& prior,
                      std::uint64_t first, std::uint64_t count, const GenerateOptions& options,
                      const std::function<void(std::uint64_t, RenderedSample&&)>& sink,
                      const std::function<void(std::uint64_t)>& on_skip) {
    prior.validate();
    camera.validate();
    const ParameterLayout layout(model.spec);
    const std::size_t block = std::max<std::size_t>(1, options.block);
    std::vector<std::optional<RenderedSample>> slots;
    for (std::uint64_t start = 0; start < count; start += block) {
        const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(block, count - start));
        slots.assign(n, std::nullopt);
        parallel_for(n, options.threads, [&](std::size_t i) {
            const std::uint64_t index = first + start + i;
            try {
                slots[i] = render(model, camera, sample_prior(prior, layout, index));
            } catch (const ProjectionError&) {
                slots[i].reset();
            }
        });
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t index = first + start + i;
            if (slots[i]) {
                sink(index, std::move(*slots[i]));
            } else if (on_skip) {
                on_skip(index);
            }
        }
    }
}

CorpusShard generate_corpus(const FaceModel& model, const CameraSpec& camera, const PriorSpec& prior,
                            std::uint64_t count, const GenerateOptions& options) {
    if (count == 0) throw InvalidArgument("corpus count must be at least 1");
    CorpusShard shard;
    shard.header.m = static_cast<std::uint32_t>(model.spec.m());
    shard.header.width = camera.width;
    shard.header.height = camera.height;
    shard.header.global_seed = prior.rng_seed;
    shard.records.reserve(count);
    generate_records(
        model, camera, prior, 0, count, options,
        [&](std::uint64_t, RenderedSample&& s) { shard.records.push_back(to_record(s)); },
        [&](std::uint64_t index) { shard.header.skipped.push_back(index); });
    shard.header.record_count = shard.records.size();
    if (shard.records.empty()) throw Error("every record of the corpus failed to render");
    return shard;
}

void write_shard(const CorpusShard& shard, std::ostream& out) {
    if (shard.records.empty()) throw InvalidArgument("cannot write an empty shard");
    if (shard.header.record_count != shard.records.size())
        throw DimensionMismatch("shard header record_count disagrees with the record list");
    binary::Writer w(out);
    write_header(w, shard.header);
    for (const auto& rec : shard.records) write_record(w, shard.header, rec);
}

void write_shard(const CorpusShard& shard, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    write_shard(shard, out);
}

CorpusShard read_shard(std::istream& in, const std::string& source) {
    binary::Reader r(in, source);
    CorpusShard shard;
    shard.header = read_header(r);
    shard.records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(shard.header.record_count, 1u << 20)));
    for (std::uint64_t i = 0; i < shard.header.record_count; ++i) shard.records.push_back(read_record(r, shard.header));
    if (!r.at_end()) throw FormatError(source + ": trailing bytes after the last record");
    return shard;
}

CorpusShard read_shard(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    return read_shard(in, path.string());
}

ShardReader::ShardReader(const std::filesystem::path& path) : in_(path, std::ios::binary), source_(path.string()) {
    if (!in_) throw IoError(source_ + ": cannot open for reading");
    binary::Reader r(in_, source_);
    header_ = read_header(r);
}

std::optional<ShardRecord> ShardReader::next() {
    binary::Reader r(in_, source_);
    if (consumed_ == header_.record_count) {
        if (!r.at_end()) throw FormatError(source_ + ": trailing bytes after the last record");
        return std::nullopt;
    }
    ++consumed_;
    return read_record(r, header_);
}

} // namespace ifr
