#pragma once

#include "ifr/face_model.hpp"
#include "ifr/renderer.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <vector>

namespace ifr {

// Independent per-group sampling distributions for parameter vectors.
struct PriorSpec {
    double yaw_pitch_range_deg = 40.0; // alpha, beta ~ U(-r, r)
    double roll_range_deg = 15.0;      // gamma ~ U(-r, r)
    bool shape_normal = true;          // N(0,1) when set, else 0
    bool refl_normal = true;
    double expr_min = -12.0;
    double expr_max = 12.0;
    double expr_bias_first = 4.8;      // added to expression dimension 1
    double illum_ac_range = 0.2;       // bands 2..9 ~ U(-r, r)
    double illum_dc_min = 0.6;         // band 1 ~ U(min, max)
    double illum_dc_max = 1.2;
    bool monochrome = true;            // replicate each band across RGB
    std::uint64_t rng_seed = 1;

    void validate() const;
    friend bool operator==(const PriorSpec&, const PriorSpec&) = default;
};

// Parameter group identifiers used for per-group seeding.
enum class ParamGroup : std::uint64_t { rotation = 0, shape = 1, expression = 2, reflectance = 3, illumination = 4 };

// Draws record `index`. Values are rounded to f32 so a shard stores them exactly.
ParameterVector sample_prior(const PriorSpec& prior, const ParameterLayout& layout, std::uint64_t index);

// Per-dimension standard deviation of the prior, in flattened order.
std::vector<float> prior_std(const PriorSpec& prior, const ParameterLayout& layout);

struct ShardHeader {
    std::uint64_t record_count = 0;
    std::uint32_t m = 0;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint64_t global_seed = 0;
    std::vector<std::uint64_t> skipped; // indices whose render failed

    std::size_t image_bytes() const { return std::size_t{width} * height * 3; }
    std::size_t mask_bytes() const { return (std::size_t{width} * height + 7) / 8; }
    std::size_t record_bytes() const { return 4 * std::size_t{m} + image_bytes() + mask_bytes(); }

    friend bool operator==(const ShardHeader&, const ShardHeader&) = default;
};

struct ShardRecord {
    std::vector<float> params;        // flattened, length m
    std::vector<std::uint8_t> image;  // H*W*3
    std::vector<std::uint8_t> mask;   // H*W, 0/1

    ParameterVector parameters(const ParameterLayout& layout) const;
    friend bool operator==(const ShardRecord&, const ShardRecord&) = default;
};

struct CorpusShard {
    ShardHeader header;
    std::vector<ShardRecord> records;

    friend bool operator==(const CorpusShard&, const CorpusShard&) = default;
};

ShardRecord to_record(const RenderedSample& sample);
RenderedSample to_sample(const ShardRecord& record, const ShardHeader& header, const ParameterLayout& layout);

// Throws DimensionMismatch if the shard was not produced for this model.
void check_compatible(const ShardHeader& header, const FaceModel& model);

struct GenerateOptions {
    unsigned threads = 1;
    std::size_t block = 256; // records rendered per parallel batch
};

// Renders records [first, first+count) and hands each successful one to `sink`
// in index order. Failed renders are reported through `on_skip`.
void generate_records(const FaceModel& model, const CameraSpec& camera, const PriorSpec& prior,
                      std::uint64_t first, std::uint64_t count, const GenerateOptions& options,
                      const std::function<void(std::uint64_t, RenderedSample&&)>& sink,
                      const std::function<void(std::uint64_t)>& on_skip = {});

CorpusShard generate_corpus(const FaceModel& model, const CameraSpec& camera, const PriorSpec& prior,
                            std::uint64_t count, const GenerateOptions& options = {});

void write_shard(const CorpusShard& shard, std::ostream& out);
void write_shard(const CorpusShard& shard, const std::filesystem::path& path);
CorpusShard read_shard(std::istream& in, const std::string& source = "<stream>");
CorpusShard read_shard(const std::filesystem::path& path);

// Sequential record access without loading the whole file.
class ShardReader {
public:
    explicit ShardReader(const std::filesystem::path& path);

    const ShardHeader& header() const { return header_; }
    // Returns nullopt after the last record.
    std::optional<ShardRecord> next();

private:
    std::ifstream in_;
    std::string source_;
    ShardHeader header_;
    std::uint64_t consumed_ = 0;
};

} // namespace ifr
