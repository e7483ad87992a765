#include "ifr/image_io.hpp"

#include "ifr/error.hpp"

#include <cctype>
#include <fstream>
#include <string>

namespace ifr {

namespace {

void write_netpbm(const std::filesystem::path& path, const char* magic, std::uint32_t width, std::uint32_t height,
                  const std::uint8_t* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << magic << '\n' << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError(path.string() + ": write failed");
}

// Reads the next header integer, skipping whitespace and '#' comments.
std::uint32_t header_int(std::istream& in, const std::string& source) {
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    if (ch == EOF) throw TruncationError(source + ": truncated netpbm header");
    if (!std::isdigit(ch)) throw FormatError(source + ": malformed netpbm header");
    std::uint64_t value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + static_cast<std::uint64_t>(ch - '0');
        if (value > 1u << 20) throw FormatError(source + ": netpbm dimension too large");
        ch = in.get();
    }
    // Exactly one whitespace byte separates maxval from the raster.
    if (ch != EOF && !std::isspace(ch)) throw FormatError(source + ": malformed netpbm header");
    return static_cast<std::uint32_t>(value);
}

Image8 read_netpbm(const std::filesystem::path& path, const char* magic, std::uint32_t channels) {
    std::ifstream in(path, std::ios::binary);
    const std::string source = path.string();
    if (!in) throw IoError(source + ": cannot open for reading");
    char tag[2] = {0, 0};
    in.read(tag, 2);
    if (in.gcount() != 2 || tag[0] != magic[0] || tag[1] != magic[1])
        throw FormatError(source + ": expected binary " + magic + " file");
    Image8 img;
    img.channels = channels;
    img.width = header_int(in, source);
    img.height = header_int(in, source);
    const auto maxval = header_int(in, source);
    if (maxval != 255) throw FormatError(source + ": only maxval 255 is supported");
    img.data.resize(std::size_t{img.width} * img.height * channels);
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.data.size())
        throw TruncationError(source + ": truncated raster");
    return img;
}

} // namespace

void write_ppm(const std::filesystem::path& path, std::uint32_t width, std::uint32_t height,
               const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != std::size_t{width} * height * 3) throw DimensionMismatch("ppm payload size mismatch");
    write_netpbm(path, "P6", width, height, rgb.data(), rgb.size());
}

void write_pgm_mask(const std::filesystem::path& path, std::uint32_t width, std::uint32_t height,
                    const std::vector<std::uint8_t>& mask) {
    if (mask.size() != std::size_t{width} * height) throw DimensionMismatch("pgm payload size mismatch");
    std::vector<std::uint8_t> gray(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) gray[i] = mask[i] ? 255 : 0;
    write_netpbm(path, "P5", width, height, gray.data(), gray.size());
}

Image8 read_ppm(const std::filesystem::path& path) { return read_netpbm(path, "P6", 3); }

Image8 read_pgm_mask(const std::filesystem::path& path) {
    Image8 img = read_netpbm(path, "P5", 1);
    for (auto& v : img.data) v = v ? 1 : 0;
    return img;
}

} // namespace ifr
