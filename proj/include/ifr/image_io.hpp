#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ifr {

struct Image8 {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 3;
    std::vector<std::uint8_t> data;
};

// Binary P6, maxval 255.
void write_ppm(const std::filesystem::path& path, std::uint32_t width, std::uint32_t height,
               const std::vector<std::uint8_t>& rgb);
// Binary P5; nonzero mask entries are written as 255.
void write_pgm_mask(const std::filesystem::path& path, std::uint32_t width, std::uint32_t height,
                    const std::vector<std::uint8_t>& mask);

Image8 read_ppm(const std::filesystem::path& path);
// Returns 0/1 entries (any nonzero gray value counts as inside).
Image8 read_pgm_mask(const std::filesystem::path& path);

} // namespace ifr
