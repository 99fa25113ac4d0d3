#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pdfuse {

// Dense 3-D scalar grid, slice-major: index = (z * height + y) * width + x.
// The slice index varies slowest, then row, then column.
struct Volume {
    std::uint32_t depth = 0;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<float> voxels;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(depth) * height * width;
    }

    float at(std::uint32_t z, std::uint32_t y, std::uint32_t x) const {
        return voxels[(static_cast<std::size_t>(z) * height + y) * width + x];
    }
    float& at(std::uint32_t z, std::uint32_t y, std::uint32_t x) {
        return voxels[(static_cast<std::size_t>(z) * height + y) * width + x];
    }

    bool same_dims(const Volume& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }

    static Volume zeros(std::uint32_t d, std::uint32_t h, std::uint32_t w);

    // throws on count mismatch or non-finite voxels
    void validate() const;
};

bool operator==(const Volume& a, const Volume& b);

// VOL1 on-disk format, bit-exact:
//   bytes 0-3   ASCII "VOL1"
//   bytes 4-15  u32 LE depth, height, width
//   remainder   depth*height*width IEEE-754 binary32 LE, slice-major
Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& v, const std::filesystem::path& path);

} // namespace pdfuse
