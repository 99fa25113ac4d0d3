#include "pdfuse/volume.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pdfuse {

namespace {

constexpr char kMagic[4] = {'V', 'O', 'L', '1'};

// Dimension product cap; anything above this is a corrupt or hostile header.
constexpr std::uint64_t kMaxVoxels = 1ULL << 31;

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error(std::string("volume file truncated while reading ") + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(sizeof(float) == 4, "binary32 layout assumed");

bool host_little_endian() {
    const std::uint16_t probe = 0x0102;
    unsigned char first;
    std::memcpy(&first, &probe, 1);
    return first == 0x02;
}

void swap4(float* data, std::size_t count) {
    auto* bytes = reinterpret_cast<unsigned char*>(data);
    for (std::size_t i = 0; i < count; ++i, bytes += 4) {
        std::swap(bytes[0], bytes[3]);
        std::swap(bytes[1], bytes[2]);
    }
}

} // namespace

Volume Volume::zeros(std::uint32_t d, std::uint32_t h, std::uint32_t w) {
    Volume v;
    v.depth = d;
    v.height = h;
    v.width = w;
    v.voxels.assign(static_cast<std::size_t>(d) * h * w, 0.0f);
    return v;
}

void Volume::validate() const {
    if (voxels.size() != voxel_count()) {
        throw std::runtime_error("volume voxel count does not match dimensions");
    }
    for (float f : voxels) {
        if (!std::isfinite(f)) {
            throw std::runtime_error("volume contains a non-finite voxel");
        }
    }
}

bool operator==(const Volume& a, const Volume& b) {
    return a.same_dims(b) && a.voxels == b.voxels;
}

Volume read_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open volume file: " + path.string());
    }
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("bad magic in volume file (expected VOL1): " + path.string());
    }
    Volume v;
    v.depth = read_u32_le(in, "depth");
    v.height = read_u32_le(in, "height");
    v.width = read_u32_le(in, "width");

    const std::uint64_t count =
        static_cast<std::uint64_t>(v.depth) * v.height * v.width;
    if (count > kMaxVoxels) {
        throw std::runtime_error("volume dimensions overflow sanity bound in " + path.string());
    }
    v.voxels.resize(static_cast<std::size_t>(count));
    const std::streamsize bytes = static_cast<std::streamsize>(count * sizeof(float));
    if (!in.read(reinterpret_cast<char*>(v.voxels.data()), bytes) || in.gcount() != bytes) {
        throw std::runtime_error("volume payload truncated in " + path.string());
    }
    if (!host_little_endian()) {
        swap4(v.voxels.data(), v.voxels.size());
    }
    for (float f : v.voxels) {
        if (!std::isfinite(f)) {
            throw std::runtime_error("volume contains a non-finite voxel: " + path.string());
        }
    }
    return v;
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
    v.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open volume file for writing: " + path.string());
    }
    out.write(kMagic, 4);
    write_u32_le(out, v.depth);
    write_u32_le(out, v.height);
    write_u32_le(out, v.width);
    if (host_little_endian()) {
        out.write(reinterpret_cast<const char*>(v.voxels.data()),
                  static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    } else {
        std::vector<float> tmp = v.voxels;
        swap4(tmp.data(), tmp.size());
        out.write(reinterpret_cast<const char*>(tmp.data()),
                  static_cast<std::streamsize>(tmp.size() * sizeof(float)));
    }
    if (!out) {
        throw std::runtime_error("write failed for volume file: " + path.string());
    }
}

} // namespace pdfuse
