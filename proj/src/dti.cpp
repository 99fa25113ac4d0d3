#include "pdfuse/dti.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pdfuse::dti {

namespace {

constexpr char kMagic[4] = {'T', 'E', 'N', '1'};
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
        throw std::runtime_error(std::string("tensor file truncated while reading ") + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_le(std::ostream& out, float f) {
    static_assert(sizeof(float) == 4);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32_le(out, bits);
}

float read_f32_le(std::istream& in, const char* what) {
    const std::uint32_t bits = read_u32_le(in, what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace

EigenTriple eigenvalues_sym3(const Sym3Tensor& t) {
    const double off = t.dxy * t.dxy + t.dxz * t.dxz + t.dyz * t.dyz;
    if (off == 0.0) {
        double l[3] = {t.dxx, t.dyy, t.dzz};
        std::sort(l, l + 3, std::greater<double>());
        return {l[0], l[1], l[2]};
    }

    const double q = (t.dxx + t.dyy + t.dzz) / 3.0;
    const double p2 = (t.dxx - q) * (t.dxx - q) + (t.dyy - q) * (t.dyy - q) +
                      (t.dzz - q) * (t.dzz - q) + 2.0 * off;
    const double p = std::sqrt(p2 / 6.0);

    // B = (A - qI) / p
    const double bxx = (t.dxx - q) / p;
    const double byy = (t.dyy - q) / p;
    const double bzz = (t.dzz - q) / p;
    const double bxy = t.dxy / p;
    const double bxz = t.dxz / p;
    const double byz = t.dyz / p;

    const double det_b = bxx * (byy * bzz - byz * byz) - bxy * (bxy * bzz - byz * bxz) +
                         bxz * (bxy * byz - byy * bxz);
    const double r = std::clamp(det_b / 2.0, -1.0, 1.0);

    const double phi = std::acos(r) / 3.0;
    const double two_pi_third = 2.0943951023931953;
    const double l1 = q + 2.0 * p * std::cos(phi);
    const double l3 = q + 2.0 * p * std::cos(phi + two_pi_third);
    const double l2 = 3.0 * q - l1 - l3;
    return {l1, l2, l3};
}

double mean_diffusivity(const Sym3Tensor& t) {
    return (t.dxx + t.dyy + t.dzz) / 3.0;
}

double fractional_anisotropy(const EigenTriple& e) {
    const double ss = e.l1 * e.l1 + e.l2 * e.l2 + e.l3 * e.l3;
    if (ss == 0.0) {
        return 0.0;
    }
    const double d12 = e.l1 - e.l2;
    const double d23 = e.l2 - e.l3;
    const double d31 = e.l3 - e.l1;
    return std::sqrt(0.5) * std::sqrt((d12 * d12 + d23 * d23 + d31 * d31) / ss);
}

ScalarMaps compute_scalar_maps(const TensorVolume& tv) {
    if (tv.tensors.size() != tv.voxel_count()) {
        throw std::runtime_error("tensor volume count does not match dimensions");
    }
    ScalarMaps maps;
    maps.md = Volume::zeros(tv.depth, tv.height, tv.width);
    maps.fa = Volume::zeros(tv.depth, tv.height, tv.width);
    for (std::size_t i = 0; i < tv.tensors.size(); ++i) {
        const Sym3Tensor& t = tv.tensors[i];
        maps.md.voxels[i] = static_cast<float>(mean_diffusivity(t));
        const double raw = fractional_anisotropy(eigenvalues_sym3(t));
        double fa = raw;
        if (raw < 0.0 || raw > 1.0) {
            fa = std::clamp(raw, 0.0, 1.0);
            maps.fa_clamped++;
        }
        maps.fa.voxels[i] = static_cast<float>(fa);
    }
    return maps;
}

TensorVolume read_tensor_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open tensor file: " + path.string());
    }
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("bad magic in tensor file (expected TEN1): " + path.string());
    }
    TensorVolume tv;
    tv.depth = read_u32_le(in, "depth");
    tv.height = read_u32_le(in, "height");
    tv.width = read_u32_le(in, "width");
    const std::uint64_t count = static_cast<std::uint64_t>(tv.depth) * tv.height * tv.width;
    if (count > kMaxVoxels) {
        throw std::runtime_error("tensor volume dimensions overflow sanity bound in " + path.string());
    }
    tv.tensors.resize(static_cast<std::size_t>(count));
    for (Sym3Tensor& t : tv.tensors) {
        t.dxx = read_f32_le(in, "Dxx");
        t.dyy = read_f32_le(in, "Dyy");
        t.dzz = read_f32_le(in, "Dzz");
        t.dxy = read_f32_le(in, "Dxy");
        t.dxz = read_f32_le(in, "Dxz");
        t.dyz = read_f32_le(in, "Dyz");
        if (!std::isfinite(t.dxx) || !std::isfinite(t.dyy) || !std::isfinite(t.dzz) ||
            !std::isfinite(t.dxy) || !std::isfinite(t.dxz) || !std::isfinite(t.dyz)) {
            throw std::runtime_error("tensor file contains a non-finite entry: " + path.string());
        }
    }
    return tv;
}

std::size_t convert_tensor_file(const std::filesystem::path& tensors_path,
                                const std::filesystem::path& md_path,
                                const std::filesystem::path& fa_path) {
    const ScalarMaps maps = compute_scalar_maps(read_tensor_volume(tensors_path));
    write_volume(maps.md, md_path);
    write_volume(maps.fa, fa_path);
    return maps.fa_clamped;
}

void write_tensor_volume(const TensorVolume& tv, const std::filesystem::path& path) {
    if (tv.tensors.size() != tv.voxel_count()) {
        throw std::runtime_error("tensor volume count does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open tensor file for writing: " + path.string());
    }
    out.write(kMagic, 4);
    write_u32_le(out, tv.depth);
    write_u32_le(out, tv.height);
    write_u32_le(out, tv.width);
    for (const Sym3Tensor& t : tv.tensors) {
        write_f32_le(out, static_cast<float>(t.dxx));
        write_f32_le(out, static_cast<float>(t.dyy));
        write_f32_le(out, static_cast<float>(t.dzz));
        write_f32_le(out, static_cast<float>(t.dxy));
        write_f32_le(out, static_cast<float>(t.dxz));
        write_f32_le(out, static_cast<float>(t.dyz));
    }
    if (!out) {
        throw std::runtime_error("write failed for tensor file: " + path.string());
    }
}

} // namespace pdfuse::dti
