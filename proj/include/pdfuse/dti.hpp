#pragma once

#include "pdfuse/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pdfuse::dti {

// Symmetric 3x3 diffusion tensor, mm^2/s nominal.
struct Sym3Tensor {
    double dxx = 0.0;
    double dyy = 0.0;
    double dzz = 0.0;
    double dxy = 0.0;
    double dxz = 0.0;
    double dyz = 0.0;
};

// Eigenvalues in descending order.
struct EigenTriple {
    double l1 = 0.0;
    double l2 = 0.0;
    double l3 = 0.0;
};

struct TensorVolume {
    std::uint32_t depth = 0;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<Sym3Tensor> tensors; // slice-major

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(depth) * height * width;
    }
};

// Closed-form symmetric eigensolver (trigonometric method), stabilized by
// shifting out trace/3 before solving the characteristic cubic. Chosen over
// iterative solvers for cross-platform determinism.
EigenTriple eigenvalues_sym3(const Sym3Tensor& t);

// (Dxx + Dyy + Dzz) / 3, identical to the eigenvalue mean.
double mean_diffusivity(const Sym3Tensor& t);

// sqrt(1/2) * sqrt(((l1-l2)^2 + (l2-l3)^2 + (l3-l1)^2) / (l1^2+l2^2+l3^2)).
// Defined as 0 at the all-zero singularity. The raw expression can exceed 1
// for indefinite tensors; callers needing the clamp use compute_scalar_maps.
double fractional_anisotropy(const EigenTriple& e);

struct ScalarMaps {
    Volume md;
    Volume fa;
    std::size_t fa_clamped = 0; // voxels whose raw FA fell outside [0, 1]
};

ScalarMaps compute_scalar_maps(const TensorVolume& tv);

// TEN1 on-disk format: magic "TEN1", three u32 LE dims, then per voxel six
// binary32 LE values in order Dxx,Dyy,Dzz,Dxy,Dxz,Dyz, slice-major.
TensorVolume read_tensor_volume(const std::filesystem::path& path);
void write_tensor_volume(const TensorVolume& tv, const std::filesystem::path& path);

// TEN1 in, two VOL1 scalar maps out; returns the clamped-voxel count.
std::size_t convert_tensor_file(const std::filesystem::path& tensors_path,
                                const std::filesystem::path& md_path,
                                const std::filesystem::path& fa_path);

} // namespace pdfuse::dti
