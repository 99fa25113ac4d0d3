#pragma once

#include "pdfuse/dataset.hpp"

#include <array>
#include <cstddef>

namespace pdfuse {

// Length-3 probability vector indexed by ClassLabel code. Renormalized on
// construction; rejects negative or non-finite components.
class ProbVector {
public:
    ProbVector() : p_{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0} {}
    ProbVector(double hc, double pd, double swedd);

    double operator[](std::size_t i) const { return p_[i]; }
    double operator[](ClassLabel l) const { return p_[static_cast<std::size_t>(l)]; }
    const std::array<double, 3>& values() const { return p_; }

    // ties broken by lowest class code
    ClassLabel argmax() const;

private:
    std::array<double, 3> p_;
};

} // namespace pdfuse
