#include "pdfuse/prob.hpp"

#include <cmath>
#include <stdexcept>

namespace pdfuse {

ProbVector::ProbVector(double hc, double pd, double swedd) : p_{hc, pd, swedd} {
    double sum = 0.0;
    for (double v : p_) {
        if (!std::isfinite(v) || v < 0.0) {
            throw std::runtime_error("probability components must be finite and non-negative");
        }
        sum += v;
    }
    if (sum <= 0.0) {
        throw std::runtime_error("probability components must not all be zero");
    }
    for (double& v : p_) v /= sum;
}

ClassLabel ProbVector::argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p_.size(); ++i) {
        if (p_[i] > p_[best]) best = i;
    }
    return static_cast<ClassLabel>(best);
}

} // namespace pdfuse
