#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ivi {

// log(1 + e^t), written so that it neither overflows for large t nor loses
// the e^t tail for very negative t.
inline double softplus(double t) {
    return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

// t - softplus(t) = -softplus(-t) = log sigmoid(t).
inline double softminus(double t) {
    return std::min(t, 0.0) - std::log1p(std::exp(-std::abs(t)));
}

inline double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// NaN passes through so that poisoned inputs surface as non-finite losses.
inline double relu(double t) { return t > 0 || std::isnan(t) ? t : 0.0; }

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

}  // namespace ivi
