#pragma once

#include <map>
#include <utility>

#include "hhhfl/data.hpp"
#include "hhhfl/matrix.hpp"

namespace hhhfl {

enum class KernelKind { rbf, linear };

// Kernel choice plus bandwidth. An rbf kernel either carries a fixed
// positive bandwidth or defers to the median heuristic, which the federation
// resolves once per round from the pooled exchanged embeddings.
struct KernelConfig {
    KernelKind kind = KernelKind::rbf;
    bool median_heuristic_policy = true;
    double bandwidth = 0.0; // resolved value; must be > 0 for rbf evaluation

    static KernelConfig rbf_fixed(double sigma) {
        return KernelConfig{KernelKind::rbf, false, sigma};
    }
    static KernelConfig rbf_median() {
        return KernelConfig{KernelKind::rbf, true, 0.0};
    }
    static KernelConfig linear() {
        return KernelConfig{KernelKind::linear, false, 0.0};
    }

    // Copy with the bandwidth pinned (used after the per-round resolution).
    KernelConfig resolved(double sigma) const {
        KernelConfig c = *this;
        c.bandwidth = sigma;
        return c;
    }
};

// An empirical sample of one domain's embedding distribution: n points of
// the embedding dimension, one per row.
struct EmbeddingSample {
    DeviceKind domain = DeviceKind::MW;
    Matrix points;
};

// Domain-alignment settings: the kernel plus a nonnegative weight per
// unordered device pair. A missing pair means weight 0.
struct MmdConfig {
    KernelConfig kernel;
    std::map<std::pair<DeviceKind, DeviceKind>, double> weights;
};

// Canonical unordered-pair key (smaller enum value first).
std::pair<DeviceKind, DeviceKind> device_pair(DeviceKind a, DeviceKind b);
double pair_weight(const MmdConfig& config, DeviceKind a, DeviceKind b);

// rbf: exp(-||x-y||^2 / (2 sigma^2)); linear: <x, y>.
double kernel_eval(const KernelConfig& config, const std::vector<double>& x,
                   const std::vector<double>& y);

// sigma = sqrt(median pairwise squared distance / 2); 1 when all points
// coincide. Needs at least 2 points.
double median_heuristic(const Matrix& points);

// Biased (V-statistic) squared MMD between two samples:
//   (1/n^2) sum k(a,a) + (1/m^2) sum k(b,b) - (2/nm) sum k(a,b),
// with tiny negative rounding results clamped to 0.
double mmd_squared(const EmbeddingSample& a, const EmbeddingSample& b,
                   const KernelConfig& kernel);

// d mmd_squared / d a[p] for every point p of a, holding b and the resolved
// bandwidth constant. Same shape as a.points.
Matrix mmd_gradient(const EmbeddingSample& a, const EmbeddingSample& b,
                    const KernelConfig& kernel);

} // namespace hhhfl
