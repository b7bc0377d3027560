#include "hhhfl/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hhhfl/errors.hpp"

namespace hhhfl {

namespace {

double sq_dist(const double* x, const double* y, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

double dot(const double* x, const double* y, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) acc += x[i] * y[i];
    return acc;
}

double kernel_rowwise(const KernelConfig& config, const double* x, const double* y,
                      std::size_t dim) {
    if (config.kind == KernelKind::linear) {
        return dot(x, y, dim);
    }
    if (!(config.bandwidth > 0.0)) {
        throw config_error("rbf kernel: bandwidth not resolved (must be > 0)");
    }
    return std::exp(-sq_dist(x, y, dim) / (2.0 * config.bandwidth * config.bandwidth));
}

void check_samples(const EmbeddingSample& a, const EmbeddingSample& b) {
    if (a.points.rows == 0 || b.points.rows == 0) {
        throw shape_error("mmd: empty embedding sample");
    }
    if (a.points.cols != b.points.cols) {
        throw shape_error("mmd: point dimension " + std::to_string(a.points.cols) +
                          " vs " + std::to_string(b.points.cols));
    }
}

} // namespace

std::pair<DeviceKind, DeviceKind> device_pair(DeviceKind a, DeviceKind b) {
    return static_cast<int>(a) <= static_cast<int>(b) ? std::make_pair(a, b)
                                                      : std::make_pair(b, a);
}

double pair_weight(const MmdConfig& config, DeviceKind a, DeviceKind b) {
    auto it = config.weights.find(device_pair(a, b));
    return it == config.weights.end() ? 0.0 : it->second;
}

double kernel_eval(const KernelConfig& config, const std::vector<double>& x,
                   const std::vector<double>& y) {
    if (x.size() != y.size()) {
        throw shape_error("kernel_eval: vector lengths " + std::to_string(x.size()) +
                          " vs " + std::to_string(y.size()));
    }
    return kernel_rowwise(config, x.data(), y.data(), x.size());
}

double median_heuristic(const Matrix& points) {
    if (points.rows < 2) {
        throw config_error("median_heuristic: needs at least 2 points, got " +
                           std::to_string(points.rows));
    }
    std::vector<double> dists;
    dists.reserve(points.rows * (points.rows - 1) / 2);
    for (std::size_t i = 0; i < points.rows; ++i) {
        for (std::size_t j = i + 1; j < points.rows; ++j) {
            dists.push_back(sq_dist(&points.data[i * points.cols],
                                    &points.data[j * points.cols], points.cols));
        }
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t n = dists.size();
    const double median = (n % 2 == 1)
                              ? dists[n / 2]
                              : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
    if (median <= 0.0) return 1.0;
    return std::sqrt(median / 2.0);
}

double mmd_squared(const EmbeddingSample& a, const EmbeddingSample& b,
                   const KernelConfig& kernel) {
    check_samples(a, b);
    const std::size_t n = a.points.rows;
    const std::size_t m = b.points.rows;
    const std::size_t dim = a.points.cols;
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            kaa += kernel_rowwise(kernel, &a.points.data[i * dim], &a.points.data[j * dim], dim);
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            kbb += kernel_rowwise(kernel, &b.points.data[i * dim], &b.points.data[j * dim], dim);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            kab += kernel_rowwise(kernel, &a.points.data[i * dim], &b.points.data[j * dim], dim);
        }
    }
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    double value = kaa / (nn * nn) + kbb / (mm * mm) - 2.0 * kab / (nn * mm);
    if (value < 0.0 && value > -1e-12) value = 0.0;
    return value;
}

Matrix mmd_gradient(const EmbeddingSample& a, const EmbeddingSample& b,
                    const KernelConfig& kernel) {
    check_samples(a, b);
    const std::size_t n = a.points.rows;
    const std::size_t m = b.points.rows;
    const std::size_t dim = a.points.cols;
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    Matrix grad(n, dim, 0.0);

    if (kernel.kind == KernelKind::linear) {
        // d/da_p [ (1/n^2) sum <a_i,a_j> - (2/nm) sum <a_i,b_j> ]
        //   = (2/n^2) sum_j a_j - (2/nm) sum_j b_j  (independent of p).
        std::vector<double> row(dim, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t d = 0; d < dim; ++d) row[d] += a.points(j, d);
        }
        for (std::size_t d = 0; d < dim; ++d) row[d] *= 2.0 / (nn * nn);
        std::vector<double> bsum(dim, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t d = 0; d < dim; ++d) bsum[d] += b.points(j, d);
        }
        for (std::size_t d = 0; d < dim; ++d) row[d] -= 2.0 / (nn * mm) * bsum[d];
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t d = 0; d < dim; ++d) grad(p, d) = row[d];
        }
        return grad;
    }

    if (!(kernel.bandwidth > 0.0)) {
        throw config_error("rbf kernel: bandwidth not resolved (must be > 0)");
    }
    const double inv_sigma_sq = 1.0 / (kernel.bandwidth * kernel.bandwidth);
    // d k(x,y)/dx = -k(x,y) (x - y) / sigma^2. The a-a term appears twice by
    // symmetry; the diagonal contributes nothing.
    for (std::size_t p = 0; p < n; ++p) {
        const double* ap = &a.points.data[p * dim];
        for (std::size_t j = 0; j < n; ++j) {
            if (j == p) continue;
            const double* aj = &a.points.data[j * dim];
            const double k = kernel_rowwise(kernel, ap, aj, dim);
            const double coef = -2.0 / (nn * nn) * k * inv_sigma_sq;
            for (std::size_t d = 0; d < dim; ++d) {
                grad(p, d) += coef * (ap[d] - aj[d]);
            }
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = &b.points.data[j * dim];
            const double k = kernel_rowwise(kernel, ap, bj, dim);
            const double coef = 2.0 / (nn * mm) * k * inv_sigma_sq;
            for (std::size_t d = 0; d < dim; ++d) {
                grad(p, d) += coef * (ap[d] - bj[d]);
            }
        }
    }
    return grad;
}

} // namespace hhhfl
