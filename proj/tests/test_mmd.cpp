#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hhhfl/errors.hpp"
#include "hhhfl/mmd.hpp"
#include "hhhfl/rng.hpp"

using namespace hhhfl;

namespace {

Matrix random_points(Rng& rng, std::size_t n, std::size_t dim, double scale = 1.0,
                     double shift = 0.0) {
    Matrix m(n, dim);
    for (double& v : m.data) v = shift + scale * rng.normal();
    return m;
}

EmbeddingSample sample_a(Matrix m) { return {DeviceKind::MW, std::move(m)}; }
EmbeddingSample sample_b(Matrix m) { return {DeviceKind::MU, std::move(m)}; }

// Naive double-sum oracle, written independently of the library path.
double naive_mmd(const Matrix& a, const Matrix& b, const KernelConfig& k) {
    auto kc = [&](const double* x, const double* y, std::size_t dim) {
        if (k.kind == KernelKind::linear) {
            double acc = 0;
            for (std::size_t i = 0; i < dim; ++i) acc += x[i] * y[i];
            return acc;
        }
        double d2 = 0;
        for (std::size_t i = 0; i < dim; ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
        return std::exp(-d2 / (2.0 * k.bandwidth * k.bandwidth));
    };
    double kaa = 0, kbb = 0, kab = 0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.rows; ++j)
            kaa += kc(&a.data[i * a.cols], &a.data[j * a.cols], a.cols);
    for (std::size_t i = 0; i < b.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j)
            kbb += kc(&b.data[i * b.cols], &b.data[j * b.cols], b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j)
            kab += kc(&a.data[i * a.cols], &b.data[j * b.cols], b.cols);
    const double n = static_cast<double>(a.rows), m = static_cast<double>(b.rows);
    return kaa / (n * n) + kbb / (m * m) - 2.0 * kab / (n * m);
}

} // namespace

TEST_CASE("kernel_eval") {
    const KernelConfig rbf = KernelConfig::rbf_fixed(std::sqrt(2.0));
    CHECK(kernel_eval(rbf, {1, 2, 3}, {1, 2, 3}) == 1.0);
    // ||x-y||^2 = 4, sigma = sqrt(2): exp(-4 / (2*2)) = e^-1.
    CHECK(kernel_eval(rbf, {0, 0}, {2, 0}) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
    CHECK(kernel_eval(KernelConfig::linear(), {1, 2}, {3, -1}) == 1.0);
    CHECK_THROWS_AS(kernel_eval(rbf, {1, 2}, {1, 2, 3}), shape_error);
}

TEST_CASE("rbf kernel requires a resolved bandwidth") {
    CHECK_THROWS_AS(kernel_eval(KernelConfig::rbf_median(), {1}, {2}), config_error);
}

TEST_CASE("median_heuristic") {
    Matrix two(2, 1);
    two(0, 0) = 0.0;
    two(1, 0) = 2.0;
    CHECK(median_heuristic(two) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    Matrix same(5, 3, 1.25);
    CHECK(median_heuristic(same) == 1.0);

    Matrix one(1, 3, 0.0);
    CHECK_THROWS_AS(median_heuristic(one), config_error);
}

TEST_CASE("mmd_squared on identical samples is zero") {
    Rng rng(mix_seed({0x31}));
    const Matrix pts = random_points(rng, 9, 4);
    const double v = mmd_squared(sample_a(pts), sample_b(pts), KernelConfig::rbf_fixed(1.0));
    CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("mmd_squared linear hand case equals 1 exactly") {
    Matrix a(2, 1), b(2, 1);
    a(0, 0) = 0;
    a(1, 0) = 2;
    b(0, 0) = 1;
    b(1, 0) = 3;
    // Double-sum by hand: 4/4 + 16/4 - 2*8/4 = 1 = (mean a - mean b)^2.
    const double v = mmd_squared(sample_a(a), sample_b(b), KernelConfig::linear());
    CHECK(std::abs(v - 1.0) <= 1e-12);
}

TEST_CASE("mmd_squared far clusters have negligible cross term") {
    Rng rng(mix_seed({0x32}));
    const KernelConfig k = KernelConfig::rbf_fixed(1.0);
    const Matrix a = random_points(rng, 6, 3, 0.5, 0.0);
    const Matrix b = random_points(rng, 8, 3, 0.5, 1000.0);
    const double v = mmd_squared(sample_a(a), sample_b(b), k);
    // Self terms only: (1/n^2) sum k(a,a) + (1/m^2) sum k(b,b).
    double kaa = 0, kbb = 0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.rows; ++j) {
            double d2 = 0;
            for (std::size_t d = 0; d < 3; ++d)
                d2 += (a(i, d) - a(j, d)) * (a(i, d) - a(j, d));
            kaa += std::exp(-d2 / 2.0);
        }
    for (std::size_t i = 0; i < b.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j) {
            double d2 = 0;
            for (std::size_t d = 0; d < 3; ++d)
                d2 += (b(i, d) - b(j, d)) * (b(i, d) - b(j, d));
            kbb += std::exp(-d2 / 2.0);
        }
    CHECK(std::abs(v - (kaa / 36.0 + kbb / 64.0)) < 1e-8);
}

TEST_CASE("mmd oracle equivalence for sizes up to 32, both kernels") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(mix_seed({seed, 0x0dd}));
        const std::size_t n = 1 + rng.index(32);
        const std::size_t m = 1 + rng.index(32);
        const std::size_t dim = 1 + rng.index(10);
        const Matrix a = random_points(rng, n, dim);
        const Matrix b = random_points(rng, m, dim);
        for (const KernelConfig& k :
             {KernelConfig::linear(), KernelConfig::rbf_fixed(0.9)}) {
            const double lib = mmd_squared(sample_a(a), sample_b(b), k);
            const double ref = naive_mmd(a, b, k);
            worst = std::max(worst, std::abs(lib - ref));
        }
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("mmd symmetry and nonnegativity") {
    Rng rng(mix_seed({0x5a}));
    for (int i = 0; i < 20; ++i) {
        const std::size_t dim = 1 + rng.index(6);
        const Matrix a = random_points(rng, 1 + rng.index(12), dim);
        const Matrix b = random_points(rng, 1 + rng.index(12), dim);
        for (const KernelConfig& k :
             {KernelConfig::linear(), KernelConfig::rbf_fixed(1.2)}) {
            const double ab = mmd_squared(sample_a(a), sample_b(b), k);
            const double ba = mmd_squared(sample_a(b), sample_b(a), k);
            CHECK(std::abs(ab - ba) < 1e-12);
            CHECK(ab >= -1e-12);
            if (k.kind == KernelKind::rbf) CHECK(ab >= 0.0);
        }
    }
}

TEST_CASE("linear-kernel mmd is translation invariant") {
    Rng rng(mix_seed({0x771}));
    const Matrix a = random_points(rng, 10, 5);
    const Matrix b = random_points(rng, 7, 5);
    std::vector<double> shift(5);
    for (double& v : shift) v = rng.uniform(-3, 3);
    Matrix a2 = a, b2 = b;
    for (std::size_t i = 0; i < a2.rows; ++i)
        for (std::size_t d = 0; d < 5; ++d) a2(i, d) += shift[d];
    for (std::size_t i = 0; i < b2.rows; ++i)
        for (std::size_t d = 0; d < 5; ++d) b2(i, d) += shift[d];
    const double before = mmd_squared(sample_a(a), sample_b(b), KernelConfig::linear());
    const double after = mmd_squared(sample_a(a2), sample_b(b2), KernelConfig::linear());
    CHECK(std::abs(before - after) < 1e-10);
}

TEST_CASE("mmd_gradient vanishes on identical symmetric samples") {
    Rng rng(mix_seed({0x90}));
    const Matrix pts = random_points(rng, 8, 3);
    const Matrix g =
        mmd_gradient(sample_a(pts), sample_b(pts), KernelConfig::rbf_fixed(1.0));
    for (double v : g.data) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("mmd_gradient linear hand case") {
    Matrix a(2, 1), b(2, 1);
    a(0, 0) = 0;
    a(1, 0) = 2;
    b(0, 0) = 1;
    b(1, 0) = 3;
    // d/da_p (mean a - mean b)^2 = (2/n)(mean a - mean b) = -1 for each p.
    const Matrix g = mmd_gradient(sample_a(a), sample_b(b), KernelConfig::linear());
    CHECK(g(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(g(1, 0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("mmd_gradient matches finite differences, both kernels") {
    const double eps = 1e-6;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed({seed, 0x6d}));
        const std::size_t n = 2 + rng.index(8);
        const std::size_t m = 2 + rng.index(8);
        const std::size_t dim = 1 + rng.index(5);
        Matrix a = random_points(rng, n, dim);
        const Matrix b = random_points(rng, m, dim, 1.0, 0.5);
        for (const KernelConfig& k :
             {KernelConfig::linear(), KernelConfig::rbf_fixed(1.1)}) {
            const Matrix grad = mmd_gradient(sample_a(a), sample_b(b), k);
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double saved = a.data[i];
                a.data[i] = saved + eps;
                const double plus = mmd_squared(sample_a(a), sample_b(b), k);
                a.data[i] = saved - eps;
                const double minus = mmd_squared(sample_a(a), sample_b(b), k);
                a.data[i] = saved;
                const double fd = (plus - minus) / (2.0 * eps);
                const double rel =
                    std::abs(grad.data[i] - fd) / std::max(1.0, std::abs(grad.data[i]));
                CHECK(rel < 1e-5);
            }
        }
    }
}

TEST_CASE("mmd dimension mismatch is a shape error") {
    Matrix a(2, 3, 0.0), b(2, 4, 0.0);
    CHECK_THROWS_AS(mmd_squared(sample_a(a), sample_b(b), KernelConfig::linear()),
                    shape_error);
    CHECK_THROWS_AS(mmd_gradient(sample_a(a), sample_b(b), KernelConfig::linear()),
                    shape_error);
    Matrix empty(0, 3, 0.0);
    CHECK_THROWS_AS(mmd_squared(sample_a(empty), sample_b(b), KernelConfig::linear()),
                    shape_error);
}

TEST_CASE("pair weights default to zero for missing pairs") {
    MmdConfig config;
    config.weights[device_pair(DeviceKind::MU, DeviceKind::MW)] = 0.5;
    CHECK(pair_weight(config, DeviceKind::MW, DeviceKind::MU) == 0.5);
    CHECK(pair_weight(config, DeviceKind::MU, DeviceKind::MW) == 0.5);
    CHECK(pair_weight(config, DeviceKind::MW, DeviceKind::EP) == 0.0);
}
