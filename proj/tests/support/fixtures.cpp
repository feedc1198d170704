#include "fixtures.hpp"

#include <random>

#include <Eigen/Dense>

#include "loh/error.hpp"
#include "loh/rng.hpp"

namespace loh::testing {

DupFixture make_dup_fixture(int num_groups, int group_size, int decoys, int d,
                            double sigma, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    DupFixture fx;
    fx.num_groups = num_groups;
    fx.group_size = group_size;
    fx.decoys = decoys;
    const Eigen::Index n =
        static_cast<Eigen::Index>(num_groups) * group_size + decoys;
    fx.data.resize(n, d);
    fx.group.resize(static_cast<std::size_t>(n), -1);

    Eigen::Index row = 0;
    for (int g = 0; g < num_groups; ++g) {
        Vector base(d);
        for (int j = 0; j < d; ++j) base[j] = uniform01(gen);
        for (int c = 0; c < group_size; ++c, ++row) {
            fx.group[static_cast<std::size_t>(row)] = g;
            for (int j = 0; j < d; ++j)
                fx.data(row, j) = base[j] + sigma * normal01(gen);
        }
    }
    for (int i = 0; i < decoys; ++i, ++row)
        for (int j = 0; j < d; ++j) fx.data(row, j) = uniform01(gen);

    // Calibration gate: the true nearest neighbor of a group member must be
    // a same-group member for >= 99% of members.
    Eigen::Index ok = 0, members = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (fx.group[static_cast<std::size_t>(i)] < 0) continue;
        ++members;
        double best = -1.0;
        Eigen::Index arg = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dist = (fx.data.row(i) - fx.data.row(j)).squaredNorm();
            if (arg == -1 || dist < best) {
                best = dist;
                arg = j;
            }
        }
        if (fx.group[static_cast<std::size_t>(arg)] ==
            fx.group[static_cast<std::size_t>(i)])
            ++ok;
    }
    if (static_cast<double>(ok) < 0.99 * static_cast<double>(members))
        throw Error("dup fixture jitter is not calibrated: only " +
                    std::to_string(ok) + "/" + std::to_string(members) +
                    " members keep a same-group nearest neighbor");
    return fx;
}

DupFixture make_dup_fixture(std::uint64_t seed) {
    return make_dup_fixture(100, 5, 500, 32, 0.08, seed);
}

std::pair<Matrix, Matrix> make_mixture(std::size_t n_db, std::size_t n_queries,
                                       int d, int components,
                                       std::uint64_t seed) {
    std::mt19937_64 gen(seed);

    std::vector<Vector> centers(static_cast<std::size_t>(components));
    std::vector<Matrix> bases(static_cast<std::size_t>(components));
    std::vector<Vector> scales(static_cast<std::size_t>(components));
    for (int c = 0; c < components; ++c) {
        Vector center(d);
        for (int j = 0; j < d; ++j) center[j] = 3.0 * normal01(gen);
        Matrix raw(d, d);
        for (int r = 0; r < d; ++r)
            for (int j = 0; j < d; ++j) raw(r, j) = normal01(gen);
        Eigen::HouseholderQR<Matrix> qr(raw);
        Matrix q = qr.householderQ();
        Vector scale(d);
        for (int j = 0; j < d; ++j) scale[j] = 0.05 + 0.75 * uniform01(gen);
        centers[static_cast<std::size_t>(c)] = std::move(center);
        bases[static_cast<std::size_t>(c)] = std::move(q);
        scales[static_cast<std::size_t>(c)] = std::move(scale);
    }

    const auto sample = [&](Matrix& out, Eigen::Index row, int c) {
        Vector z(d);
        for (int j = 0; j < d; ++j)
            z[j] = scales[static_cast<std::size_t>(c)][j] * normal01(gen);
        out.row(row) = (centers[static_cast<std::size_t>(c)] +
                        bases[static_cast<std::size_t>(c)] * z)
                           .transpose();
    };

    Matrix db(static_cast<Eigen::Index>(n_db), d);
    for (std::size_t i = 0; i < n_db; ++i)
        sample(db, static_cast<Eigen::Index>(i),
               static_cast<int>(i % static_cast<std::size_t>(components)));
    Matrix queries(static_cast<Eigen::Index>(n_queries), d);
    for (std::size_t i = 0; i < n_queries; ++i)
        sample(queries, static_cast<Eigen::Index>(i),
               static_cast<int>(i % static_cast<std::size_t>(components)));
    return {std::move(db), std::move(queries)};
}

std::vector<EncodedPoint> random_codes(std::size_t n, int K, int m, int k,
                                       std::uint64_t seed,
                                       std::uint64_t id_base) {
    std::mt19937_64 gen(seed);
    std::vector<EncodedPoint> points(n);
    for (std::size_t i = 0; i < n; ++i) {
        EncodedPoint& p = points[i];
        p.id = id_base + i;
        p.coarse.c1 = static_cast<std::uint32_t>(
            uniform_index(gen, static_cast<std::uint64_t>(K)));
        p.coarse.c2 = static_cast<std::uint32_t>(
            uniform_index(gen, static_cast<std::uint64_t>(K)));
        p.fine.f.resize(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j)
            p.fine.f[static_cast<std::size_t>(j)] = static_cast<std::uint16_t>(
                uniform_index(gen, static_cast<std::uint64_t>(k)));
    }
    return points;
}

}  // namespace loh::testing
