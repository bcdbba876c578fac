#pragma once

// Independent brute-force oracles used by the test suites. These stay
// deliberately naive and separate from the library implementations.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "rockseg/topology.hpp"
#include "rockseg/volume.hpp"

namespace oracles {

// Per-voxel tally without any matrix helpers.
inline std::vector<std::uint64_t> confusion_loop(const rockseg::LabelVolume& truth,
                                                 const rockseg::LabelVolume& pred) {
    const int k = truth.n_phases();
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(k) * k, 0);
    for (int z = 0; z < truth.dims().nz; ++z)
        for (int y = 0; y < truth.dims().ny; ++y)
            for (int x = 0; x < truth.dims().nx; ++x)
                counts[truth.at(x, y, z) * k + pred.at(x, y, z)] += 1;
    return counts;
}

// Extended-precision softmax probability of channel t.
inline long double softmax_ld(const std::vector<long double>& a, int t) {
    long double m = a[0];
    for (long double v : a) m = std::max(m, v);
    long double z = 0;
    for (long double v : a) z += std::exp(v - m);
    return std::exp(a[t] - m) / z;
}

// Extended-precision weighted cross entropy, plain serial accumulation.
inline long double weighted_xe_ld(const rockseg::ScalarVolume& logits,
                                  const rockseg::LabelVolume& truth,
                                  const std::vector<double>& w) {
    const int c = logits.channels();
    long double sum = 0;
    for (std::int64_t i = 0; i < truth.size(); ++i) {
        std::vector<long double> a(c);
        for (int k = 0; k < c; ++k) a[k] = logits.values()[i * c + k];
        const int t = truth.at(i);
        long double p = softmax_ld(a, t);
        if (p < 1e-12L) p = 1e-12L;
        sum += -static_cast<long double>(w[t]) * std::log(p);
    }
    return sum / static_cast<long double>(truth.size());
}

// Euler characteristic by explicit enumeration of the cubical complex into
// sets keyed by scaled coordinates: a cell of dimension d at position p is
// keyed by 2*p + offsets.
inline std::int64_t chi_by_cell_sets(const rockseg::BinaryMask& mask) {
    using Key = std::array<int, 3>;
    std::set<Key> verts, edges, faces;
    std::int64_t cubes = 0;
    const rockseg::Dims d = mask.dims;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                ++cubes;
                // All sub-cells of the closed cube [x,x+1]x[y,y+1]x[z,z+1],
                // keyed at doubled coordinates: even = lattice point, odd =
                // cell midpoint along that axis.
                for (int dz = 0; dz <= 2; ++dz)
                    for (int dy = 0; dy <= 2; ++dy)
                        for (int dx = 0; dx <= 2; ++dx) {
                            const int odd = (dx % 2) + (dy % 2) + (dz % 2);
                            const Key key = {2 * x + dx, 2 * y + dy, 2 * z + dz};
                            if (odd == 0) verts.insert(key);
                            else if (odd == 1) edges.insert(key);
                            else if (odd == 2) faces.insert(key);
                        }
            }
    return static_cast<std::int64_t>(verts.size()) - static_cast<std::int64_t>(edges.size()) +
           static_cast<std::int64_t>(faces.size()) - cubes;
}

} // namespace oracles
