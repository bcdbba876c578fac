#include "rockseg/topology.hpp"

#include <algorithm>
#include <array>

namespace rockseg {

std::int64_t BinaryMask::count() const {
    std::int64_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
}

BinaryMask extract_phase(const LabelVolume& vol, int phase) {
    if (phase < 0 || phase >= vol.n_phases())
        throw ValidationError("extract_phase: phase " + std::to_string(phase) +
                              " out of range for n_phases " + std::to_string(vol.n_phases()));
    BinaryMask m;
    m.dims = vol.dims();
    m.bits.resize(vol.labels().size());
    for (std::size_t i = 0; i < m.bits.size(); ++i)
        m.bits[i] = vol.labels()[i] == phase ? 1 : 0;
    return m;
}

namespace {

struct Offsets {
    std::array<std::array<int, 3>, 26> d{};
    int n = 0;
};

Offsets make_offsets(int connectivity) {
    if (connectivity != 6 && connectivity != 26)
        throw ValidationError("connected_components: connectivity must be 6 or 26");
    Offsets o;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                if (connectivity == 6 && std::abs(dx) + std::abs(dy) + std::abs(dz) != 1)
                    continue;
                o.d[o.n++] = {dx, dy, dz};
            }
    return o;
}

} // namespace

ComponentLabels connected_components(const BinaryMask& mask, int connectivity) {
    const Offsets off = make_offsets(connectivity);
    const Dims d = mask.dims;
    ComponentLabels out;
    out.dims = d;
    out.labels.assign(mask.bits.size(), 0);
    std::vector<std::int64_t> stack;
    for (std::int64_t start = 0; start < d.count(); ++start) {
        if (!mask.bits[start] || out.labels[start] != 0) continue;
        const std::int32_t comp = ++out.count;
        std::int64_t size = 0;
        stack.push_back(start);
        out.labels[start] = comp;
        while (!stack.empty()) {
            const std::int64_t i = stack.back();
            stack.pop_back();
            ++size;
            const int x = static_cast<int>(i % d.nx);
            const int y = static_cast<int>((i / d.nx) % d.ny);
            const int z = static_cast<int>(i / (static_cast<std::int64_t>(d.nx) * d.ny));
            for (int k = 0; k < off.n; ++k) {
                const int nx = x + off.d[k][0], ny = y + off.d[k][1], nz = z + off.d[k][2];
                if (nx < 0 || ny < 0 || nz < 0 || nx >= d.nx || ny >= d.ny || nz >= d.nz)
                    continue;
                const std::int64_t j = linear_index(d, nx, ny, nz);
                if (mask.bits[j] && out.labels[j] == 0) {
                    out.labels[j] = comp;
                    stack.push_back(j);
                }
            }
        }
        out.sizes.push_back(size);
    }
    return out;
}

namespace {

// chi = V - E + F - C on the complex of closed unit cubes of the foreground.
std::int64_t cubical_chi(const BinaryMask& m) {
    const Dims d = m.dims;
    auto fg = [&](int x, int y, int z) -> bool {
        if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) return false;
        return m.bits[linear_index(d, x, y, z)] != 0;
    };

    std::int64_t V = 0, E = 0, F = 0, C = 0;
    for (int z = 0; z <= d.nz; ++z)
        for (int y = 0; y <= d.ny; ++y)
            for (int x = 0; x <= d.nx; ++x) {
                // Vertex at lattice point (x,y,z): any of its 8 incident voxels.
                bool v = false;
                for (int dz = -1; dz <= 0 && !v; ++dz)
                    for (int dy = -1; dy <= 0 && !v; ++dy)
                        for (int dx = -1; dx <= 0 && !v; ++dx) v = fg(x + dx, y + dy, z + dz);
                V += v;

                // Edges directed +x/+y/+z from this lattice point; each is
                // shared by 4 voxels.
                if (x < d.nx) {
                    const bool e = fg(x, y - 1, z - 1) || fg(x, y, z - 1) ||
                                   fg(x, y - 1, z) || fg(x, y, z);
                    E += e;
                }
                if (y < d.ny) {
                    const bool e = fg(x - 1, y, z - 1) || fg(x, y, z - 1) ||
                                   fg(x - 1, y, z) || fg(x, y, z);
                    E += e;
                }
                if (z < d.nz) {
                    const bool e = fg(x - 1, y - 1, z) || fg(x, y - 1, z) ||
                                   fg(x - 1, y, z) || fg(x, y, z);
                    E += e;
                }

                // Faces with lower-left corner here, normal to z/y/x; each is
                // shared by 2 voxels.
                if (x < d.nx && y < d.ny) F += fg(x, y, z - 1) || fg(x, y, z);
                if (x < d.nx && z < d.nz) F += fg(x, y - 1, z) || fg(x, y, z);
                if (y < d.ny && z < d.nz) F += fg(x - 1, y, z) || fg(x, y, z);

                if (x < d.nx && y < d.ny && z < d.nz) C += fg(x, y, z);
            }
    return V - E + F - C;
}

} // namespace

TopologyReport euler_number(const BinaryMask& mask) {
    TopologyReport r;
    r.chi = cubical_chi(mask);

    ComponentLabels fgc = connected_components(mask, 26);
    r.beta0 = fgc.count;
    r.component_sizes = fgc.sizes;
    std::sort(r.component_sizes.begin(), r.component_sizes.end(), std::greater<>());

    BinaryMask bg;
    bg.dims = mask.dims;
    bg.bits.resize(mask.bits.size());
    for (std::size_t i = 0; i < bg.bits.size(); ++i) bg.bits[i] = mask.bits[i] ? 0 : 1;
    ComponentLabels bgc = connected_components(bg, 6);

    std::vector<std::uint8_t> touches(bgc.count + 1, 0);
    const Dims d = mask.dims;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                if (x != 0 && y != 0 && z != 0 && x != d.nx - 1 && y != d.ny - 1 &&
                    z != d.nz - 1)
                    continue;
                const std::int32_t c = bgc.labels[linear_index(d, x, y, z)];
                if (c > 0) touches[c] = 1;
            }
    for (std::int32_t c = 1; c <= bgc.count; ++c)
        if (!touches[c]) ++r.beta2;

    r.beta1 = r.beta0 + r.beta2 - r.chi;
    return r;
}

} // namespace rockseg
