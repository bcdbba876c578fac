#include "rockseg/synth.hpp"

#include <algorithm>
#include <cmath>

#include "rockseg/rng.hpp"

namespace rockseg {

namespace {

// Paints a solid sphere, clipped at the volume faces. Returns the number of
// voxels that changed from pore to solid.
std::int64_t paint_sphere(std::vector<std::uint8_t>& labels, const Dims& d, double cx,
                          double cy, double cz, double r, std::uint8_t label) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x1 = std::min(d.nx - 1, static_cast<int>(std::ceil(cx + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y1 = std::min(d.ny - 1, static_cast<int>(std::ceil(cy + r)));
    const int z0 = std::max(0, static_cast<int>(std::floor(cz - r)));
    const int z1 = std::min(d.nz - 1, static_cast<int>(std::ceil(cz + r)));
    const double r2 = r * r;
    std::int64_t converted = 0;
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - cx, dy = y - cy, dz = z - cz;
                if (dx * dx + dy * dy + dz * dz <= r2) {
                    const std::int64_t i = linear_index(d, x, y, z);
                    if (labels[i] == 0) ++converted;
                    labels[i] = label;
                }
            }
    return converted;
}

// Mineral labels get geometrically decaying weights so high labels are
// sparse, like the tail phases of a real mineral map.
std::uint8_t pick_mineral(Rng& rng, int n_phases) {
    const int n_minerals = n_phases - 1;
    if (n_minerals == 1) return 1;
    double total = 0.0;
    for (int i = 0; i < n_minerals; ++i) total += std::pow(0.5, i);
    double u = rng.uniform() * total;
    for (int i = 0; i < n_minerals; ++i) {
        const double w = std::pow(0.5, i);
        if (u < w) return static_cast<std::uint8_t>(i + 1);
        u -= w;
    }
    return static_cast<std::uint8_t>(n_minerals);
}

} // namespace

SynthResult synth_rock(std::uint64_t seed, Dims dims, const SynthSpec& spec) {
    if (!(spec.porosity_target > 0.0 && spec.porosity_target < 1.0))
        throw ValidationError("synth_rock: porosity target must be in (0,1), got " +
                              std::to_string(spec.porosity_target));
    if (spec.n_phases < 2) throw ValidationError("synth_rock: need at least 2 phases");
    if (spec.grain_r_min <= 0 || spec.grain_r_max < spec.grain_r_min)
        throw ValidationError("synth_rock: invalid grain radius range");

    Rng rng(seed);
    const std::int64_t total = dims.count();
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(total), 0);
    std::int64_t pore = total;
    const std::int64_t target_pore =
        static_cast<std::int64_t>(std::llround(spec.porosity_target * total));

    const int max_grains = 500000;
    int grains = 0;
    while (pore > target_pore && grains < max_grains) {
        const double r = rng.uniform(spec.grain_r_min, spec.grain_r_max);
        const double cx = rng.uniform(0.0, dims.nx);
        const double cy = rng.uniform(0.0, dims.ny);
        const double cz = rng.uniform(0.0, dims.nz);
        pore -= paint_sphere(labels, dims, cx, cy, cz, r, pick_mineral(rng, spec.n_phases));
        ++grains;
    }

    const double achieved = static_cast<double>(pore) / total;
    if (std::abs(achieved - spec.porosity_target) > 0.05)
        throw ValidationError("synth_rock: target porosity " +
                              std::to_string(spec.porosity_target) + " unreachable, achieved " +
                              std::to_string(achieved));

    const double amp =
        spec.noise_amplitude >= 0 ? spec.noise_amplitude : 0.4 / spec.n_phases;
    std::vector<double> grey(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) {
        const double mean = (labels[i] + 0.5) / spec.n_phases;
        grey[i] = mean + rng.uniform(-amp, amp);
    }

    SynthResult out;
    out.labels = LabelVolume(dims, spec.n_phases, std::move(labels));
    out.grey = ScalarVolume(dims, 1, std::move(grey));
    out.achieved_porosity = achieved;
    out.grains_placed = grains;
    return out;
}

LabelVolume synth_spheres(std::uint64_t seed, Dims dims, int count, double r_min,
                          double r_max, int gap) {
    if (count < 0) throw ValidationError("synth_spheres: count must be >= 0");
    Rng rng(seed);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(dims.count()), 0);
    struct Placed {
        double x, y, z, r;
    };
    std::vector<Placed> placed;
    const int max_tries = 20000 * std::max(1, count);
    int tries = 0;
    while (static_cast<int>(placed.size()) < count) {
        if (++tries > max_tries)
            throw ValidationError("synth_spheres: cannot place " + std::to_string(count) +
                                  " disjoint spheres in " + std::to_string(dims.nx) + "x" +
                                  std::to_string(dims.ny) + "x" + std::to_string(dims.nz));
        const double r = rng.uniform(r_min, r_max);
        if (2 * (r + 1) >= std::min({dims.nx, dims.ny, dims.nz}))
            throw ValidationError("synth_spheres: sphere radius too large for volume");
        // Keep each sphere fully interior so clipping cannot merge components
        // across a periodic wrap used by downstream consumers.
        const double cx = rng.uniform(r + 1, dims.nx - r - 1);
        const double cy = rng.uniform(r + 1, dims.ny - r - 1);
        const double cz = rng.uniform(r + 1, dims.nz - r - 1);
        bool ok = true;
        for (const auto& p : placed) {
            const double dx = cx - p.x, dy = cy - p.y, dz = cz - p.z;
            const double need = r + p.r + gap;
            if (dx * dx + dy * dy + dz * dz < need * need) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        paint_sphere(labels, dims, cx, cy, cz, r, 1);
        placed.push_back({cx, cy, cz, r});
    }
    return LabelVolume(dims, 2, std::move(labels));
}

} // namespace rockseg
