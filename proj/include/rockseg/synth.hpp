#pragma once

#include <utility>

#include "rockseg/volume.hpp"

namespace rockseg {

// Overlapping-sphere grain pack. Spheres are dropped with per-grain mineral
// labels until the pore fraction reaches the target; the greyscale channel
// is the per-label mean plus bounded uniform noise, so classes stay
// separable. Controllable topology matters here, not geological realism.
struct SynthSpec {
    double porosity_target = 0.3; // pore (label 0) volume fraction, in (0,1)
    double grain_r_min = 4.0;
    double grain_r_max = 9.0;
    int n_phases = 6; // pore + n_phases-1 minerals
    double noise_amplitude = -1.0; // <0 means default 0.4 / n_phases
};

struct SynthResult {
    ScalarVolume grey;
    LabelVolume labels;
    double achieved_porosity = 0.0;
    int grains_placed = 0;
};

// Deterministic for a fixed seed. Throws ValidationError if the target
// porosity is out of range or cannot be reached within ±0.05.
SynthResult synth_rock(std::uint64_t seed, Dims dims, const SynthSpec& spec);

// Plants exactly `count` solid spheres of label 1 (background 0) that are
// pairwise separated by at least `gap` voxels, so the sphere phase has
// exactly `count` connected components under both 6- and 26-adjacency.
LabelVolume synth_spheres(std::uint64_t seed, Dims dims, int count, double r_min,
                          double r_max, int gap = 3);

} // namespace rockseg
