#pragma once

#include <cstdint>
#include <vector>

#include "rockseg/volume.hpp"

namespace rockseg {

struct BinaryMask {
    Dims dims{};
    std::vector<std::uint8_t> bits; // 1 = foreground

    bool at(int x, int y, int z) const { return bits[linear_index(dims, x, y, z)] != 0; }
    std::int64_t count() const;
};

BinaryMask extract_phase(const LabelVolume& vol, int phase);

struct ComponentLabels {
    Dims dims{};
    // 0 = background; components numbered 1..count by minimum linear voxel
    // index, so labeling is deterministic.
    std::vector<std::int32_t> labels;
    int count = 0;
    std::vector<std::int64_t> sizes; // sizes[c-1] = voxels in component c
};

ComponentLabels connected_components(const BinaryMask& mask, int connectivity);

struct TopologyReport {
    std::int64_t chi = 0;   // V - E + F - C of the foreground cubical complex
    std::int64_t beta0 = 0; // foreground components, 26-adjacency
    std::int64_t beta1 = 0; // beta0 + beta2 - chi
    std::int64_t beta2 = 0; // enclosed cavities: interior 6-connected background
    std::vector<std::int64_t> component_sizes; // descending
};

// Foreground uses 26-adjacency, background 6-adjacency (the complementary
// pair). Background components touching the volume boundary are exterior,
// not cavities.
TopologyReport euler_number(const BinaryMask& mask);

} // namespace rockseg
