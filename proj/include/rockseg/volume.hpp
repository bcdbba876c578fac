#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rockseg/errors.hpp"

namespace rockseg {

struct Dims {
    int nx = 0, ny = 0, nz = 0;

    std::int64_t count() const {
        return static_cast<std::int64_t>(nx) * ny * nz;
    }
    bool operator==(const Dims&) const = default;
};

// x-fastest linear index: x, then y, then z.
inline std::int64_t linear_index(const Dims& d, int x, int y, int z) {
    return x + static_cast<std::int64_t>(d.nx) * (y + static_cast<std::int64_t>(d.ny) * z);
}

// Dense grid of phase ids, one uint8 per voxel. Values are immutable once
// built; construction validates every label < n_phases.
class LabelVolume {
public:
    LabelVolume() = default;
    LabelVolume(Dims dims, int n_phases, std::vector<std::uint8_t> labels,
                double voxel_size_um = 1.0);

    const Dims& dims() const { return dims_; }
    int n_phases() const { return n_phases_; }
    double voxel_size_um() const { return voxel_size_um_; }
    const std::vector<std::uint8_t>& labels() const { return labels_; }

    std::uint8_t at(int x, int y, int z) const {
        return labels_[linear_index(dims_, x, y, z)];
    }
    std::uint8_t at(std::int64_t i) const { return labels_[i]; }
    std::int64_t size() const { return static_cast<std::int64_t>(labels_.size()); }

private:
    Dims dims_{};
    int n_phases_ = 0;
    double voxel_size_um_ = 1.0;
    std::vector<std::uint8_t> labels_;
};

// Dense grid of finite reals, `channels` values per voxel, channel-fastest
// within a voxel (value index = voxel_index * channels + c).
class ScalarVolume {
public:
    ScalarVolume() = default;
    ScalarVolume(Dims dims, int channels, std::vector<double> values,
                 double voxel_size_um = 1.0);

    const Dims& dims() const { return dims_; }
    int channels() const { return channels_; }
    double voxel_size_um() const { return voxel_size_um_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& mutable_values() { return values_; }

    double at(int x, int y, int z, int c = 0) const {
        return values_[linear_index(dims_, x, y, z) * channels_ + c];
    }

private:
    Dims dims_{};
    int channels_ = 1;
    double voxel_size_um_ = 1.0;
    std::vector<double> values_;
};

enum class ElementKind { Label, Scalar };
enum class ByteOrder { Little, Big };

// Sidecar metadata for a headerless raw volume file. JSON keys:
//   dims ([nx,ny,nz]), voxel_size_um, element_kind ("label"|"scalar"),
//   channels, byte_order ("little"|"big"), n_phases, phase_names.
// Unknown keys are ignored. Labels are stored as uint8, scalars as float64.
struct VolumeMeta {
    Dims dims{};
    double voxel_size_um = 1.0;
    ElementKind element_kind = ElementKind::Label;
    int channels = 1;
    ByteOrder byte_order = ByteOrder::Little;
    int n_phases = 0;
    std::vector<std::string> phase_names;

    std::int64_t element_width() const {
        return element_kind == ElementKind::Label ? 1 : 8;
    }
    std::int64_t file_bytes() const {
        return dims.count() * channels * element_width();
    }
    void validate() const;
};

VolumeMeta load_meta(const std::string& json_path);
void save_meta(const VolumeMeta& meta, const std::string& json_path);

// Sidecar path convention: <raw path> + ".json".
std::string sidecar_path(const std::string& raw_path);

LabelVolume read_label_volume(const std::string& raw_path, const VolumeMeta& meta);
ScalarVolume read_scalar_volume(const std::string& raw_path, const VolumeMeta& meta);

// Loads meta from the sidecar next to `raw_path`.
LabelVolume read_label_volume(const std::string& raw_path);
ScalarVolume read_scalar_volume(const std::string& raw_path);

// Writes the raw file and its sidecar.
void write_volume(const LabelVolume& vol, const std::string& raw_path,
                  const std::vector<std::string>& phase_names = {},
                  ByteOrder order = ByteOrder::Little);
void write_volume(const ScalarVolume& vol, const std::string& raw_path,
                  ByteOrder order = ByteOrder::Little);

struct BlockIndex {
    int x = 0, y = 0, z = 0;    // origin, voxels
    int bx = 0, by = 0, bz = 0; // extent, voxels

    bool operator==(const BlockIndex&) const = default;
};

LabelVolume crop(const LabelVolume& vol, const BlockIndex& block);

// Blocks must tile `dims` exactly: no overlap, no gap. Submission order
// does not matter.
LabelVolume stitch(const std::vector<std::pair<BlockIndex, LabelVolume>>& blocks,
                   Dims dims);

} // namespace rockseg
