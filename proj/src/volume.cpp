#include "rockseg/volume.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rockseg {

namespace {

std::string dims_str(const Dims& d) {
    std::ostringstream os;
    os << d.nx << "x" << d.ny << "x" << d.nz;
    return os.str();
}

void check_dims(const Dims& d) {
    if (d.nx < 1 || d.ny < 1 || d.nz < 1)
        throw ValidationError("volume dims must be >= 1, got " + dims_str(d));
}

} // namespace

LabelVolume::LabelVolume(Dims dims, int n_phases, std::vector<std::uint8_t> labels,
                         double voxel_size_um)
    : dims_(dims), n_phases_(n_phases), voxel_size_um_(voxel_size_um),
      labels_(std::move(labels)) {
    check_dims(dims_);
    if (n_phases_ < 1) throw ValidationError("n_phases must be >= 1");
    if (static_cast<std::int64_t>(labels_.size()) != dims_.count())
        throw ShapeError("label array length " + std::to_string(labels_.size()) +
                         " does not match dims " + dims_str(dims_));
    for (std::int64_t i = 0; i < dims_.count(); ++i) {
        if (labels_[i] >= n_phases_) {
            const int x = static_cast<int>(i % dims_.nx);
            const int y = static_cast<int>((i / dims_.nx) % dims_.ny);
            const int z = static_cast<int>(i / (static_cast<std::int64_t>(dims_.nx) * dims_.ny));
            throw ValidationError("label " + std::to_string(labels_[i]) + " >= n_phases " +
                                  std::to_string(n_phases_) + " at voxel (" + std::to_string(x) +
                                  "," + std::to_string(y) + "," + std::to_string(z) + ")");
        }
    }
}

ScalarVolume::ScalarVolume(Dims dims, int channels, std::vector<double> values,
                           double voxel_size_um)
    : dims_(dims), channels_(channels), voxel_size_um_(voxel_size_um),
      values_(std::move(values)) {
    check_dims(dims_);
    if (channels_ < 1) throw ValidationError("channels must be >= 1");
    if (static_cast<std::int64_t>(values_.size()) != dims_.count() * channels_)
        throw ShapeError("value array length " + std::to_string(values_.size()) +
                         " does not match dims " + dims_str(dims_) + " x " +
                         std::to_string(channels_) + " channels");
    for (double v : values_) {
        if (!std::isfinite(v)) throw ValidationError("scalar volume contains non-finite value");
    }
}

void VolumeMeta::validate() const {
    check_dims(dims);
    if (channels < 1) throw ValidationError("meta: channels must be >= 1");
    if (element_kind == ElementKind::Label) {
        if (n_phases < 1) throw ValidationError("meta: label volume needs n_phases >= 1");
        if (!phase_names.empty() &&
            static_cast<int>(phase_names.size()) != n_phases)
            throw ValidationError("meta: phase_names length " +
                                  std::to_string(phase_names.size()) + " != n_phases " +
                                  std::to_string(n_phases));
        if (channels != 1) throw ValidationError("meta: label volumes are single-channel");
    }
}

VolumeMeta load_meta(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw IoError("cannot open metadata file: " + json_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse metadata file " + json_path + ": " + e.what());
    }
    VolumeMeta m;
    try {
        auto d = j.at("dims");
        m.dims = Dims{d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
        if (j.contains("voxel_size_um")) m.voxel_size_um = j["voxel_size_um"].get<double>();
        const std::string kind = j.at("element_kind").get<std::string>();
        if (kind == "label") m.element_kind = ElementKind::Label;
        else if (kind == "scalar") m.element_kind = ElementKind::Scalar;
        else throw ValidationError("meta: unknown element_kind '" + kind + "'");
        if (j.contains("channels")) m.channels = j["channels"].get<int>();
        if (j.contains("byte_order")) {
            const std::string bo = j["byte_order"].get<std::string>();
            if (bo == "little") m.byte_order = ByteOrder::Little;
            else if (bo == "big") m.byte_order = ByteOrder::Big;
            else throw ValidationError("meta: unknown byte_order '" + bo + "'");
        }
        if (j.contains("phase_names"))
            m.phase_names = j["phase_names"].get<std::vector<std::string>>();
        if (j.contains("n_phases")) m.n_phases = j["n_phases"].get<int>();
        else m.n_phases = static_cast<int>(m.phase_names.size());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("metadata file " + json_path + " is malformed: " + e.what());
    }
    m.validate();
    return m;
}

void save_meta(const VolumeMeta& meta, const std::string& json_path) {
    nlohmann::json j;
    j["dims"] = {meta.dims.nx, meta.dims.ny, meta.dims.nz};
    j["voxel_size_um"] = meta.voxel_size_um;
    j["element_kind"] = meta.element_kind == ElementKind::Label ? "label" : "scalar";
    j["channels"] = meta.channels;
    j["byte_order"] = meta.byte_order == ByteOrder::Little ? "little" : "big";
    if (meta.element_kind == ElementKind::Label) {
        j["n_phases"] = meta.n_phases;
        if (!meta.phase_names.empty()) j["phase_names"] = meta.phase_names;
    }
    std::ofstream out(json_path);
    if (!out) throw IoError("cannot write metadata file: " + json_path);
    out << j.dump(2) << "\n";
}

std::string sidecar_path(const std::string& raw_path) { return raw_path + ".json"; }

namespace {

std::vector<char> read_exact(const std::string& path, std::int64_t expected_bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open volume file: " + path);
    in.seekg(0, std::ios::end);
    const std::int64_t actual = in.tellg();
    if (actual != expected_bytes)
        throw IoError("volume file " + path + ": expected " + std::to_string(expected_bytes) +
                      " bytes, found " + std::to_string(actual));
    in.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(expected_bytes));
    in.read(buf.data(), expected_bytes);
    if (!in) throw IoError("short read on volume file: " + path);
    return buf;
}

bool need_swap(ByteOrder order) {
    return (order == ByteOrder::Big) == (std::endian::native == std::endian::little);
}

void swap_doubles(std::vector<char>& buf) {
    for (std::size_t i = 0; i + 8 <= buf.size(); i += 8) {
        std::swap(buf[i + 0], buf[i + 7]);
        std::swap(buf[i + 1], buf[i + 6]);
        std::swap(buf[i + 2], buf[i + 5]);
        std::swap(buf[i + 3], buf[i + 4]);
    }
}

} // namespace

LabelVolume read_label_volume(const std::string& raw_path, const VolumeMeta& meta) {
    meta.validate();
    if (meta.element_kind != ElementKind::Label)
        throw ValidationError("metadata for " + raw_path + " does not describe a label volume");
    auto buf = read_exact(raw_path, meta.file_bytes());
    std::vector<std::uint8_t> labels(buf.begin(), buf.end());
    return LabelVolume(meta.dims, meta.n_phases, std::move(labels), meta.voxel_size_um);
}

ScalarVolume read_scalar_volume(const std::string& raw_path, const VolumeMeta& meta) {
    meta.validate();
    if (meta.element_kind != ElementKind::Scalar)
        throw ValidationError("metadata for " + raw_path + " does not describe a scalar volume");
    auto buf = read_exact(raw_path, meta.file_bytes());
    if (need_swap(meta.byte_order)) swap_doubles(buf);
    std::vector<double> values(buf.size() / 8);
    std::memcpy(values.data(), buf.data(), buf.size());
    return ScalarVolume(meta.dims, meta.channels, std::move(values), meta.voxel_size_um);
}

LabelVolume read_label_volume(const std::string& raw_path) {
    return read_label_volume(raw_path, load_meta(sidecar_path(raw_path)));
}

ScalarVolume read_scalar_volume(const std::string& raw_path) {
    return read_scalar_volume(raw_path, load_meta(sidecar_path(raw_path)));
}

namespace {

void write_bytes(const std::string& path, const char* data, std::int64_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write volume file: " + path);
    out.write(data, n);
    if (!out) throw IoError("short write on volume file: " + path);
}

} // namespace

void write_volume(const LabelVolume& vol, const std::string& raw_path,
                  const std::vector<std::string>& phase_names, ByteOrder order) {
    VolumeMeta m;
    m.dims = vol.dims();
    m.voxel_size_um = vol.voxel_size_um();
    m.element_kind = ElementKind::Label;
    m.channels = 1;
    m.byte_order = order;
    m.n_phases = vol.n_phases();
    m.phase_names = phase_names;
    m.validate();
    write_bytes(raw_path, reinterpret_cast<const char*>(vol.labels().data()),
                static_cast<std::int64_t>(vol.labels().size()));
    save_meta(m, sidecar_path(raw_path));
}

void write_volume(const ScalarVolume& vol, const std::string& raw_path, ByteOrder order) {
    VolumeMeta m;
    m.dims = vol.dims();
    m.voxel_size_um = vol.voxel_size_um();
    m.element_kind = ElementKind::Scalar;
    m.channels = vol.channels();
    m.byte_order = order;
    std::vector<char> buf(vol.values().size() * 8);
    std::memcpy(buf.data(), vol.values().data(), buf.size());
    if (need_swap(order)) swap_doubles(buf);
    write_bytes(raw_path, buf.data(), static_cast<std::int64_t>(buf.size()));
    save_meta(m, sidecar_path(raw_path));
}

LabelVolume crop(const LabelVolume& vol, const BlockIndex& block) {
    const Dims& d = vol.dims();
    if (block.bx < 1 || block.by < 1 || block.bz < 1 || block.x < 0 || block.y < 0 ||
        block.z < 0 || block.x + block.bx > d.nx || block.y + block.by > d.ny ||
        block.z + block.bz > d.nz)
        throw ShapeError("crop block out of bounds");
    std::vector<std::uint8_t> out(static_cast<std::size_t>(block.bx) * block.by * block.bz);
    std::size_t o = 0;
    for (int z = 0; z < block.bz; ++z)
        for (int y = 0; y < block.by; ++y) {
            const std::int64_t row = linear_index(d, block.x, block.y + y, block.z + z);
            for (int x = 0; x < block.bx; ++x) out[o++] = vol.labels()[row + x];
        }
    return LabelVolume(Dims{block.bx, block.by, block.bz}, vol.n_phases(), std::move(out),
                       vol.voxel_size_um());
}

LabelVolume stitch(const std::vector<std::pair<BlockIndex, LabelVolume>>& blocks, Dims dims) {
    check_dims(dims);
    if (blocks.empty()) throw ValidationError("stitch: no blocks given");
    const int n_phases = blocks.front().second.n_phases();
    std::vector<std::uint8_t> out(static_cast<std::size_t>(dims.count()), 0);
    std::vector<std::uint8_t> covered(static_cast<std::size_t>(dims.count()), 0);
    for (const auto& [b, vol] : blocks) {
        if (vol.dims() != Dims{b.bx, b.by, b.bz})
            throw ShapeError("stitch: block volume dims do not match its BlockIndex extent");
        if (vol.n_phases() != n_phases)
            throw ValidationError("stitch: blocks disagree on n_phases");
        if (b.x < 0 || b.y < 0 || b.z < 0 || b.x + b.bx > dims.nx || b.y + b.by > dims.ny ||
            b.z + b.bz > dims.nz)
            throw ShapeError("stitch: block out of bounds");
        for (int z = 0; z < b.bz; ++z)
            for (int y = 0; y < b.by; ++y) {
                const std::int64_t row = linear_index(dims, b.x, b.y + y, b.z + z);
                const std::int64_t src = linear_index(vol.dims(), 0, y, z);
                for (int x = 0; x < b.bx; ++x) {
                    if (covered[row + x])
                        throw ValidationError(
                            "stitch: voxel covered twice, first at linear index " +
                            std::to_string(row + x));
                    covered[row + x] = 1;
                    out[row + x] = vol.labels()[src + x];
                }
            }
    }
    for (std::int64_t i = 0; i < dims.count(); ++i)
        if (!covered[i])
            throw ValidationError("stitch: voxel not covered, first at linear index " +
                                  std::to_string(i));
    return LabelVolume(dims, n_phases, std::move(out), blocks.front().second.voxel_size_um());
}

} // namespace rockseg
