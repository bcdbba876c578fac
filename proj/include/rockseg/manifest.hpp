#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rockseg {

inline constexpr const char* kToolVersion = "rockseg 0.1.0";

// FNV-1a over file bytes; recorded in run manifests for reproducibility.
std::uint64_t fnv1a_file(const std::string& path);
std::uint64_t fnv1a_bytes(const void* data, std::size_t n);

// Every command writes one of these next to its outputs. Data outputs are
// bit-reproducible given the same inputs, seeds and thread count; the
// manifest itself carries wall-clock timestamps and is the one file
// excluded from byte-identity comparisons.
class RunManifest {
public:
    RunManifest(std::string command, std::string out_dir);

    void add_input(const std::string& path);
    void add_output(const std::string& path);
    void set_config(const std::string& json_text);
    void set_seed(std::uint64_t seed);
    void set_threads(int threads);

    // Writes <out_dir>/manifest.json (atomically, like all outputs).
    void write() const;

private:
    std::string command_;
    std::string out_dir_;
    std::string config_json_;
    std::uint64_t seed_ = 0;
    int threads_ = 1;
    std::string started_at_;
    std::vector<std::pair<std::string, std::uint64_t>> inputs_; // path, hash
    std::vector<std::string> outputs_;
};

// Write-to-temp plus atomic rename, creating parent directories.
void atomic_write(const std::string& path, const std::string& content);

} // namespace rockseg
