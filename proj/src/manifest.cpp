#include "rockseg/manifest.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "rockseg/errors.hpp"

namespace rockseg {

namespace fs = std::filesystem;

std::uint64_t fnv1a_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for hashing: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    return h;
}

void atomic_write(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        if (!out) throw IoError("short write on " + tmp.string());
    }
    fs::rename(tmp, target);
}

namespace {

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[64];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

} // namespace

RunManifest::RunManifest(std::string command, std::string out_dir)
    : command_(std::move(command)), out_dir_(std::move(out_dir)),
      started_at_(now_iso8601()) {}

void RunManifest::add_input(const std::string& path) {
    inputs_.emplace_back(path, fnv1a_file(path));
}

void RunManifest::add_output(const std::string& path) { outputs_.push_back(path); }

void RunManifest::set_config(const std::string& json_text) { config_json_ = json_text; }

void RunManifest::set_seed(std::uint64_t seed) { seed_ = seed; }

void RunManifest::set_threads(int threads) { threads_ = threads; }

void RunManifest::write() const {
    nlohmann::json j;
    j["tool_version"] = kToolVersion;
    j["command"] = command_;
    j["started_at"] = started_at_;
    j["finished_at"] = now_iso8601();
    j["seed"] = seed_;
    j["threads"] = threads_;
    if (!config_json_.empty()) {
        try {
            j["config"] = nlohmann::json::parse(config_json_);
        } catch (const nlohmann::json::exception&) {
            j["config"] = config_json_;
        }
    }
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& [path, hash] : inputs_) {
        char hex[32];
        std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
        inputs.push_back({{"path", path}, {"fnv1a64", hex}});
    }
    j["inputs"] = inputs;
    j["outputs"] = outputs_;
    atomic_write((fs::path(out_dir_) / "manifest.json").string(), j.dump(2) + "\n");
}

} // namespace rockseg
