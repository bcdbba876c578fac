#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rockseg/lbm.hpp"
#include "rockseg/lbm_multiphase.hpp"

namespace rockseg::cmd {

// Implementations behind the CLI subcommands. Each computes first and then
// writes its outputs atomically, so failures leave no partial files; every
// command also writes <out_dir>/manifest.json.

struct SynthOptions {
    std::string out_dir;
    std::uint64_t seed = 1;
    Dims dims{64, 64, 64};
    double porosity = 0.3;
    double grain_min = 4.0;
    double grain_max = 9.0;
    int n_phases = 6;
    int count = 1;             // volume pairs to generate
    std::string mode = "rock"; // rock | spheres
    int sphere_count = 5;
};
void synth(const SynthOptions& opt);

struct EvaluateOptions {
    std::string truth_path;
    std::string pred_path;
    std::string weights_mode = "unweighted";
    std::string out_dir;
};
void evaluate(const EvaluateOptions& opt);

struct TopologyOptions {
    std::string volume_path;
    std::vector<int> phases; // empty = all
    std::string out_dir;
};
void topology(const TopologyOptions& opt);

struct PermeabilityOptions {
    std::string volume_path;
    int pore_phase = 0;
    std::string axis = "x";
    std::string config_path; // optional JSON overriding LbmParams
    std::string out_dir;
    bool dump_flow = false;
};
void permeability_cmd(const PermeabilityOptions& opt);

struct DrainageOptions {
    std::string volume_path;
    int pore_phase = 0;
    std::string mode = "uniform"; // uniform | mixed
    double uniform_angle_deg = 45.0;
    std::string wetting_path; // JSON label->angle map (mixed mode)
    std::string config_path;  // optional JSON overriding fluid/run params
    double ca = 5e-5;
    std::string out_dir;
    bool dump_phase = false; // write the final phase field as a raw volume
};
void drainage(const DrainageOptions& opt);

struct NetinfoOptions {
    std::string spec_path;
    std::string out_dir;
};
void netinfo(const NetinfoOptions& opt);

struct TrainToyOptions {
    std::string dataset_dir;
    std::string spec_path;
    std::string train_config_path; // optional
    std::optional<std::uint64_t> seed_override;
    double val_fraction = 0.2;
    std::string out_dir;
};
void train_toy(const TrainToyOptions& opt);

struct ReportOptions {
    std::vector<std::string> run_dirs;
    std::string out_dir;
};
void report(const ReportOptions& opt);

// Shared helpers.
LbmParams lbm_params_from_json(const std::string& path);
TwoFluidParams twofluid_params_from_json(const std::string& path, DrainageParams& run);
WettingMap wetting_map_from_json(const std::string& path);

} // namespace rockseg::cmd
