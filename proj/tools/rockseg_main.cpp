// rockseg: voxel-volume toolkit for multi-mineral rock segmentations.
// Subcommands: synth, evaluate, topology, permeability, drainage, netinfo,
// train-toy, report.
//
// Exit codes: 0 success, 2 usage, 3 I/O, 4 shape, 5 validation,
// 6 numerical divergence.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "rockseg/commands.hpp"
#include "rockseg/errors.hpp"
#include "rockseg/manifest.hpp"
#include "rockseg/parallel.hpp"

using namespace rockseg;

namespace {

Dims parse_dims(const std::string& s) {
    Dims d;
    if (std::sscanf(s.c_str(), "%d,%d,%d", &d.nx, &d.ny, &d.nz) != 3)
        throw UsageError("dims must be nx,ny,nz");
    return d;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rockseg: segmentation quality, topology and pore-scale flow "
                 "for voxel rock volumes"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    int threads = 1;
    std::uint64_t seed = 1;
    app.add_option("--threads", threads, "Worker threads (default 1)");
    app.add_option("--seed", seed, "Random seed for generator-backed commands");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate synthetic rock fixtures");
    std::string synth_dims = "64,64,64";
    cmd::SynthOptions so;
    synth->add_option("--out-dir", so.out_dir)->required();
    synth->add_option("--dims", synth_dims, "nx,ny,nz");
    synth->add_option("--porosity", so.porosity);
    synth->add_option("--grain-min", so.grain_min);
    synth->add_option("--grain-max", so.grain_max);
    synth->add_option("--n-phases", so.n_phases);
    synth->add_option("--count", so.count, "Number of volume pairs");
    synth->add_option("--mode", so.mode, "rock | spheres");
    synth->add_option("--sphere-count", so.sphere_count);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Voxelwise comparison of two volumes");
    cmd::EvaluateOptions eo;
    evaluate->add_option("--truth", eo.truth_path)->required();
    evaluate->add_option("--pred", eo.pred_path)->required();
    evaluate->add_option("--weights-mode", eo.weights_mode, "weighted | unweighted");
    evaluate->add_option("--out-dir", eo.out_dir)->required();

    // topology
    auto* topology = app.add_subcommand("topology", "Per-phase Euler numbers");
    cmd::TopologyOptions to;
    topology->add_option("--volume", to.volume_path)->required();
    topology->add_option("--phases", to.phases, "Phase ids (default: all)");
    topology->add_option("--out-dir", to.out_dir)->required();

    // permeability
    auto* permeability =
        app.add_subcommand("permeability", "Single-phase LBM permeability");
    cmd::PermeabilityOptions po;
    permeability->add_option("--volume", po.volume_path)->required();
    permeability->add_option("--pore-phase", po.pore_phase);
    permeability->add_option("--axis", po.axis, "x | y | z");
    permeability->add_option("--config", po.config_path, "Solver config JSON");
    permeability->add_flag("--dump-flow", po.dump_flow, "Write density/velocity volumes");
    permeability->add_option("--out-dir", po.out_dir)->required();

    // drainage
    auto* drainage = app.add_subcommand("drainage", "Two-fluid primary drainage");
    cmd::DrainageOptions dro;
    drainage->add_option("--volume", dro.volume_path)->required();
    drainage->add_option("--pore-phase", dro.pore_phase);
    drainage->add_option("--mode", dro.mode, "uniform | mixed");
    drainage->add_option("--angle", dro.uniform_angle_deg,
                         "Uniform contact angle, degrees through the WP");
    drainage->add_option("--wetting", dro.wetting_path, "Per-mineral angle JSON (mixed)");
    drainage->add_option("--config", dro.config_path, "Fluid/run config JSON");
    drainage->add_option("--ca", dro.ca, "Target capillary number");
    drainage->add_flag("--dump-phase", dro.dump_phase, "Write the final phase field");
    drainage->add_option("--out-dir", dro.out_dir)->required();

    // netinfo
    auto* netinfo = app.add_subcommand("netinfo", "Architecture summary and counts");
    cmd::NetinfoOptions no;
    netinfo->add_option("--spec", no.spec_path)->required();
    netinfo->add_option("--out-dir", no.out_dir)->required();

    // train-toy
    auto* train = app.add_subcommand("train-toy", "Train a desk-scale network");
    cmd::TrainToyOptions tr;
    train->add_option("--dataset-dir", tr.dataset_dir)->required();
    train->add_option("--spec", tr.spec_path)->required();
    train->add_option("--train-config", tr.train_config_path);
    train->add_option("--val-fraction", tr.val_fraction);
    train->add_option("--out-dir", tr.out_dir)->required();

    // report
    auto* report = app.add_subcommand("report", "Merge run outputs into tables");
    cmd::ReportOptions ro;
    report->add_option("runs", ro.run_dirs, "Run directories")->required();
    report->add_option("--out-dir", ro.out_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        set_thread_count(threads);
        if (*synth) {
            so.seed = seed;
            so.dims = parse_dims(synth_dims);
            cmd::synth(so);
        } else if (*evaluate) {
            cmd::evaluate(eo);
        } else if (*topology) {
            cmd::topology(to);
        } else if (*permeability) {
            cmd::permeability_cmd(po);
        } else if (*drainage) {
            cmd::drainage(dro);
        } else if (*netinfo) {
            cmd::netinfo(no);
        } else if (*train) {
            if (app.count("--seed") > 0) tr.seed_override = seed;
            cmd::train_toy(tr);
        } else if (*report) {
            cmd::report(ro);
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "shape error: %s\n", e.what());
        return 4;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 5;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 6;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
