#include "rockseg/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rockseg/manifest.hpp"
#include "rockseg/metrics.hpp"
#include "rockseg/nn.hpp"
#include "rockseg/parallel.hpp"
#include "rockseg/synth.hpp"

#include <cstdio>
#include "rockseg/topology.hpp"

namespace rockseg::cmd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
}

std::string run_name(const std::string& out_dir) {
    fs::path p(out_dir);
    if (p.filename().empty()) p = p.parent_path();
    return p.filename().string();
}

Axis axis_from_string(const std::string& s) {
    if (s == "x") return Axis::X;
    if (s == "y") return Axis::Y;
    if (s == "z") return Axis::Z;
    throw UsageError("axis must be x, y or z, got '" + s + "'");
}

} // namespace

LbmParams lbm_params_from_json(const std::string& path) {
    LbmParams p;
    if (path.empty()) return p;
    const json j = load_json(path);
    p.tau = j.value("tau", p.tau);
    p.body_force = j.value("body_force", p.body_force);
    p.tol = j.value("tolerance", p.tol);
    p.check_interval = j.value("check_interval", p.check_interval);
    p.max_steps = j.value("max_steps", p.max_steps);
    p.bgk = j.value("bgk", p.bgk);
    const std::string mirror = j.value("mirror", "auto");
    if (mirror == "auto") p.mirror = MirrorMode::Auto;
    else if (mirror == "on") p.mirror = MirrorMode::On;
    else if (mirror == "off") p.mirror = MirrorMode::Off;
    else throw ValidationError("config: mirror must be auto/on/off");
    return p;
}

TwoFluidParams twofluid_params_from_json(const std::string& path, DrainageParams& run) {
    TwoFluidParams p;
    // Defaults tuned for the desk-scale drainage fixtures; gamma measured by
    // the Laplace sweep at these parameters (tools/wetting_calibration).
    p.tau_r = 0.58;
    p.tau_b = 1.0;
    p.perturbation_A = 0.3;
    p.gamma = 0.055;
    if (path.empty()) return p;
    const json j = load_json(path);
    p.tau_r = j.value("tau_r", p.tau_r);
    p.tau_b = j.value("tau_b", p.tau_b);
    p.density_ratio = j.value("density_ratio", p.density_ratio);
    p.perturbation_A = j.value("perturbation_A", p.perturbation_A);
    p.beta_recolor = j.value("beta_recolor", p.beta_recolor);
    p.gamma = j.value("gamma", p.gamma);
    run.sample_interval = j.value("sample_interval", run.sample_interval);
    run.max_steps = j.value("max_steps", run.max_steps);
    run.inlet_width = j.value("inlet_width", run.inlet_width);
    run.outlet_guard = j.value("outlet_guard", run.outlet_guard);
    run.control_interval = j.value("control_interval", run.control_interval);
    run.g_init = j.value("g_init", run.g_init);
    run.g_min = j.value("g_min", run.g_min);
    run.g_max = j.value("g_max", run.g_max);
    return p;
}

WettingMap wetting_map_from_json(const std::string& path) {
    WettingMap map;
    const json j = load_json(path);
    if (!j.contains("angles"))
        throw ValidationError("wetting config " + path + ": missing 'angles' object");
    for (const auto& [key, value] : j.at("angles").items())
        map.angle_deg[std::stoi(key)] = value.get<double>();
    return map;
}

void synth(const SynthOptions& opt) {
    RunManifest manifest("synth", opt.out_dir);
    manifest.set_seed(opt.seed);
    manifest.set_threads(thread_count());
    json cfg = {{"dims", {opt.dims.nx, opt.dims.ny, opt.dims.nz}},
                {"porosity", opt.porosity},
                {"grain_min", opt.grain_min},
                {"grain_max", opt.grain_max},
                {"n_phases", opt.n_phases},
                {"count", opt.count},
                {"mode", opt.mode}};
    manifest.set_config(cfg.dump());
    fs::create_directories(opt.out_dir);

    const std::vector<std::string> names = {"pore",     "clay",  "quartz",
                                            "feldspar", "micas", "mixed"};
    std::vector<std::string> phase_names;
    for (int i = 0; i < opt.n_phases && i < 6; ++i) phase_names.push_back(names[i]);
    if (opt.n_phases > 6)
        for (int i = 6; i < opt.n_phases; ++i)
            phase_names.push_back("phase" + std::to_string(i));

    for (int i = 0; i < opt.count; ++i) {
        char stem[64];
        std::snprintf(stem, sizeof(stem), "sample_%04d", i);
        const std::string base = (fs::path(opt.out_dir) / stem).string();
        if (opt.mode == "rock") {
            SynthSpec spec;
            spec.porosity_target = opt.porosity;
            spec.grain_r_min = opt.grain_min;
            spec.grain_r_max = opt.grain_max;
            spec.n_phases = opt.n_phases;
            SynthResult r = synth_rock(opt.seed + i, opt.dims, spec);
            write_volume(r.grey, base + ".grey.raw");
            write_volume(r.labels, base + ".labels.raw", phase_names);
            manifest.add_output(base + ".grey.raw");
            manifest.add_output(base + ".labels.raw");
        } else if (opt.mode == "spheres") {
            LabelVolume v = synth_spheres(opt.seed + i, opt.dims, opt.sphere_count,
                                          opt.grain_min, opt.grain_max);
            write_volume(v, base + ".labels.raw", {"background", "sphere"});
            manifest.add_output(base + ".labels.raw");
        } else {
            throw UsageError("synth mode must be rock or spheres");
        }
    }
    manifest.write();
}

void evaluate(const EvaluateOptions& opt) {
    if (opt.weights_mode != "weighted" && opt.weights_mode != "unweighted")
        throw UsageError("weights-mode must be weighted or unweighted");
    LabelVolume truth = read_label_volume(opt.truth_path);
    LabelVolume pred = read_label_volume(opt.pred_path);

    ConfusionMatrix cm = confusion(truth, pred);
    PhaseReport rep = phase_report(cm);
    ClassWeights weights = class_weights(
        truth, opt.weights_mode == "weighted" ? WeightMode::Weighted : WeightMode::Unweighted);

    const VolumeMeta meta = load_meta(sidecar_path(opt.truth_path));

    json j;
    j["run"] = run_name(opt.out_dir);
    j["weights_mode"] = opt.weights_mode;
    j["n_phases"] = rep.n_phases;
    j["overall_accuracy"] = rep.overall_accuracy;
    j["mean_accuracy"] = rep.mean_accuracy;
    j["weighted_mean_accuracy"] = rep.weighted_mean_accuracy;
    j["per_phase_accuracy"] = rep.per_phase_accuracy;
    j["volume_fraction"] = rep.volume_fraction;
    j["present"] = std::vector<int>(rep.present.begin(), rep.present.end());
    j["class_weights"] = weights.w;
    json cmj = json::array();
    for (int t = 0; t < cm.n_phases; ++t) {
        json row = json::array();
        for (int p = 0; p < cm.n_phases; ++p) row.push_back(cm.at(t, p));
        cmj.push_back(row);
    }
    j["confusion"] = cmj;

    RunManifest manifest("evaluate", opt.out_dir);
    manifest.set_threads(thread_count());
    manifest.add_input(opt.truth_path);
    manifest.add_input(opt.pred_path);
    manifest.set_config(json({{"weights_mode", opt.weights_mode}}).dump());

    const std::string csv_path = (fs::path(opt.out_dir) / "phase_report.csv").string();
    const std::string json_path = (fs::path(opt.out_dir) / "phase_report.json").string();
    atomic_write(csv_path, phase_report_csv(rep, meta.phase_names));
    atomic_write(json_path, j.dump(2) + "\n");
    manifest.add_output(csv_path);
    manifest.add_output(json_path);
    manifest.write();
}

void topology(const TopologyOptions& opt) {
    LabelVolume vol = read_label_volume(opt.volume_path);
    std::vector<int> phases = opt.phases;
    if (phases.empty())
        for (int i = 0; i < vol.n_phases(); ++i) phases.push_back(i);
    for (int p : phases)
        if (p < 0 || p >= vol.n_phases())
            throw UsageError("topology: phase " + std::to_string(p) + " out of range");

    std::ostringstream csv;
    csv << "phase,voxels,chi,beta0,beta1,beta2,largest_component\n";
    json rows = json::array();
    for (int p : phases) {
        BinaryMask m = extract_phase(vol, p);
        TopologyReport r = euler_number(m);
        const std::int64_t largest =
            r.component_sizes.empty() ? 0 : r.component_sizes.front();
        csv << p << "," << m.count() << "," << r.chi << "," << r.beta0 << "," << r.beta1
            << "," << r.beta2 << "," << largest << "\n";
        rows.push_back({{"phase", p},
                        {"voxels", m.count()},
                        {"chi", r.chi},
                        {"beta0", r.beta0},
                        {"beta1", r.beta1},
                        {"beta2", r.beta2},
                        {"component_sizes", r.component_sizes}});
    }
    json j;
    j["run"] = run_name(opt.out_dir);
    j["volume"] = opt.volume_path;
    j["phases"] = rows;

    RunManifest manifest("topology", opt.out_dir);
    manifest.set_threads(thread_count());
    manifest.add_input(opt.volume_path);
    const std::string csv_path = (fs::path(opt.out_dir) / "topology.csv").string();
    const std::string json_path = (fs::path(opt.out_dir) / "topology.json").string();
    atomic_write(csv_path, csv.str());
    atomic_write(json_path, j.dump(2) + "\n");
    manifest.add_output(csv_path);
    manifest.add_output(json_path);
    manifest.write();
}

void permeability_cmd(const PermeabilityOptions& opt) {
    LabelVolume vol = read_label_volume(opt.volume_path);
    LbmParams params = lbm_params_from_json(opt.config_path);
    params.axis = axis_from_string(opt.axis);

    SinglePhaseLattice lat(vol, opt.pore_phase, params);
    FlowField field = lat.run_to_steady();
    PermeabilityResult k = permeability(field);

    json j;
    j["run"] = run_name(opt.out_dir);
    j["volume"] = opt.volume_path;
    j["pore_phase"] = opt.pore_phase;
    j["axis"] = opt.axis;
    j["k_lattice"] = k.k_lattice;
    j["k_um2"] = k.k_um2;
    j["nu"] = k.nu;
    j["grad_p"] = k.grad_p;
    j["mean_velocity"] = k.mean_velocity;
    j["domain_length"] = k.domain_length;
    j["converged"] = k.converged;
    j["non_percolating"] = k.non_percolating;
    j["steps"] = k.steps;
    j["mirrored"] = field.mirrored;
    j["fluid_cells"] = lat.fluid_cells();

    RunManifest manifest("permeability", opt.out_dir);
    manifest.set_threads(thread_count());
    manifest.add_input(opt.volume_path);
    json cfg = {{"tau", params.tau},       {"body_force", params.body_force},
                {"tolerance", params.tol}, {"check_interval", params.check_interval},
                {"max_steps", params.max_steps}, {"axis", opt.axis}};
    manifest.set_config(cfg.dump());

    const std::string json_path = (fs::path(opt.out_dir) / "permeability.json").string();
    atomic_write(json_path, j.dump(2) + "\n");
    manifest.add_output(json_path);

    if (opt.dump_flow) {
        const Dims d = field.dims;
        std::vector<double> rho(static_cast<std::size_t>(d.count()), 0.0);
        std::vector<double> vel(static_cast<std::size_t>(d.count()) * 3, 0.0);
        for (std::int64_t i = 0; i < d.count(); ++i) {
            const std::int32_t c = field.cell_of_voxel[i];
            if (c < 0) continue;
            rho[i] = field.rho[c];
            vel[i * 3 + 0] = field.ux[c];
            vel[i * 3 + 1] = field.uy[c];
            vel[i * 3 + 2] = field.uz[c];
        }
        const std::string rho_path = (fs::path(opt.out_dir) / "flow_rho.raw").string();
        const std::string vel_path = (fs::path(opt.out_dir) / "flow_velocity.raw").string();
        write_volume(ScalarVolume(d, 1, std::move(rho), vol.voxel_size_um()), rho_path);
        write_volume(ScalarVolume(d, 3, std::move(vel), vol.voxel_size_um()), vel_path);
        manifest.add_output(rho_path);
        manifest.add_output(vel_path);
    }
    manifest.write();
}

void drainage(const DrainageOptions& opt) {
    LabelVolume vol = read_label_volume(opt.volume_path);
    DrainageParams run;
    run.ca_target = opt.ca;
    TwoFluidParams fluid = twofluid_params_from_json(opt.config_path, run);

    WettingMap wetting;
    if (opt.mode == "uniform") {
        for (int l = 0; l < vol.n_phases(); ++l)
            if (l != opt.pore_phase) wetting.angle_deg[l] = opt.uniform_angle_deg;
    } else if (opt.mode == "mixed") {
        if (opt.wetting_path.empty())
            throw UsageError("drainage mixed mode needs --wetting <angles.json>");
        wetting = wetting_map_from_json(opt.wetting_path);
    } else {
        throw UsageError("drainage mode must be uniform or mixed");
    }

    const bool pore_connected = percolates(extract_phase(vol, opt.pore_phase),
                                            fluid.axis);
    if (!pore_connected)
        std::fprintf(stderr,
                     "warning: pore phase does not percolate along the injection axis\n");

    TwoFluidLattice lat(vol, opt.pore_phase, wetting, fluid);
    DrainageTrace trace = run_drainage(lat, run);

    json j;
    j["run"] = run_name(opt.out_dir);
    j["volume"] = opt.volume_path;
    j["mode"] = opt.mode;
    j["ca_target"] = run.ca_target;
    j["gamma"] = fluid.gamma;
    j["tau_r"] = fluid.tau_r;
    j["tau_b"] = fluid.tau_b;
    j["reached_breakthrough"] = trace.reached_breakthrough;
    j["pore_percolates"] = pore_connected;
    j["steps"] = trace.steps;
    json samples = json::array();
    for (const auto& s : trace.samples)
        samples.push_back({{"step", s.step},
                           {"saturation", s.saturation},
                           {"chi", s.nwp.chi},
                           {"beta0", s.nwp.beta0},
                           {"beta1", s.nwp.beta1},
                           {"beta2", s.nwp.beta2},
                           {"breakthrough", s.breakthrough},
                           {"ca_measured", s.ca_measured},
                           {"body_force", s.body_force}});
    j["samples"] = samples;

    RunManifest manifest("drainage", opt.out_dir);
    manifest.set_threads(thread_count());
    manifest.add_input(opt.volume_path);
    if (!opt.wetting_path.empty()) manifest.add_input(opt.wetting_path);
    json cfg = {{"mode", opt.mode},
                {"ca_target", run.ca_target},
                {"uniform_angle_deg", opt.uniform_angle_deg},
                {"gamma", fluid.gamma},
                {"tau_r", fluid.tau_r},
                {"tau_b", fluid.tau_b},
                {"perturbation_A", fluid.perturbation_A},
                {"beta_recolor", fluid.beta_recolor},
                {"sample_interval", run.sample_interval},
                {"max_steps", run.max_steps},
                {"inlet_width", run.inlet_width},
                {"outlet_guard", run.outlet_guard}};
    manifest.set_config(cfg.dump());

    const std::string csv_path = (fs::path(opt.out_dir) / "drainage.csv").string();
    const std::string json_path = (fs::path(opt.out_dir) / "drainage.json").string();
    atomic_write(csv_path, drainage_csv(trace));
    atomic_write(json_path, j.dump(2) + "\n");
    manifest.add_output(csv_path);
    manifest.add_output(json_path);
    if (opt.dump_phase) {
        const Dims d = lat.dims();
        std::vector<double> phi(static_cast<std::size_t>(d.count()), -1.0);
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    const std::int64_t cell = lat.cell_at(x, y, z);
                    if (cell >= 0) phi[linear_index(d, x, y, z)] = lat.phi(cell);
                }
        const std::string phi_path = (fs::path(opt.out_dir) / "phase_field.raw").string();
        write_volume(ScalarVolume(d, 1, std::move(phi), vol.voxel_size_um()), phi_path);
        manifest.add_output(phi_path);
    }
    manifest.write();
}

void netinfo(const NetinfoOptions& opt) {
    nn::NetworkSpec spec = nn::spec_from_json_file(opt.spec_path);
    nn::BlockGraph graph = nn::build(spec);
    const std::string summary = nn::graph_summary_json(graph);

    RunManifest manifest("netinfo", opt.out_dir);
    manifest.set_threads(thread_count());
    manifest.add_input(opt.spec_path);
    const std::string json_path = (fs::path(opt.out_dir) / "netinfo.json").string();
    atomic_write(json_path, summary + "\n");
    manifest.add_output(json_path);
    manifest.write();
}

namespace {

struct LoadedDataset {
    std::vector<nn::Sample> samples;
    std::vector<Dims> dims;
    int n_phases = 0;
    double voxel_size_um = 1.0;
};

// Loads sample_%04d.{grey,labels}.raw pairs from a dataset directory.
LoadedDataset load_dataset(const std::string& dir) {
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        const std::string suffix = ".grey.raw";
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            stems.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty())
        throw ValidationError("dataset dir " + dir + " has no *.grey.raw samples");

    LoadedDataset out;
    for (const std::string& stem : stems) {
        const std::string grey_path = (fs::path(dir) / (stem + ".grey.raw")).string();
        const std::string label_path = (fs::path(dir) / (stem + ".labels.raw")).string();
        ScalarVolume grey = read_scalar_volume(grey_path);
        LabelVolume labels = read_label_volume(label_path);
        if (grey.dims() != labels.dims())
            throw ShapeError("dataset sample " + stem + ": grey/label dims differ");
        nn::Sample s;
        s.image = nn::Tensor(1, grey.channels(), grey.dims().nz, grey.dims().ny,
                             grey.dims().nx);
        // Volume x-fastest layout matches tensor w-fastest layout directly
        // for single-channel data.
        if (grey.channels() != 1)
            throw ValidationError("dataset sample " + stem + ": expected single channel");
        std::copy(grey.values().begin(), grey.values().end(), s.image.v.begin());
        s.labels = labels.labels();
        out.samples.push_back(std::move(s));
        out.dims.push_back(labels.dims());
        out.n_phases = labels.n_phases();
        out.voxel_size_um = labels.voxel_size_um();
    }
    return out;
}

} // namespace

void train_toy(const TrainToyOptions& opt) {
    nn::NetworkSpec spec = nn::spec_from_json_file(opt.spec_path);
    nn::TrainConfig cfg;
    if (!opt.train_config_path.empty()) {
        const json j = load_json(opt.train_config_path);
        cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
        cfg.batch = j.value("batch", cfg.batch);
        cfg.max_steps = j.value("max_steps", cfg.max_steps);
        cfg.val_interval = j.value("val_interval", cfg.val_interval);
        cfg.patience = j.value("patience", cfg.patience);
        cfg.min_delta = j.value("min_delta", cfg.min_delta);
        cfg.seed = j.value("seed", cfg.seed);
        const std::string mode = j.value("weight_mode", "unweighted");
        if (mode == "weighted") cfg.weight_mode = WeightMode::Weighted;
        else if (mode == "unweighted") cfg.weight_mode = WeightMode::Unweighted;
        else throw ValidationError("train config: weight_mode must be (un)weighted");
    }
    if (opt.seed_override) cfg.seed = *opt.seed_override;

    LoadedDataset data = load_dataset(opt.dataset_dir);
    std::vector<nn::Sample>& all = data.samples;
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(all.size() * opt.val_fraction));
    if (n_val >= all.size())
        throw ValidationError("train-toy: dataset too small for the validation split");
    std::vector<nn::Sample> train_set(all.begin(), all.end() - n_val);
    std::vector<nn::Sample> val_set(all.end() - n_val, all.end());

    // Spatial dims of the toy samples must clear the pooling chain.
    nn::BlockGraph graph = nn::build(spec);
    nn::allocate(graph, cfg.seed);
    nn::TrainResult result = nn::train(graph, train_set, val_set, cfg);

    std::ostringstream loss_csv;
    loss_csv.precision(15);
    loss_csv << "step,train_loss\n";
    for (const auto& [step, loss] : result.loss_curve) loss_csv << step << "," << loss << "\n";

    std::ostringstream val_csv;
    val_csv.precision(15);
    val_csv << "step,overall_accuracy,mean_accuracy,weighted_mean_accuracy";
    for (int p = 0; p < spec.n_phases; ++p) val_csv << ",phase" << p << "_accuracy";
    val_csv << "\n";
    for (const auto& vp : result.val_curve) {
        val_csv << vp.step << "," << vp.overall_accuracy << "," << vp.report.mean_accuracy
                << "," << vp.report.weighted_mean_accuracy;
        for (int p = 0; p < spec.n_phases; ++p) val_csv << "," << vp.report.per_phase_accuracy[p];
        val_csv << "\n";
    }

    json j;
    j["run"] = run_name(opt.out_dir);
    j["spec"] = json::parse(nn::graph_summary_json(graph))["spec"];
    j["parameter_count"] = nn::count_params(graph);
    j["steps_run"] = result.steps_run;
    j["stopped_early"] = result.stopped_early;
    j["best_val_accuracy"] = result.best_val_accuracy;
    j["class_weights"] = result.weights_used.w;
    j["train_samples"] = train_set.size();
    j["val_samples"] = val_set.size();

    RunManifest manifest("train-toy", opt.out_dir);
    manifest.set_seed(cfg.seed);
    manifest.set_threads(thread_count());
    manifest.add_input(opt.spec_path);
    if (!opt.train_config_path.empty()) manifest.add_input(opt.train_config_path);
    json cfgj = {{"learning_rate", cfg.learning_rate},
                 {"batch", cfg.batch},
                 {"max_steps", cfg.max_steps},
                 {"val_interval", cfg.val_interval},
                 {"patience", cfg.patience},
                 {"min_delta", cfg.min_delta},
                 {"weight_mode",
                  cfg.weight_mode == WeightMode::Weighted ? "weighted" : "unweighted"},
                 {"seed", cfg.seed}};
    manifest.set_config(cfgj.dump());

    fs::create_directories(opt.out_dir);
    const std::string model_path = (fs::path(opt.out_dir) / "model.bin").string();
    nn::save_model(graph, model_path);

    // Predicted segmentations for the first validation samples, alongside
    // their ground truth, ready for the physical-accuracy pipeline.
    const std::size_t n_pred = std::min<std::size_t>(3, val_set.size());
    for (std::size_t k = 0; k < n_pred; ++k) {
        const Dims d = data.dims[all.size() - n_val + k];
        std::vector<std::uint8_t> pred = nn::predict_labels(graph, val_set[k]);
        char stem[64];
        std::snprintf(stem, sizeof(stem), "pred_%04zu", k);
        const std::string pred_path =
            (fs::path(opt.out_dir) / (std::string(stem) + ".labels.raw")).string();
        const std::string truth_path =
            (fs::path(opt.out_dir) / (std::string(stem) + ".truth.labels.raw")).string();
        write_volume(LabelVolume(d, data.n_phases, std::move(pred), data.voxel_size_um),
                     pred_path);
        write_volume(LabelVolume(d, data.n_phases, val_set[k].labels, data.voxel_size_um),
                     truth_path);
        manifest.add_output(pred_path);
        manifest.add_output(truth_path);
    }
    const std::string loss_path = (fs::path(opt.out_dir) / "loss_curve.csv").string();
    const std::string val_path = (fs::path(opt.out_dir) / "val_reports.csv").string();
    const std::string json_path = (fs::path(opt.out_dir) / "training.json").string();
    atomic_write(loss_path, loss_csv.str());
    atomic_write(val_path, val_csv.str());
    atomic_write(json_path, j.dump(2) + "\n");
    for (const char* f : {"model.bin", "model.bin.json"})
        manifest.add_output((fs::path(opt.out_dir) / f).string());
    manifest.add_output(loss_path);
    manifest.add_output(val_path);
    manifest.add_output(json_path);
    manifest.write();
}

void report(const ReportOptions& opt) {
    if (opt.run_dirs.empty()) throw UsageError("report: no run directories given");

    struct Run {
        std::string name;
        json evaluate, topo, perm, drain;
        DrainageTrace trace;
        bool has_trace = false;
    };
    std::vector<Run> runs;
    for (const std::string& dir : opt.run_dirs) {
        Run r;
        r.name = run_name(dir);
        auto try_load = [&](const char* file, json& dst) {
            const fs::path p = fs::path(dir) / file;
            if (!fs::exists(p)) return;
            std::ifstream in(p);
            in >> dst;
        };
        try_load("phase_report.json", r.evaluate);
        try_load("topology.json", r.topo);
        try_load("permeability.json", r.perm);
        try_load("drainage.json", r.drain);
        const fs::path dcsv = fs::path(dir) / "drainage.csv";
        if (fs::exists(dcsv)) {
            std::ifstream in(dcsv);
            std::stringstream ss;
            ss << in.rdbuf();
            r.trace = parse_drainage_csv(ss.str());
            r.has_trace = true;
        }
        if (r.evaluate.empty() && r.topo.empty() && r.perm.empty() && !r.has_trace)
            throw ValidationError("report: run dir " + dir + " has no recognized outputs");
        runs.push_back(std::move(r));
    }

    RunManifest manifest("report", opt.out_dir);
    manifest.set_threads(thread_count());
    int written = 0;

    // Accuracy table, one row per run (Table-1 layout).
    {
        std::ostringstream csv;
        csv.precision(12);
        csv << "run,mean_accuracy,weighted_mean_accuracy,overall_accuracy";
        int n_phases = 0;
        for (const Run& r : runs)
            if (!r.evaluate.empty()) n_phases = r.evaluate.at("n_phases").get<int>();
        for (int p = 0; p < n_phases; ++p) csv << ",phase" << p;
        csv << "\n";
        bool any = false;
        for (const Run& r : runs) {
            if (r.evaluate.empty()) continue;
            any = true;
            csv << r.name << "," << r.evaluate.at("mean_accuracy").get<double>() << ","
                << r.evaluate.at("weighted_mean_accuracy").get<double>() << ","
                << r.evaluate.at("overall_accuracy").get<double>();
            for (const auto& acc : r.evaluate.at("per_phase_accuracy"))
                csv << "," << acc.get<double>();
            csv << "\n";
        }
        if (any) {
            const std::string p = (fs::path(opt.out_dir) / "report_accuracy.csv").string();
            atomic_write(p, csv.str());
            manifest.add_output(p);
            ++written;
        }
    }

    // Per-phase Euler numbers, one row per (run, phase) (Fig-7 layout).
    {
        std::ostringstream csv;
        csv << "run,phase,voxels,chi,beta0,beta1,beta2\n";
        bool any = false;
        for (const Run& r : runs) {
            if (r.topo.empty()) continue;
            any = true;
            for (const auto& row : r.topo.at("phases"))
                csv << r.name << "," << row.at("phase").get<int>() << ","
                    << row.at("voxels").get<std::int64_t>() << ","
                    << row.at("chi").get<std::int64_t>() << ","
                    << row.at("beta0").get<std::int64_t>() << ","
                    << row.at("beta1").get<std::int64_t>() << ","
                    << row.at("beta2").get<std::int64_t>() << "\n";
        }
        if (any) {
            const std::string p = (fs::path(opt.out_dir) / "report_topology.csv").string();
            atomic_write(p, csv.str());
            manifest.add_output(p);
            ++written;
        }
    }

    // Permeability bar chart data (Fig-8 layout).
    {
        std::ostringstream csv;
        csv.precision(12);
        csv << "run,k_lattice,k_um2,converged,non_percolating,steps\n";
        bool any = false;
        for (const Run& r : runs) {
            if (r.perm.empty()) continue;
            any = true;
            csv << r.name << "," << r.perm.at("k_lattice").get<double>() << ","
                << r.perm.at("k_um2").get<double>() << ","
                << (r.perm.at("converged").get<bool>() ? 1 : 0) << ","
                << (r.perm.at("non_percolating").get<bool>() ? 1 : 0) << ","
                << r.perm.at("steps").get<std::int64_t>() << "\n";
        }
        if (any) {
            const std::string p =
                (fs::path(opt.out_dir) / "report_permeability.csv").string();
            atomic_write(p, csv.str());
            manifest.add_output(p);
            ++written;
        }
    }

    // Drainage traces side by side (Fig-9/12 layout) plus pairwise
    // deviations against the first trace.
    {
        std::vector<const Run*> traced;
        for (const Run& r : runs)
            if (r.has_trace) traced.push_back(&r);
        if (!traced.empty()) {
            std::size_t longest = 0;
            for (const Run* r : traced)
                longest = std::max(longest, r->trace.samples.size());
            std::ostringstream csv;
            csv.precision(12);
            csv << "sample";
            for (const Run* r : traced)
                csv << "," << r->name << "_step," << r->name << "_saturation," << r->name
                    << "_chi";
            csv << "\n";
            for (std::size_t i = 0; i < longest; ++i) {
                csv << i;
                for (const Run* r : traced) {
                    if (i < r->trace.samples.size()) {
                        const auto& s = r->trace.samples[i];
                        csv << "," << s.step << "," << s.saturation << "," << s.nwp.chi;
                    } else {
                        csv << ",,,";
                    }
                }
                csv << "\n";
            }
            const std::string p = (fs::path(opt.out_dir) / "report_drainage.csv").string();
            atomic_write(p, csv.str());
            manifest.add_output(p);
            ++written;

            if (traced.size() >= 2) {
                std::ostringstream dev;
                dev.precision(12);
                dev << "run,euler_rel_min,euler_rel_max,euler_rel_mean,sat_abs_min,"
                       "sat_abs_max,sat_abs_mean\n";
                for (std::size_t i = 1; i < traced.size(); ++i) {
                    TraceDeviation d = compare_traces(traced[0]->trace, traced[i]->trace);
                    dev << traced[i]->name << "," << d.euler_min << "," << d.euler_max << ","
                        << d.euler_mean << "," << d.sat_min << "," << d.sat_max << ","
                        << d.sat_mean << "\n";
                }
                const std::string pd =
                    (fs::path(opt.out_dir) / "report_drainage_deviation.csv").string();
                atomic_write(pd, dev.str());
                manifest.add_output(pd);
                ++written;
            }
        }
    }

    if (written == 0) throw ValidationError("report: nothing to merge");
    manifest.write();
}

} // namespace rockseg::cmd
