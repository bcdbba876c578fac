#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "rockseg/lbm.hpp"
#include "rockseg/topology.hpp"
#include "rockseg/volume.hpp"

namespace rockseg {

// Contact angle per mineral label, degrees, measured through the wetting
// phase. Every non-pore label present in the volume must be assigned.
struct WettingMap {
    std::map<int, double> angle_deg;
};

// Wall-affinity calibration: equilibrium through-WP contact angle measured
// for a grid of fictitious wall color values. Monotone in affinity.
struct AffinityTable {
    std::vector<double> affinity; // ascending, in [-1, 1]
    std::vector<double> angle_deg;

    double affinity_for_angle(double theta_deg) const;
    double angle_for_affinity(double alpha) const;
};

// Table measured with the static-droplet procedure in
// tools/wetting_calibration.cpp at the default fluid parameters.
const AffinityTable& default_affinity_table();

struct TwoFluidParams {
    double tau_r = 1.0; // red = non-wetting (injected) phase
    double tau_b = 1.0; // blue = wetting phase
    double density_ratio = 1.0; // rho_r / rho_b at equal pressure
    double perturbation_A = 0.02; // surface tension amplitude
    double beta_recolor = 0.7;    // interface sharpness, (0, 1]
    double body_force = 0.0;      // along `axis`
    Axis axis = Axis::X;
    double gamma = 0.0; // fitted surface tension; required for Ca control
};

// Color-gradient D3Q19 lattice: single collision on the colour-blind total
// with a phase-interpolated relaxation rate and per-colour rest fractions,
// Reis-Phillips-style perturbation along the colour gradient, and
// Latva-Kokko / d'Ortona recolouring. Walls bounce back both colours and
// carry a fictitious colour value per mineral that biases the gradient,
// which is what sets the contact angle.
class TwoFluidLattice {
public:
    TwoFluidLattice(const LabelVolume& vol, int pore_phase, const WettingMap& wetting,
                    const TwoFluidParams& params,
                    const AffinityTable& table = default_affinity_table());

    // Uniform wall colour regardless of mineral (binary fixtures and tests).
    TwoFluidLattice(const LabelVolume& vol, int pore_phase, double uniform_affinity,
                    const TwoFluidParams& params);

    void step();

    // Assigns initial colour per fluid voxel: red_fraction(x,y,z) in [0,1].
    void initialize_colors(const std::function<double(int, int, int)>& red_fraction);

    // Converts everything in the inlet slab (axis coordinate < width) to
    // red; returns the blue mass converted. Used by the drainage feed.
    double feed_inlet(int width);

    // Converts red back to blue in the outlet guard (last `width` layers),
    // modelling the WP-filled outlet reservoir; stops reservoir red from
    // seeping backwards through the periodic wrap. Returns converted mass.
    double absorb_outlet(int width);

    std::int64_t fluid_cells() const { return n_fluid_; }
    std::int64_t steps_taken() const { return steps_; }
    const Dims& dims() const { return dims_; }
    const TwoFluidParams& params() const { return params_; }
    void set_body_force(double g) { params_.body_force = g; }

    double red_mass() const;
    double blue_mass() const;
    double phi(std::int64_t cell) const { return phi_[cell]; }
    double rho(std::int64_t cell) const;
    std::int64_t cell_at(int x, int y, int z) const {
        return cell_of_voxel_[linear_index(dims_, x, y, z)];
    }

    // Voxels where red holds the majority (phi > 0).
    BinaryMask red_mask() const;
    // Red volume fraction of the pore space in [0, 1].
    double red_saturation() const;
    // Superficial (whole-domain) red flux along the axis.
    double red_darcy_velocity() const;
    // Mean velocity magnitude over fluid cells (for equilibration checks).
    double mean_speed() const;

    void check_finite() const;

private:
    void build(const LabelVolume& vol, int pore_phase,
               const std::function<double(int)>& wall_affinity_of_label);
    void macro(std::int64_t cell, double& rho_r, double& rho_b, double& jx, double& jy,
               double& jz) const;

    TwoFluidParams params_;
    Dims dims_{};
    std::int64_t n_fluid_ = 0;
    std::int64_t steps_ = 0;
    std::vector<std::int32_t> cell_of_voxel_;
    std::vector<std::int64_t> voxel_of_cell_;
    // n_fluid*19; solid neighbours encoded as -(1 + mineral label)
    std::vector<std::int32_t> neighbor_;
    std::vector<double> wall_affinity_; // per mineral label
    std::vector<std::int64_t> slab_cells_;
    int slab_width_ = -1;
    std::vector<std::int64_t> guard_cells_;
    int guard_width_ = -1;
    std::vector<double> fr_[2], fb_[2];
    std::vector<double> phi_; // colour fraction synced to current buffers
    int cur_ = 0;
};

struct DrainageSample {
    std::int64_t step = 0;
    double saturation = 0.0;
    TopologyReport nwp;
    bool breakthrough = false;
    double ca_measured = 0.0;
    double body_force = 0.0;
};

struct DrainageTrace {
    std::vector<DrainageSample> samples;
    bool reached_breakthrough = false;
    std::int64_t steps = 0;
};

struct DrainageParams {
    double ca_target = 5e-5;
    std::int64_t sample_interval = 2000;
    std::int64_t max_steps = 400000;
    int inlet_width = 3;
    int outlet_guard = 1;
    // Feedback control of the body force toward the Ca target.
    std::int64_t control_interval = 500;
    double g_init = 1e-5;
    double g_min = 1e-8;
    double g_max = 5e-3;
};

// Primary drainage: red fed at the inlet slab, body force recalibrated
// toward the Ca target, NWP topology sampled every sample_interval steps,
// terminating at breakthrough (red 26-connected inlet face to outlet face)
// or max_steps.
DrainageTrace run_drainage(TwoFluidLattice& lat, const DrainageParams& params);

struct TraceDeviation {
    std::vector<std::int64_t> steps;
    std::vector<double> euler_rel;  // |chi_a-chi_b| / max(|chi_a|, 1)
    std::vector<double> saturation_abs;
    double euler_min = 0, euler_max = 0, euler_mean = 0;
    double sat_min = 0, sat_max = 0, sat_mean = 0;
};

TraceDeviation compare_traces(const DrainageTrace& a, const DrainageTrace& b);

std::string drainage_csv(const DrainageTrace& trace);
DrainageTrace parse_drainage_csv(const std::string& csv);

// ---- Calibration fixtures (shipped procedure; also used by tests) ----

// Periodic box with a centred red sphere; returns the measured Laplace
// pressure step (rho_in - rho_out) * cs2 after `steps`.
double laplace_pressure_step(int box, double radius, const TwoFluidParams& params,
                             std::int64_t steps);

// Red droplet on a flat wall with the given affinity; returns the measured
// through-WP contact angle in degrees.
double droplet_contact_angle(double affinity, const TwoFluidParams& params, int nx, int ny,
                             int nz, double radius, std::int64_t steps);

} // namespace rockseg
