#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rockseg/topology.hpp"
#include "rockseg/volume.hpp"

namespace rockseg {

enum class Axis : int { X = 0, Y = 1, Z = 2 };
enum class MirrorMode { Auto, On, Off };

// D3Q19 solver parameters, lattice units throughout.
struct LbmParams {
    double tau = 1.0;          // kinematic viscosity nu = (tau - 1/2)/3
    double body_force = 1e-6;  // uniform acceleration along `axis`
    Axis axis = Axis::X;
    // Mirror the geometry along the flow axis so periodic wrap sees a
    // symmetric domain. Auto mirrors only when an end face is fully solid.
    MirrorMode mirror = MirrorMode::Auto;
    bool bgk = false; // true: relax all moments at 1/tau (BGK-equivalent)
    double tol = 1e-6;
    int check_interval = 1000;
    std::int64_t max_steps = 1000000;
};

struct FlowField {
    Dims dims{}; // simulation domain (mirrored when mirroring applied)
    bool mirrored = false;
    std::vector<std::int32_t> cell_of_voxel; // -1 solid
    std::vector<double> rho, ux, uy, uz;     // per fluid cell
    std::array<double, 3> mean_velocity{};   // fluid average, 2-step averaged
    double mean_rho = 1.0;
    bool converged = false;
    bool non_percolating = false;
    std::int64_t steps = 0;
    // Carried for permeability evaluation.
    double nu = 0.0;
    double body_force = 0.0;
    Axis axis = Axis::X;
    double domain_length = 0.0; // original (unmirrored) length along axis
    double voxel_size_um = 1.0;
};

struct PermeabilityResult {
    double k_lattice = 0.0; // voxel^2
    double k_um2 = 0.0;     // k_lattice * voxel_size^2
    double nu = 0.0;
    double domain_length = 0.0;
    double grad_p = 0.0; // equivalent pressure gradient, mean_rho * g
    double mean_velocity = 0.0;
    bool converged = false;
    bool non_percolating = false;
    std::int64_t steps = 0;
};

// Single-phase MRT lattice over the pore phase of a label volume. Fluid
// populations live in two compacted buffers; streaming is pull-based with
// halfway bounce-back at solid faces and periodic wrap on all axes.
class SinglePhaseLattice {
public:
    SinglePhaseLattice(const LabelVolume& vol, int pore_phase, const LbmParams& params);

    void step();
    FlowField run_to_steady();

    // Pre-collision macroscopic state with the Guo half-force shift,
    // averaged over two consecutive steps to cancel the parity oscillation
    // of dead-end cells.
    FlowField measure();

    std::int64_t fluid_cells() const { return n_fluid_; }
    std::int64_t steps_taken() const { return steps_; }
    double total_mass() const;
    const LbmParams& params() const { return params_; }
    const Dims& sim_dims() const { return dims_; }
    bool pore_percolates() const { return percolates_; }

private:
    void collide();
    void stream();
    void macro_snapshot(std::vector<double>& rho, std::vector<double>& ux,
                        std::vector<double>& uy, std::vector<double>& uz) const;
    void check_finite(const std::vector<double>& rho) const;

    LbmParams params_;
    Dims dims_{};
    double voxel_size_um_ = 1.0;
    double domain_length_ = 0.0;
    bool mirrored_ = false;
    bool percolates_ = true;
    std::int64_t n_fluid_ = 0;
    std::int64_t steps_ = 0;
    std::vector<std::int32_t> cell_of_voxel_;
    std::vector<std::int64_t> voxel_of_cell_;
    std::vector<std::int32_t> neighbor_; // n_fluid*19, -1 = solid
    std::vector<double> f_[2];
    int cur_ = 0;
    std::array<double, 19> s_{}; // relaxation rates
};

PermeabilityResult permeability(const FlowField& field);

// True when the pore phase has a 26-connected path between the two faces
// perpendicular to `axis`.
bool percolates(const BinaryMask& pore, Axis axis);

} // namespace rockseg
