#include "rockseg/lbm_multiphase.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rockseg/d3q19.hpp"
#include "rockseg/parallel.hpp"

namespace rockseg {

using namespace d3q19;

namespace {

// Perturbation constants; sum_q B[q] = 1/3 = sum_q w[q] (xi.n)^2, so the
// surface tension step conserves mass exactly.
constexpr double B0 = -1.0 / 3.0;
constexpr double B1 = 1.0 / 18.0;
constexpr double B2 = 1.0 / 36.0;
constexpr std::array<double, Q> Bq = {B0, B1, B1, B1, B1, B1, B1, B2, B2, B2,
                                      B2, B2, B2, B2, B2, B2, B2, B2, B2};

// 1/|xi_q| (0 for the rest direction).
const std::array<double, Q> inv_cnorm = [] {
    std::array<double, Q> v{};
    for (int q = 1; q < Q; ++q) {
        const double n2 = c[q][0] * c[q][0] + c[q][1] * c[q][1] + c[q][2] * c[q][2];
        v[q] = 1.0 / std::sqrt(n2);
    }
    return v;
}();

// Direction components as doubles so the per-q loops vectorize.
struct DirTables {
    alignas(64) double cx[Q], cy[Q], cz[Q], wq[Q], bq[Q], winv[Q];
};
const DirTables dir = [] {
    DirTables t{};
    for (int q = 0; q < Q; ++q) {
        t.cx[q] = c[q][0];
        t.cy[q] = c[q][1];
        t.cz[q] = c[q][2];
        t.wq[q] = w[q];
        t.bq[q] = Bq[q];
        t.winv[q] = w[q] * inv_cnorm[q];
    }
    return t;
}();

// Per-colour rest fraction for the density-ratio parameterization; the
// colour's sound speed is cs_k^2 = (1 - alpha_k)/2.
struct RestFractions {
    double c0, cf, cd; // rest, face, diagonal coefficients
};

RestFractions rest_fractions(double alpha) {
    return {alpha, (1.0 - alpha) / 12.0, (1.0 - alpha) / 24.0};
}

double rest_coeff(const RestFractions& r, int q) {
    if (q == 0) return r.c0;
    const int n2 = c[q][0] * c[q][0] + c[q][1] * c[q][1] + c[q][2] * c[q][2];
    return n2 == 1 ? r.cf : r.cd;
}

} // namespace

double AffinityTable::affinity_for_angle(double theta_deg) const {
    // Table is monotone increasing in both columns; inverse by linear
    // interpolation, clamped at the ends.
    if (angle_deg.empty()) throw ValidationError("affinity table is empty");
    if (theta_deg <= angle_deg.front()) return affinity.front();
    if (theta_deg >= angle_deg.back()) return affinity.back();
    for (std::size_t i = 1; i < angle_deg.size(); ++i) {
        if (theta_deg <= angle_deg[i]) {
            const double t =
                (theta_deg - angle_deg[i - 1]) / (angle_deg[i] - angle_deg[i - 1]);
            return affinity[i - 1] + t * (affinity[i] - affinity[i - 1]);
        }
    }
    return affinity.back();
}

double AffinityTable::angle_for_affinity(double alpha) const {
    if (affinity.empty()) throw ValidationError("affinity table is empty");
    if (alpha <= affinity.front()) return angle_deg.front();
    if (alpha >= affinity.back()) return angle_deg.back();
    for (std::size_t i = 1; i < affinity.size(); ++i) {
        if (alpha <= affinity[i]) {
            const double t = (alpha - affinity[i - 1]) / (affinity[i] - affinity[i - 1]);
            return angle_deg[i - 1] + t * (angle_deg[i] - angle_deg[i - 1]);
        }
    }
    return angle_deg.back();
}

const AffinityTable& default_affinity_table() {
    // Measured by `wetting_calibration angles 0.1 1.0 1.0 0.7` (red droplet
    // radius 10 on a flat wall, 44x44x30 domain, 8000 steps). Beyond ~131
    // degrees the sessile red droplet films out and the probe degenerates;
    // requested angles outside the measured range clamp to the end points.
    static const AffinityTable table = [] {
        AffinityTable t;
        t.affinity = {-0.98, -0.75, -0.50, -0.25, 0.0, 0.25, 0.50};
        t.angle_deg = {0.0, 34.20, 59.66, 78.08, 95.10, 112.43, 130.98};
        return t;
    }();
    return table;
}

TwoFluidLattice::TwoFluidLattice(const LabelVolume& vol, int pore_phase,
                                 const WettingMap& wetting, const TwoFluidParams& params,
                                 const AffinityTable& table)
    : params_(params) {
    // Every non-pore label present in the volume needs a contact angle.
    std::vector<std::uint8_t> used(vol.n_phases(), 0);
    for (std::uint8_t l : vol.labels()) used[l] = 1;
    std::vector<double> affinity_of(vol.n_phases(), 0.0);
    for (int l = 0; l < vol.n_phases(); ++l) {
        if (l == pore_phase || !used[l]) continue;
        auto it = wetting.angle_deg.find(l);
        if (it == wetting.angle_deg.end())
            throw ValidationError("wetting map: mineral label " + std::to_string(l) +
                                  " present in volume but unassigned");
        if (!(it->second > 0.0 && it->second < 180.0))
            throw ValidationError("wetting map: contact angle must be in (0, 180) degrees");
        affinity_of[l] = table.affinity_for_angle(it->second);
    }
    build(vol, pore_phase, [&](int label) { return affinity_of[label]; });
}

TwoFluidLattice::TwoFluidLattice(const LabelVolume& vol, int pore_phase,
                                 double uniform_affinity, const TwoFluidParams& params)
    : params_(params) {
    build(vol, pore_phase, [&](int) { return uniform_affinity; });
}

void TwoFluidLattice::build(const LabelVolume& vol, int pore_phase,
                            const std::function<double(int)>& wall_affinity_of_label) {
    if (pore_phase < 0 || pore_phase >= vol.n_phases())
        throw ValidationError("two-fluid lbm: pore phase out of range");
    if (params_.tau_r <= 0.5 || params_.tau_b <= 0.5)
        throw ValidationError("two-fluid lbm: tau must exceed 0.5");
    if (params_.beta_recolor <= 0.0 || params_.beta_recolor > 1.0)
        throw ValidationError("two-fluid lbm: recolor beta must be in (0, 1]");
    if (params_.density_ratio < 0.4 || params_.density_ratio > 2.5)
        throw ValidationError("two-fluid lbm: density ratio supported in [0.4, 2.5]");

    const Dims d = vol.dims();
    dims_ = d;
    cell_of_voxel_.assign(static_cast<std::size_t>(d.count()), -1);
    for (std::int64_t i = 0; i < d.count(); ++i)
        if (vol.at(i) == pore_phase) {
            cell_of_voxel_[i] = static_cast<std::int32_t>(n_fluid_);
            voxel_of_cell_.push_back(i);
            ++n_fluid_;
        }
    if (n_fluid_ == 0) throw ValidationError("two-fluid lbm: pore phase is empty");

    wall_affinity_.assign(vol.n_phases(), 0.0);
    for (int l = 0; l < vol.n_phases(); ++l)
        if (l != pore_phase) wall_affinity_[l] = wall_affinity_of_label(l);
    neighbor_.resize(n_fluid_ * Q);
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell) {
        const std::int64_t i = voxel_of_cell_[cell];
        const int x = static_cast<int>(i % d.nx);
        const int y = static_cast<int>((i / d.nx) % d.ny);
        const int z = static_cast<int>(i / (static_cast<std::int64_t>(d.nx) * d.ny));
        for (int q = 0; q < Q; ++q) {
            const int nx = (x + c[q][0] + d.nx) % d.nx;
            const int ny = (y + c[q][1] + d.ny) % d.ny;
            const int nz = (z + c[q][2] + d.nz) % d.nz;
            const std::int64_t j = linear_index(d, nx, ny, nz);
            neighbor_[cell * Q + q] =
                cell_of_voxel_[j] >= 0 ? cell_of_voxel_[j]
                                       : -static_cast<std::int32_t>(1 + vol.at(j));
        }
    }

    for (auto& buf : fr_) buf.assign(static_cast<std::size_t>(n_fluid_) * Q, 0.0);
    for (auto& buf : fb_) buf.assign(static_cast<std::size_t>(n_fluid_) * Q, 0.0);
    phi_.assign(n_fluid_, -1.0);
    initialize_colors([](int, int, int) { return 0.0; });
}

void TwoFluidLattice::initialize_colors(
    const std::function<double(int, int, int)>& red_fraction) {
    const RestFractions rr = rest_fractions(1.0 - (1.0 - 1.0 / 3.0) / params_.density_ratio);
    const RestFractions rb = rest_fractions(1.0 / 3.0);
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell) {
        const std::int64_t i = voxel_of_cell_[cell];
        const int x = static_cast<int>(i % dims_.nx);
        const int y = static_cast<int>((i / dims_.nx) % dims_.ny);
        const int z = static_cast<int>(i / (static_cast<std::int64_t>(dims_.nx) * dims_.ny));
        double cr = red_fraction(x, y, z);
        cr = std::clamp(cr, 0.0, 1.0);
        for (int q = 0; q < Q; ++q) {
            fr_[cur_][cell * Q + q] = cr * rest_coeff(rr, q);
            fb_[cur_][cell * Q + q] = (1.0 - cr) * rest_coeff(rb, q);
        }
        phi_[cell] = 2.0 * cr - 1.0;
    }
}

void TwoFluidLattice::macro(std::int64_t cell, double& rho_r, double& rho_b, double& jx,
                            double& jy, double& jz) const {
    const double* fr = fr_[cur_].data() + cell * Q;
    const double* fb = fb_[cur_].data() + cell * Q;
    rho_r = rho_b = jx = jy = jz = 0;
    for (int q = 0; q < Q; ++q) {
        const double frq = fr[q];
        const double fbq = fb[q];
        const double tot = frq + fbq;
        rho_r += frq;
        rho_b += fbq;
        jx += c[q][0] * tot;
        jy += c[q][1] * tot;
        jz += c[q][2] * tot;
    }
}

void TwoFluidLattice::step() {
    const double alpha_r = 1.0 - (1.0 - 1.0 / 3.0) / params_.density_ratio;
    const RestFractions rr = rest_fractions(alpha_r);
    const RestFractions rb = rest_fractions(1.0 / 3.0);
    double restr[Q], restb[Q];
    for (int q = 0; q < Q; ++q) {
        restr[q] = rest_coeff(rr, q);
        restb[q] = rest_coeff(rb, q);
    }
    const double nu_r = (params_.tau_r - 0.5) / 3.0;
    const double nu_b = (params_.tau_b - 0.5) / 3.0;
    const double A = params_.perturbation_A;
    const double beta = params_.beta_recolor;
    double gvec[3] = {0, 0, 0};
    gvec[static_cast<int>(params_.axis)] = params_.body_force;
    const double gx = gvec[0], gy = gvec[1], gz = gvec[2];

    const std::vector<double>& fr_src = fr_[cur_];
    const std::vector<double>& fb_src = fb_[cur_];
    std::vector<double>& fr_dst = fr_[1 - cur_];
    std::vector<double>& fb_dst = fb_[1 - cur_];
    const std::int32_t* nb = neighbor_.data();
    const double* wallaff = wall_affinity_.data();
    const double* phi = phi_.data();

    parallel_for(0, n_fluid_, [&](std::int64_t lo, std::int64_t hi) {
        alignas(64) double ftot[Q], fr_loc[Q], fb_loc[Q], pnb[Q], out_r[Q], out_b[Q];
        for (std::int64_t cell = lo; cell < hi; ++cell) {
            const double* fr = fr_src.data() + cell * Q;
            const double* fb = fb_src.data() + cell * Q;
            const std::int32_t* nbc = nb + cell * Q;

            double rho_r = 0, rho_b = 0, jx = 0, jy = 0, jz = 0;
            for (int q = 0; q < Q; ++q) {
                fr_loc[q] = fr[q];
                fb_loc[q] = fb[q];
                ftot[q] = fr_loc[q] + fb_loc[q];
            }
            for (int q = 0; q < Q; ++q) {
                rho_r += fr_loc[q];
                rho_b += fb_loc[q];
                jx += dir.cx[q] * ftot[q];
                jy += dir.cy[q] * ftot[q];
                jz += dir.cz[q] * ftot[q];
            }
            const double rho = rho_r + rho_b;
            const double inv_rho = 1.0 / rho;
            const double ux = (jx + 0.5 * gx) * inv_rho;
            const double uy = (jy + 0.5 * gy) * inv_rho;
            const double uz = (jz + 0.5 * gz) * inv_rho;

            // Colour gradient from the phase field; solid neighbours
            // contribute their fictitious wall colour.
            pnb[0] = 0.0;
            for (int q = 1; q < Q; ++q) {
                const std::int32_t n = nbc[q];
                pnb[q] = (n >= 0) ? phi[n] : wallaff[-n - 1];
            }
            double Gx = 0, Gy = 0, Gz = 0;
            for (int q = 1; q < Q; ++q) {
                const double wq3 = 3.0 * dir.wq[q] * pnb[q];
                Gx += wq3 * dir.cx[q];
                Gy += wq3 * dir.cy[q];
                Gz += wq3 * dir.cz[q];
            }
            const double Gn2 = Gx * Gx + Gy * Gy + Gz * Gz;
            const bool has_interface = Gn2 > 1e-28;

            // Phase-interpolated viscosity.
            const double ph = phi[cell];
            const double nu = 0.5 * ((1.0 + ph) * nu_r + (1.0 - ph) * nu_b);
            const double omega = 1.0 / (3.0 * nu + 0.5);
            const double fgain = 1.0 - 0.5 * omega;

            const double usq = 1.5 * (ux * ux + uy * uy + uz * uz);
            const double ug = ux * gx + uy * gy + uz * gz;

            if (!has_interface && (rho_r == 0.0 || rho_b == 0.0)) {
                // Pure bulk cell away from any interface: collision only,
                // all mass keeps its colour.
                const bool red = rho_b == 0.0;
                for (int q = 0; q < Q; ++q) {
                    const double cu = dir.cx[q] * ux + dir.cy[q] * uy + dir.cz[q] * uz;
                    const double cg = dir.cx[q] * gx + dir.cy[q] * gy + dir.cz[q] * gz;
                    const double feq = rho_r * restr[q] + rho_b * restb[q] +
                                       rho * dir.wq[q] * (3.0 * cu + 4.5 * cu * cu - usq);
                    const double guo = dir.wq[q] * (3.0 * (cg - ug) + 9.0 * cu * cg);
                    const double f = ftot[q] - omega * (ftot[q] - feq) + fgain * guo;
                    out_r[q] = red ? f : 0.0;
                    out_b[q] = red ? 0.0 : f;
                }
            } else {
                const double Gn = std::sqrt(Gn2);
                const double pert_amp = has_interface ? 0.5 * A * Gn : 0.0;
                const double inv_Gn = has_interface ? 1.0 / Gn : 0.0;
                const double kr = rho_r * inv_rho;
                const double krb = beta * rho_r * rho_b * inv_rho * inv_Gn;
                for (int q = 0; q < Q; ++q) {
                    const double cu = dir.cx[q] * ux + dir.cy[q] * uy + dir.cz[q] * uz;
                    const double cG = dir.cx[q] * Gx + dir.cy[q] * Gy + dir.cz[q] * Gz;
                    const double cg = dir.cx[q] * gx + dir.cy[q] * gy + dir.cz[q] * gz;
                    const double feq = rho_r * restr[q] + rho_b * restb[q] +
                                       rho * dir.wq[q] * (3.0 * cu + 4.5 * cu * cu - usq);
                    const double guo = dir.wq[q] * (3.0 * (cg - ug) + 9.0 * cu * cg);
                    const double cn = cG * inv_Gn;
                    const double f = ftot[q] - omega * (ftot[q] - feq) + fgain * guo +
                                     pert_amp * (dir.wq[q] * cn * cn - dir.bq[q]);
                    const double frq = kr * f + krb * dir.winv[q] * cG;
                    out_r[q] = frq;
                    out_b[q] = f - frq;
                }
            }

            // Push-stream with halfway bounce-back.
            for (int q = 0; q < Q; ++q) {
                const std::int32_t dest = nbc[q];
                const std::int64_t slot =
                    (dest >= 0) ? dest * Q + q : cell * Q + opposite[q];
                fr_dst[slot] = out_r[q];
                fb_dst[slot] = out_b[q];
            }
        }
    });

    cur_ = 1 - cur_;

    std::vector<double>& fr_new = fr_[cur_];
    std::vector<double>& fb_new = fb_[cur_];
    std::vector<double>& ph = phi_;
    parallel_for(0, n_fluid_, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t cell = lo; cell < hi; ++cell) {
            const double* fr = fr_new.data() + cell * Q;
            const double* fb = fb_new.data() + cell * Q;
            double rr = 0, rb = 0;
            for (int q = 0; q < Q; ++q) {
                rr += fr[q];
                rb += fb[q];
            }
            ph[cell] = (rr - rb) / (rr + rb);
        }
    });
    ++steps_;
}

double TwoFluidLattice::feed_inlet(int width) {
    if (width != slab_width_) {
        slab_width_ = width;
        slab_cells_.clear();
        const int a = static_cast<int>(params_.axis);
        for (std::int64_t cell = 0; cell < n_fluid_; ++cell) {
            const std::int64_t i = voxel_of_cell_[cell];
            const int p[3] = {
                static_cast<int>(i % dims_.nx),
                static_cast<int>((i / dims_.nx) % dims_.ny),
                static_cast<int>(i / (static_cast<std::int64_t>(dims_.nx) * dims_.ny))};
            if (p[a] < width) slab_cells_.push_back(cell);
        }
    }
    double converted = 0;
    std::vector<double>& fr = fr_[cur_];
    std::vector<double>& fb = fb_[cur_];
    for (std::int64_t cell : slab_cells_) {
        for (int q = 0; q < Q; ++q) {
            converted += fb[cell * Q + q];
            fr[cell * Q + q] += fb[cell * Q + q];
            fb[cell * Q + q] = 0.0;
        }
        phi_[cell] = 1.0;
    }
    return converted;
}

double TwoFluidLattice::absorb_outlet(int width) {
    if (width != guard_width_) {
        guard_width_ = width;
        guard_cells_.clear();
        const int a = static_cast<int>(params_.axis);
        const int n[3] = {dims_.nx, dims_.ny, dims_.nz};
        for (std::int64_t cell = 0; cell < n_fluid_; ++cell) {
            const std::int64_t i = voxel_of_cell_[cell];
            const int p[3] = {
                static_cast<int>(i % dims_.nx),
                static_cast<int>((i / dims_.nx) % dims_.ny),
                static_cast<int>(i / (static_cast<std::int64_t>(dims_.nx) * dims_.ny))};
            if (p[a] >= n[a] - width) guard_cells_.push_back(cell);
        }
    }
    double converted = 0;
    std::vector<double>& fr = fr_[cur_];
    std::vector<double>& fb = fb_[cur_];
    for (std::int64_t cell : guard_cells_) {
        for (int q = 0; q < Q; ++q) {
            converted += fr[cell * Q + q];
            fb[cell * Q + q] += fr[cell * Q + q];
            fr[cell * Q + q] = 0.0;
        }
        phi_[cell] = -1.0;
    }
    return converted;
}

double TwoFluidLattice::red_mass() const {
    double m = 0;
    for (double v : fr_[cur_]) m += v;
    return m;
}

double TwoFluidLattice::blue_mass() const {
    double m = 0;
    for (double v : fb_[cur_]) m += v;
    return m;
}

double TwoFluidLattice::rho(std::int64_t cell) const {
    double rr, rb, jx, jy, jz;
    macro(cell, rr, rb, jx, jy, jz);
    return rr + rb;
}

BinaryMask TwoFluidLattice::red_mask() const {
    BinaryMask m;
    m.dims = dims_;
    m.bits.assign(static_cast<std::size_t>(dims_.count()), 0);
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell)
        if (phi_[cell] > 0.0) m.bits[voxel_of_cell_[cell]] = 1;
    return m;
}

double TwoFluidLattice::red_saturation() const {
    double s = 0;
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell) s += 0.5 * (phi_[cell] + 1.0);
    return s / static_cast<double>(n_fluid_);
}

double TwoFluidLattice::red_darcy_velocity() const {
    // Momentum-based flux: the Guo half-force shift is excluded on purpose.
    // Near capillary pinning the real flux is tiny and a g/2 term would make
    // the Ca controller measure its own forcing.
    const int a = static_cast<int>(params_.axis);
    double flux = 0;
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell) {
        double rr, rb, jx, jy, jz;
        macro(cell, rr, rb, jx, jy, jz);
        const double rho = rr + rb;
        const double j[3] = {jx, jy, jz};
        flux += (rr / rho) * j[a] / rho;
    }
    return flux / static_cast<double>(dims_.count());
}

double TwoFluidLattice::mean_speed() const {
    double s = 0;
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell) {
        double rr, rb, jx, jy, jz;
        macro(cell, rr, rb, jx, jy, jz);
        const double rho = rr + rb;
        s += std::sqrt(jx * jx + jy * jy + jz * jz) / rho;
    }
    return s / static_cast<double>(n_fluid_);
}

void TwoFluidLattice::check_finite() const {
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell)
        if (!std::isfinite(phi_[cell])) {
            const std::int64_t i = voxel_of_cell_[cell];
            throw DivergenceError("two-fluid lbm: non-finite state at step " +
                                  std::to_string(steps_) + ", voxel linear index " +
                                  std::to_string(i));
        }
}

DrainageTrace run_drainage(TwoFluidLattice& lat, const DrainageParams& params) {
    if (params.ca_target <= 0)
        throw ValidationError("drainage: Ca target must be positive");
    if (lat.params().gamma <= 0)
        throw ValidationError("drainage: surface tension gamma must be positive");
    if (lat.params().perturbation_A <= 0)
        throw ValidationError("drainage: perturbation amplitude must be positive");

    const double mu_nw = (lat.params().tau_r - 0.5) / 3.0;
    const Axis axis = lat.params().axis;
    // Darcy velocity of the injected phase by volume balance: the rate of
    // change of red volume per unit total cross-section,
    //   v_d = dS/dt * N_pore * L / V_domain.
    const double sat_to_darcy = static_cast<double>(lat.fluid_cells()) /
                                static_cast<double>(lat.dims().count()) *
                                [&] {
                                    const int n[3] = {lat.dims().nx, lat.dims().ny,
                                                      lat.dims().nz};
                                    return static_cast<double>(n[static_cast<int>(axis)]);
                                }();

    const int axis_extent = [&] {
        const int n[3] = {lat.dims().nx, lat.dims().ny, lat.dims().nz};
        return n[static_cast<int>(axis)];
    }();
    if (params.inlet_width + params.outlet_guard + 2 > axis_extent)
        throw ValidationError("drainage: inlet slab and outlet guard leave no free domain");

    DrainageTrace trace;
    lat.set_body_force(std::clamp(params.g_init, params.g_min, params.g_max));
    lat.feed_inlet(params.inlet_width);
    lat.absorb_outlet(params.outlet_guard);

    // Breakthrough: red 26-connected from the inlet face to the last free
    // layer before the absorbing outlet guard.
    auto breakthrough_now = [&](const BinaryMask& red) {
        BinaryMask free_region;
        const Dims d = red.dims;
        const int a = static_cast<int>(axis);
        int n[3] = {d.nx, d.ny, d.nz};
        n[a] -= params.outlet_guard;
        free_region.dims = Dims{n[0], n[1], n[2]};
        free_region.bits.assign(static_cast<std::size_t>(free_region.dims.count()), 0);
        for (int z = 0; z < free_region.dims.nz; ++z)
            for (int y = 0; y < free_region.dims.ny; ++y)
                for (int x = 0; x < free_region.dims.nx; ++x)
                    free_region.bits[linear_index(free_region.dims, x, y, z)] =
                        red.bits[linear_index(d, x, y, z)];
        return percolates(free_region, axis);
    };

    double sample_prev_sat = -1.0;
    std::int64_t sample_prev_step = 0;
    auto take_sample = [&](bool check_breakthrough) {
        lat.check_finite();
        DrainageSample s;
        s.step = lat.steps_taken();
        s.saturation = lat.red_saturation();
        BinaryMask red = lat.red_mask();
        s.nwp = euler_number(red);
        s.breakthrough = check_breakthrough && breakthrough_now(red);
        if (sample_prev_sat >= 0.0 && s.step > sample_prev_step) {
            const double vd = (s.saturation - sample_prev_sat) /
                              static_cast<double>(s.step - sample_prev_step) * sat_to_darcy;
            s.ca_measured = mu_nw * vd / lat.params().gamma;
        }
        sample_prev_sat = s.saturation;
        sample_prev_step = s.step;
        s.body_force = lat.params().body_force;
        trace.samples.push_back(s);
        return s.breakthrough;
    };

    take_sample(false);
    std::int64_t next_control = params.control_interval;
    std::int64_t next_sample = params.sample_interval;
    double ctrl_prev_sat = lat.red_saturation();
    std::int64_t ctrl_prev_step = lat.steps_taken();
    while (lat.steps_taken() < params.max_steps) {
        lat.step();
        lat.feed_inlet(params.inlet_width);
        lat.absorb_outlet(params.outlet_guard);
        if (lat.steps_taken() >= next_control) {
            next_control += params.control_interval;
            const double sat = lat.red_saturation();
            const double vd = (sat - ctrl_prev_sat) /
                              static_cast<double>(lat.steps_taken() - ctrl_prev_step) *
                              sat_to_darcy;
            ctrl_prev_sat = sat;
            ctrl_prev_step = lat.steps_taken();
            const double ca = mu_nw * vd / lat.params().gamma;
            double factor = 1.3;
            if (ca > 0)
                factor = std::clamp(std::sqrt(params.ca_target / ca), 0.7, 1.3);
            lat.set_body_force(std::clamp(lat.params().body_force * factor, params.g_min,
                                          params.g_max));
        }
        if (lat.steps_taken() >= next_sample) {
            next_sample += params.sample_interval;
            if (take_sample(true)) {
                trace.reached_breakthrough = true;
                break;
            }
        }
    }
    trace.steps = lat.steps_taken();
    return trace;
}

TraceDeviation compare_traces(const DrainageTrace& a, const DrainageTrace& b) {
    if (a.samples.empty() || b.samples.empty())
        throw ValidationError("compare_traces: empty trace");
    const std::size_t n = std::min(a.samples.size(), b.samples.size());
    TraceDeviation d;
    d.euler_min = d.sat_min = 1e300;
    d.euler_max = d.sat_max = -1e300;
    double esum = 0, ssum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& sa = a.samples[i];
        const auto& sb = b.samples[i];
        const double er = std::abs(static_cast<double>(sa.nwp.chi - sb.nwp.chi)) /
                          std::max<double>(std::abs(static_cast<double>(sa.nwp.chi)), 1.0);
        const double sr = std::abs(sa.saturation - sb.saturation);
        d.steps.push_back(sa.step);
        d.euler_rel.push_back(er);
        d.saturation_abs.push_back(sr);
        d.euler_min = std::min(d.euler_min, er);
        d.euler_max = std::max(d.euler_max, er);
        d.sat_min = std::min(d.sat_min, sr);
        d.sat_max = std::max(d.sat_max, sr);
        esum += er;
        ssum += sr;
    }
    d.euler_mean = esum / static_cast<double>(n);
    d.sat_mean = ssum / static_cast<double>(n);
    return d;
}

std::string drainage_csv(const DrainageTrace& trace) {
    std::ostringstream os;
    os.precision(12);
    os << "step,saturation,chi,beta0,beta1,beta2,breakthrough\n";
    for (const auto& s : trace.samples)
        os << s.step << "," << s.saturation << "," << s.nwp.chi << "," << s.nwp.beta0 << ","
           << s.nwp.beta1 << "," << s.nwp.beta2 << "," << (s.breakthrough ? 1 : 0) << "\n";
    return os.str();
}

DrainageTrace parse_drainage_csv(const std::string& csv) {
    DrainageTrace t;
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line)) throw ValidationError("drainage csv: empty");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        DrainageSample s;
        std::istringstream ls(line);
        std::string tok;
        auto next = [&]() {
            if (!std::getline(ls, tok, ','))
                throw ValidationError("drainage csv: short row");
            return tok;
        };
        s.step = std::stoll(next());
        s.saturation = std::stod(next());
        s.nwp.chi = std::stoll(next());
        s.nwp.beta0 = std::stoll(next());
        s.nwp.beta1 = std::stoll(next());
        s.nwp.beta2 = std::stoll(next());
        s.breakthrough = std::stoi(next()) != 0;
        t.samples.push_back(s);
    }
    if (!t.samples.empty()) {
        t.reached_breakthrough = t.samples.back().breakthrough;
        t.steps = t.samples.back().step;
    }
    return t;
}

// ---- calibration fixtures ----

namespace {

LabelVolume all_pore_box(int n) {
    return LabelVolume(Dims{n, n, n}, 2,
                       std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n * n, 0));
}

} // namespace

double laplace_pressure_step(int box, double radius, const TwoFluidParams& params,
                             std::int64_t steps) {
    TwoFluidParams p = params;
    p.body_force = 0.0;
    TwoFluidLattice lat(all_pore_box(box), 0, 0.0, p);
    const double cx = (box - 1) / 2.0;
    lat.initialize_colors([&](int x, int y, int z) {
        const double dx = x - cx, dy = y - cx, dz = z - cx;
        return (dx * dx + dy * dy + dz * dz <= radius * radius) ? 1.0 : 0.0;
    });
    for (std::int64_t i = 0; i < steps; ++i) lat.step();
    lat.check_finite();

    // Pressure from per-colour sound speeds; at density ratio 1 this is
    // rho / 3.
    const double alpha_r = 1.0 - (2.0 / 3.0) / params.density_ratio;
    const double cs2_r = 0.5 * (1.0 - alpha_r);
    const double cs2_b = 1.0 / 3.0;
    double p_in = 0, p_out = 0;
    std::int64_t n_in = 0, n_out = 0;
    const double r_in = 0.5 * radius;
    const double r_out = radius + 5.0;
    for (int z = 0; z < box; ++z)
        for (int y = 0; y < box; ++y)
            for (int x = 0; x < box; ++x) {
                const std::int64_t cell = lat.cell_at(x, y, z);
                const double dx = x - cx, dy = y - cx, dz = z - cx;
                const double d2 = dx * dx + dy * dy + dz * dz;
                const double rho = lat.rho(cell);
                const double rr = 0.5 * (lat.phi(cell) + 1.0) * rho;
                const double rb = rho - rr;
                const double pr = rr * cs2_r + rb * cs2_b;
                if (d2 <= r_in * r_in) {
                    p_in += pr;
                    ++n_in;
                } else if (d2 >= r_out * r_out) {
                    p_out += pr;
                    ++n_out;
                }
            }
    if (n_in == 0 || n_out == 0)
        throw ValidationError("laplace fixture: radius too large for box");
    return p_in / n_in - p_out / n_out;
}

double droplet_contact_angle(double affinity, const TwoFluidParams& params, int nx, int ny,
                             int nz, double radius, std::int64_t steps) {
    const int wall = 2;
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(nx) * ny * nz, 0);
    Dims d{nx, ny, nz};
    for (int z = 0; z < wall; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) labels[linear_index(d, x, y, z)] = 1;
    // Cap the top as well so the droplet cannot interact with its periodic
    // image through the z wrap.
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) labels[linear_index(d, x, y, nz - 1)] = 1;
    LabelVolume vol(d, 2, std::move(labels));

    TwoFluidParams p = params;
    p.body_force = 0.0;
    TwoFluidLattice lat(vol, 0, affinity, p);
    const double cx = (nx - 1) / 2.0, cy = (ny - 1) / 2.0;
    const double z0 = wall - 0.5; // physical wall plane (halfway bounce-back)
    lat.initialize_colors([&](int x, int y, int z) {
        const double dx = x - cx, dy = y - cy, dz = z - z0;
        return (dx * dx + dy * dy + dz * dz <= radius * radius) ? 1.0 : 0.0;
    });
    for (std::int64_t i = 0; i < steps; ++i) lat.step();
    lat.check_finite();

    // Let phi(x) be the colour field; collect sub-voxel phi = 0 crossings
    // along z columns, excluding the wall-adjacent layers.
    std::vector<std::array<double, 3>> pts;
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            for (int z = wall + 2; z < nz - 2; ++z) {
                const std::int64_t c0 = lat.cell_at(x, y, z);
                const std::int64_t c1 = lat.cell_at(x, y, z + 1);
                if (c0 < 0 || c1 < 0) continue;
                const double a = lat.phi(c0), b = lat.phi(c1);
                if ((a > 0) == (b > 0)) continue;
                const double t = a / (a - b);
                pts.push_back({static_cast<double>(x), static_cast<double>(y), z + t});
            }
    // x-direction crossings pick up the droplet flank.
    for (int z = wall + 2; z < nz - 2; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x + 1 < nx; ++x) {
                const std::int64_t c0 = lat.cell_at(x, y, z);
                const std::int64_t c1 = lat.cell_at(x + 1, y, z);
                if (c0 < 0 || c1 < 0) continue;
                const double a = lat.phi(c0), b = lat.phi(c1);
                if ((a > 0) == (b > 0)) continue;
                const double t = a / (a - b);
                pts.push_back({x + t, static_cast<double>(y), static_cast<double>(z)});
            }
    if (pts.size() < 8)
        throw ValidationError("droplet fixture: interface not found (droplet vanished?)");

    // Least-squares sphere with centre on the vertical axis through (cx,cy):
    // (x-cx)^2 + (y-cy)^2 + z^2 = 2 zc z + (R^2 - zc^2).
    double Szz = 0, Sz = 0, Ssz = 0, Ss = 0;
    const double n = static_cast<double>(pts.size());
    for (const auto& pt : pts) {
        const double s = (pt[0] - cx) * (pt[0] - cx) + (pt[1] - cy) * (pt[1] - cy) +
                         pt[2] * pt[2];
        Szz += pt[2] * pt[2];
        Sz += pt[2];
        Ssz += s * pt[2];
        Ss += s;
    }
    const double denom = n * Szz - Sz * Sz;
    if (std::abs(denom) < 1e-12)
        throw ValidationError("droplet fixture: degenerate interface fit");
    const double two_zc = (n * Ssz - Sz * Ss) / denom;
    const double zc = 0.5 * two_zc;
    const double t = (Ss - two_zc * Sz) / n; // R^2 - zc^2
    const double R2 = t + zc * zc;
    if (R2 <= 0) throw ValidationError("droplet fixture: degenerate sphere fit");
    const double R = std::sqrt(R2);

    // Contact angle through the red droplet at the wall plane, then the
    // through-WP angle is its supplement.
    const double cos_theta_red = std::clamp((z0 - zc) / R, -1.0, 1.0);
    const double theta_red = std::acos(cos_theta_red) * 180.0 / 3.14159265358979323846;
    return 180.0 - theta_red;
}

} // namespace rockseg
