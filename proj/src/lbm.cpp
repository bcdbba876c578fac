#include "rockseg/lbm.hpp"

#include <cmath>

#include "rockseg/d3q19.hpp"
#include "rockseg/parallel.hpp"

namespace rockseg {

using namespace d3q19;

namespace {

std::array<double, 19> relaxation_rates(double tau, bool bgk) {
    const double s_nu = 1.0 / tau;
    std::array<double, 19> s{};
    if (bgk) {
        for (int k = 1; k < Q; ++k) s[k] = s_nu;
        s[3] = s[5] = s[7] = 0.0;
        return s;
    }
    // d'Humieres et al. rates, except the heat-flux rate which follows the
    // two-relaxation "magic" combination Lambda = 3/16 so halfway bounce-back
    // places straight walls exactly half a link out. Conserved moments
    // (0, 3, 5, 7) are not relaxed.
    const double s_q = 8.0 * (2.0 - s_nu) / (8.0 - s_nu);
    s[1] = 1.19;
    s[2] = 1.4;
    s[4] = s[6] = s[8] = s_q;
    s[9] = s[11] = s[13] = s[14] = s[15] = s_nu;
    s[10] = s[12] = 1.4;
    s[16] = s[17] = s[18] = s_q;
    return s;
}

} // namespace

bool percolates(const BinaryMask& pore, Axis axis) {
    ComponentLabels cc = connected_components(pore, 26);
    if (cc.count == 0) return false;
    const Dims d = pore.dims;
    std::vector<std::uint8_t> inlet(cc.count + 1, 0), outlet(cc.count + 1, 0);
    auto visit = [&](int x, int y, int z, std::vector<std::uint8_t>& side) {
        const std::int32_t c = cc.labels[linear_index(d, x, y, z)];
        if (c > 0) side[c] = 1;
    };
    const int a = static_cast<int>(axis);
    const int n[3] = {d.nx, d.ny, d.nz};
    for (int i = 0; i < (a == 0 ? d.ny : d.nx); ++i)
        for (int j = 0; j < (a == 2 ? d.ny : d.nz); ++j) {
            int p0[3], p1[3];
            // Enumerate the two faces perpendicular to the axis.
            int u = 0;
            for (int k = 0; k < 3; ++k) {
                if (k == a) continue;
                p0[k] = (u == 0) ? i : j;
                ++u;
            }
            p0[a] = 0;
            p1[0] = p0[0]; p1[1] = p0[1]; p1[2] = p0[2];
            p1[a] = n[a] - 1;
            if (p0[0] < d.nx && p0[1] < d.ny && p0[2] < d.nz)
                visit(p0[0], p0[1], p0[2], inlet);
            if (p1[0] < d.nx && p1[1] < d.ny && p1[2] < d.nz)
                visit(p1[0], p1[1], p1[2], outlet);
        }
    for (std::int32_t c = 1; c <= cc.count; ++c)
        if (inlet[c] && outlet[c]) return true;
    return false;
}

SinglePhaseLattice::SinglePhaseLattice(const LabelVolume& vol, int pore_phase,
                                       const LbmParams& params)
    : params_(params), voxel_size_um_(vol.voxel_size_um()) {
    if (pore_phase < 0 || pore_phase >= vol.n_phases())
        throw ValidationError("lbm: pore phase out of range");
    if (params.tau <= 0.5) throw ValidationError("lbm: tau must exceed 0.5");

    BinaryMask pore = extract_phase(vol, pore_phase);
    if (pore.count() == 0) throw ValidationError("lbm: pore phase is empty");
    percolates_ = percolates(pore, params.axis);

    const int a = static_cast<int>(params.axis);
    const Dims od = vol.dims();
    const int on[3] = {od.nx, od.ny, od.nz};
    domain_length_ = on[a];

    bool mirror = params.mirror == MirrorMode::On;
    if (params.mirror == MirrorMode::Auto) {
        // Mirror when an end face is fully solid, so the periodic wrap does
        // not seal the domain.
        std::int64_t inlet_pore = 0, outlet_pore = 0;
        for (int z = 0; z < od.nz; ++z)
            for (int y = 0; y < od.ny; ++y)
                for (int x = 0; x < od.nx; ++x) {
                    int p[3] = {x, y, z};
                    if (p[a] == 0 && pore.at(x, y, z)) ++inlet_pore;
                    if (p[a] == on[a] - 1 && pore.at(x, y, z)) ++outlet_pore;
                }
        mirror = (inlet_pore == 0 || outlet_pore == 0);
    }
    mirrored_ = mirror;

    Dims d = od;
    std::vector<std::uint8_t> fluid;
    if (!mirror) {
        fluid = pore.bits;
    } else {
        int m[3] = {od.nx, od.ny, od.nz};
        m[a] *= 2;
        d = Dims{m[0], m[1], m[2]};
        fluid.resize(static_cast<std::size_t>(d.count()));
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    int p[3] = {x, y, z};
                    if (p[a] >= on[a]) p[a] = 2 * on[a] - 1 - p[a];
                    fluid[linear_index(d, x, y, z)] =
                        pore.bits[linear_index(od, p[0], p[1], p[2])];
                }
    }
    dims_ = d;

    cell_of_voxel_.assign(static_cast<std::size_t>(d.count()), -1);
    for (std::int64_t i = 0; i < d.count(); ++i)
        if (fluid[i]) {
            cell_of_voxel_[i] = static_cast<std::int32_t>(n_fluid_);
            voxel_of_cell_.push_back(i);
            ++n_fluid_;
        }

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
            neighbor_[cell * Q + q] = cell_of_voxel_[linear_index(d, nx, ny, nz)];
        }
    }

    for (auto& buf : f_) buf.assign(static_cast<std::size_t>(n_fluid_) * Q, 0.0);
    std::array<double, Q> feq;
    equilibrium(1.0, 0.0, 0.0, 0.0, feq);
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell)
        for (int q = 0; q < Q; ++q) f_[0][cell * Q + q] = feq[q];

    s_ = relaxation_rates(params.tau, params.bgk);
}

void SinglePhaseLattice::collide() {
    const MomentBasis& B = moment_basis();
    double g[3] = {0, 0, 0};
    g[static_cast<int>(params_.axis)] = params_.body_force;
    const double gx = g[0], gy = g[1], gz = g[2];
    const auto& s = s_;
    std::vector<double>& f = f_[cur_];

    parallel_for(0, n_fluid_, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t cell = lo; cell < hi; ++cell) {
            double* fc = f.data() + cell * Q;
            double rho = 0, jx = 0, jy = 0, jz = 0;
            for (int q = 0; q < Q; ++q) {
                rho += fc[q];
                jx += c[q][0] * fc[q];
                jy += c[q][1] * fc[q];
                jz += c[q][2] * fc[q];
            }
            const double ux = (jx + 0.5 * gx) / rho;
            const double uy = (jy + 0.5 * gy) / rho;
            const double uz = (jz + 0.5 * gz) / rho;

            double m[Q];
            for (int k = 1; k < Q; ++k) {
                double acc = 0;
                const double* row = B.M[k].data();
                for (int q = 0; q < Q; ++q) acc += row[q] * fc[q];
                m[k] = acc;
            }

            const double u2 = ux * ux + uy * uy + uz * uz;
            const double ug = ux * gx + uy * gy + uz * gz;
            double meq[Q], fm[Q];
            meq[1] = rho * (-11.0 + 19.0 * u2);
            meq[2] = rho * (3.0 - 5.5 * u2);
            meq[4] = -2.0 / 3.0 * rho * ux;
            meq[6] = -2.0 / 3.0 * rho * uy;
            meq[8] = -2.0 / 3.0 * rho * uz;
            meq[9] = rho * (2.0 * ux * ux - uy * uy - uz * uz);
            meq[10] = -0.5 * meq[9];
            meq[11] = rho * (uy * uy - uz * uz);
            meq[12] = -0.5 * meq[11];
            meq[13] = rho * ux * uy;
            meq[14] = rho * uy * uz;
            meq[15] = rho * ux * uz;
            meq[16] = meq[17] = meq[18] = 0.0;

            fm[1] = 38.0 * ug;
            fm[2] = -11.0 * ug;
            fm[4] = -2.0 / 3.0 * gx;
            fm[6] = -2.0 / 3.0 * gy;
            fm[8] = -2.0 / 3.0 * gz;
            fm[9] = 2.0 * (2.0 * ux * gx - uy * gy - uz * gz);
            fm[10] = -(2.0 * ux * gx - uy * gy - uz * gz);
            fm[11] = 2.0 * (uy * gy - uz * gz);
            fm[12] = -(uy * gy - uz * gz);
            fm[13] = ux * gy + uy * gx;
            fm[14] = uy * gz + uz * gy;
            fm[15] = ux * gz + uz * gx;
            fm[16] = fm[17] = fm[18] = 0.0;

            double delta[Q];
            delta[0] = 0.0;
            delta[3] = gx;
            delta[5] = gy;
            delta[7] = gz;
            for (int k = 1; k < Q; ++k) {
                if (k == 3 || k == 5 || k == 7) continue;
                delta[k] = -s[k] * (m[k] - meq[k]) + (1.0 - 0.5 * s[k]) * fm[k];
            }

            for (int q = 0; q < Q; ++q) {
                double acc = 0;
                const double* col = B.Minv[q].data();
                for (int k = 1; k < Q; ++k) acc += col[k] * delta[k];
                fc[q] += acc;
            }
        }
    });
}

void SinglePhaseLattice::stream() {
    const std::vector<double>& src = f_[cur_];
    std::vector<double>& dst = f_[1 - cur_];
    const std::int32_t* nb = neighbor_.data();

    parallel_for(0, n_fluid_, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t cell = lo; cell < hi; ++cell) {
            double* out = dst.data() + cell * Q;
            const double* self = src.data() + cell * Q;
            const std::int32_t* nbc = nb + cell * Q;
            out[0] = self[0];
            for (int q = 1; q < Q; ++q) {
                const std::int32_t from = nbc[opposite[q]];
                out[q] = (from >= 0) ? src[from * Q + q] : self[opposite[q]];
            }
        }
    });
    cur_ = 1 - cur_;
}

void SinglePhaseLattice::step() {
    collide();
    stream();
    ++steps_;
}

void SinglePhaseLattice::macro_snapshot(std::vector<double>& rho, std::vector<double>& ux,
                                        std::vector<double>& uy,
                                        std::vector<double>& uz) const {
    double g[3] = {0, 0, 0};
    g[static_cast<int>(params_.axis)] = params_.body_force;
    rho.resize(n_fluid_);
    ux.resize(n_fluid_);
    uy.resize(n_fluid_);
    uz.resize(n_fluid_);
    const std::vector<double>& f = f_[cur_];
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell) {
        const double* fc = f.data() + cell * Q;
        double r = 0, jx = 0, jy = 0, jz = 0;
        for (int q = 0; q < Q; ++q) {
            r += fc[q];
            jx += c[q][0] * fc[q];
            jy += c[q][1] * fc[q];
            jz += c[q][2] * fc[q];
        }
        rho[cell] = r;
        ux[cell] = (jx + 0.5 * g[0]) / r;
        uy[cell] = (jy + 0.5 * g[1]) / r;
        uz[cell] = (jz + 0.5 * g[2]) / r;
    }
}

void SinglePhaseLattice::check_finite(const std::vector<double>& rho) const {
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell)
        if (!std::isfinite(rho[cell])) {
            const std::int64_t i = voxel_of_cell_[cell];
            const int x = static_cast<int>(i % dims_.nx);
            const int y = static_cast<int>((i / dims_.nx) % dims_.ny);
            const int z = static_cast<int>(i / (static_cast<std::int64_t>(dims_.nx) * dims_.ny));
            throw DivergenceError("lbm: non-finite state at step " + std::to_string(steps_) +
                                  ", voxel (" + std::to_string(x) + "," + std::to_string(y) +
                                  "," + std::to_string(z) + ")");
        }
}

FlowField SinglePhaseLattice::measure() {
    FlowField out;
    out.dims = dims_;
    out.mirrored = mirrored_;
    out.cell_of_voxel = cell_of_voxel_;
    out.non_percolating = !percolates_;
    out.steps = steps_;
    out.nu = (params_.tau - 0.5) / 3.0;
    out.body_force = params_.body_force;
    out.axis = params_.axis;
    out.domain_length = domain_length_;
    out.voxel_size_um = voxel_size_um_;

    std::vector<double> r0, x0, y0, z0;
    macro_snapshot(r0, x0, y0, z0);
    check_finite(r0);
    step();
    std::vector<double> r1, x1, y1, z1;
    macro_snapshot(r1, x1, y1, z1);
    check_finite(r1);

    out.rho.resize(n_fluid_);
    out.ux.resize(n_fluid_);
    out.uy.resize(n_fluid_);
    out.uz.resize(n_fluid_);
    double sr = 0, sx = 0, sy = 0, sz = 0;
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell) {
        out.rho[cell] = 0.5 * (r0[cell] + r1[cell]);
        out.ux[cell] = 0.5 * (x0[cell] + x1[cell]);
        out.uy[cell] = 0.5 * (y0[cell] + y1[cell]);
        out.uz[cell] = 0.5 * (z0[cell] + z1[cell]);
        sr += out.rho[cell];
        sx += out.ux[cell];
        sy += out.uy[cell];
        sz += out.uz[cell];
    }
    if (n_fluid_ > 0) {
        out.mean_rho = sr / n_fluid_;
        out.mean_velocity = {sx / n_fluid_, sy / n_fluid_, sz / n_fluid_};
    }
    return out;
}

double SinglePhaseLattice::total_mass() const {
    const std::vector<double>& f = f_[cur_];
    double total = 0;
    for (std::int64_t cell = 0; cell < n_fluid_; ++cell) {
        double r = 0;
        const double* fc = f.data() + cell * Q;
        for (int q = 0; q < Q; ++q) r += fc[q];
        total += r;
    }
    return total;
}

FlowField SinglePhaseLattice::run_to_steady() {
    if (params_.tol <= 0) throw ValidationError("lbm: tolerance must be positive");
    double prev = 0.0;
    bool have_prev = false;
    FlowField field;
    while (steps_ < params_.max_steps) {
        const std::int64_t todo =
            std::min<std::int64_t>(params_.check_interval, params_.max_steps - steps_);
        for (std::int64_t i = 0; i < todo; ++i) {
            collide();
            stream();
            ++steps_;
        }
        field = measure();
        const int a = static_cast<int>(params_.axis);
        const double vbar = field.mean_velocity[a];
        if (std::abs(vbar) < 1e-13) {
            field.converged = true;
            return field;
        }
        if (have_prev && std::abs(vbar - prev) / std::abs(vbar) < params_.tol) {
            field.converged = true;
            return field;
        }
        prev = vbar;
        have_prev = true;
    }
    field = measure();
    field.converged = false;
    return field;
}

PermeabilityResult permeability(const FlowField& field) {
    if (field.body_force == 0.0)
        throw ValidationError("permeability: zero pressure gradient, K undefined");
    PermeabilityResult r;
    r.nu = field.nu;
    r.domain_length = field.domain_length;
    r.grad_p = field.mean_rho * field.body_force;
    r.mean_velocity = field.mean_velocity[static_cast<int>(field.axis)];
    r.converged = field.converged;
    r.non_percolating = field.non_percolating;
    r.steps = field.steps;
    if (field.non_percolating) {
        r.k_lattice = 0.0;
        r.k_um2 = 0.0;
        return r;
    }
    // K = mu vbar / grad P with mu = mean_rho * nu; vbar is the mean
    // velocity over the pore space.
    r.k_lattice = field.mean_rho * field.nu * r.mean_velocity / r.grad_p;
    r.k_um2 = r.k_lattice * field.voxel_size_um * field.voxel_size_um;
    return r;
}

} // namespace rockseg
