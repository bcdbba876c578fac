#pragma once

#include <array>

namespace rockseg::d3q19 {

inline constexpr int Q = 19;

// Velocity set: rest, 6 face, 12 edge directions. Opposites are adjacent
// pairs (1,2), (3,4), ...
inline constexpr std::array<std::array<int, 3>, Q> c = {{
    {0, 0, 0},
    {1, 0, 0},  {-1, 0, 0},
    {0, 1, 0},  {0, -1, 0},
    {0, 0, 1},  {0, 0, -1},
    {1, 1, 0},  {-1, -1, 0},
    {1, -1, 0}, {-1, 1, 0},
    {1, 0, 1},  {-1, 0, -1},
    {1, 0, -1}, {-1, 0, 1},
    {0, 1, 1},  {0, -1, -1},
    {0, 1, -1}, {0, -1, 1},
}};

inline constexpr std::array<int, Q> opposite = {0, 2,  1,  4,  3,  6,  5,  8,  7, 10,
                                                9, 12, 11, 14, 13, 16, 15, 18, 17};

inline constexpr double w0 = 1.0 / 3.0;
inline constexpr double w1 = 1.0 / 18.0;
inline constexpr double w2 = 1.0 / 36.0;

inline constexpr std::array<double, Q> w = {w0, w1, w1, w1, w1, w1, w1, w2, w2, w2,
                                            w2, w2, w2, w2, w2, w2, w2, w2, w2};

inline constexpr double cs2 = 1.0 / 3.0;

// Gram-Schmidt moment basis M (rows: rho, e, eps, j/q per axis, stress and
// third-order groups). Rows are mutually orthogonal; M^-1 = M^T / row_norm2.
struct MomentBasis {
    std::array<std::array<double, Q>, Q> M{};
    std::array<std::array<double, Q>, Q> Minv{};
};

const MomentBasis& moment_basis();

// BGK equilibrium for density rho and velocity u.
inline void equilibrium(double rho, double ux, double uy, double uz,
                        std::array<double, Q>& feq) {
    const double usq = 1.5 * (ux * ux + uy * uy + uz * uz);
    for (int q = 0; q < Q; ++q) {
        const double cu = c[q][0] * ux + c[q][1] * uy + c[q][2] * uz;
        feq[q] = w[q] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - usq);
    }
}

// Guo forcing term in velocity space for body force g at velocity u.
inline void guo_force(double ux, double uy, double uz, double gx, double gy, double gz,
                      std::array<double, Q>& out) {
    for (int q = 0; q < Q; ++q) {
        const double cu = c[q][0] * ux + c[q][1] * uy + c[q][2] * uz;
        const double cg = c[q][0] * gx + c[q][1] * gy + c[q][2] * gz;
        const double ug = ux * gx + uy * gy + uz * gz;
        out[q] = w[q] * (3.0 * (cg - ug) + 9.0 * cu * cg);
    }
}

} // namespace rockseg::d3q19
