#include "rockseg/d3q19.hpp"

namespace rockseg::d3q19 {

namespace {

MomentBasis build_basis() {
    MomentBasis b;
    for (int q = 0; q < Q; ++q) {
        const double cx = c[q][0], cy = c[q][1], cz = c[q][2];
        const double c2 = cx * cx + cy * cy + cz * cz;
        b.M[0][q] = 1.0;
        b.M[1][q] = 19.0 * c2 - 30.0;
        b.M[2][q] = 0.5 * (21.0 * c2 * c2 - 53.0 * c2 + 24.0);
        b.M[3][q] = cx;
        b.M[4][q] = (5.0 * c2 - 9.0) * cx;
        b.M[5][q] = cy;
        b.M[6][q] = (5.0 * c2 - 9.0) * cy;
        b.M[7][q] = cz;
        b.M[8][q] = (5.0 * c2 - 9.0) * cz;
        b.M[9][q] = 3.0 * cx * cx - c2;
        b.M[10][q] = (3.0 * c2 - 5.0) * (3.0 * cx * cx - c2);
        b.M[11][q] = cy * cy - cz * cz;
        b.M[12][q] = (3.0 * c2 - 5.0) * (cy * cy - cz * cz);
        b.M[13][q] = cx * cy;
        b.M[14][q] = cy * cz;
        b.M[15][q] = cx * cz;
        b.M[16][q] = (cy * cy - cz * cz) * cx;
        b.M[17][q] = (cz * cz - cx * cx) * cy;
        b.M[18][q] = (cx * cx - cy * cy) * cz;
    }
    for (int k = 0; k < Q; ++k) {
        double norm2 = 0.0;
        for (int q = 0; q < Q; ++q) norm2 += b.M[k][q] * b.M[k][q];
        for (int q = 0; q < Q; ++q) b.Minv[q][k] = b.M[k][q] / norm2;
    }
    return b;
}

} // namespace

const MomentBasis& moment_basis() {
    static const MomentBasis b = build_basis();
    return b;
}

} // namespace rockseg::d3q19
