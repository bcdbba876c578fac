// Static-droplet calibration of the wall-affinity to contact-angle map,
// plus a Laplace sweep for the surface tension of a given perturbation
// amplitude. The measured table feeds default_affinity_table() and the
// shipped config files.
//
//   wetting_calibration angles [A] [tau_r] [tau_b] [beta]
//   wetting_calibration gamma  [A] [tau_r] [tau_b] [beta]

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "rockseg/lbm_multiphase.hpp"
#include "rockseg/parallel.hpp"

using namespace rockseg;

int main(int argc, char** argv) {
    set_thread_count(2);
    std::string mode = argc > 1 ? argv[1] : "angles";
    TwoFluidParams p;
    p.perturbation_A = argc > 2 ? std::atof(argv[2]) : 0.1;
    p.tau_r = argc > 3 ? std::atof(argv[3]) : 1.0;
    p.tau_b = argc > 4 ? std::atof(argv[4]) : 1.0;
    p.beta_recolor = argc > 5 ? std::atof(argv[5]) : 0.7;

    if (mode == "gamma") {
        std::printf("# Laplace sweep: A=%g tau_r=%g tau_b=%g beta=%g\n", p.perturbation_A,
                    p.tau_r, p.tau_b, p.beta_recolor);
        std::printf("radius,delta_p,gamma_point\n");
        // gamma from the slope of dp vs 2/R; print per-radius points.
        double sxx = 0, sxy = 0;
        for (double r : {8.0, 12.0, 16.0}) {
            const int box = static_cast<int>(2 * r + 14);
            const double dp = laplace_pressure_step(box, r, p, 6000);
            std::printf("%g,%.8f,%.6f\n", r, dp, dp * r / 2.0);
            sxx += (2.0 / r) * (2.0 / r);
            sxy += (2.0 / r) * dp;
        }
        std::printf("gamma_fit=%.6f\n", sxy / sxx);
        return 0;
    }

    std::printf("# droplet calibration: A=%g tau_r=%g tau_b=%g beta=%g\n", p.perturbation_A,
                p.tau_r, p.tau_b, p.beta_recolor);
    std::printf("affinity,angle_deg\n");
    for (double a : {-0.98, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 0.98}) {
        const double theta = droplet_contact_angle(a, p, 44, 44, 30, 10.0, 8000);
        std::printf("%.2f,%.2f\n", a, theta);
        std::fflush(stdout);
    }
    return 0;
}
