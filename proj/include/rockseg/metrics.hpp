#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rockseg/volume.hpp"

namespace rockseg {

// counts[t][p] = voxels with true label t predicted as p, flattened row-major.
struct ConfusionMatrix {
    int n_phases = 0;
    std::vector<std::uint64_t> counts;
    std::uint64_t n_total = 0;

    std::uint64_t at(int t, int p) const { return counts[t * n_phases + p]; }
    std::uint64_t row_sum(int t) const;
    double overall_accuracy() const;
};

ConfusionMatrix confusion(const LabelVolume& truth, const LabelVolume& pred);

struct PhaseReport {
    int n_phases = 0;
    std::vector<double> per_phase_accuracy; // recall: diagonal over true-row sum
    std::vector<double> volume_fraction;    // ground-truth fractions, sum 1
    std::vector<bool> present;              // phase has nonzero truth count
    double mean_accuracy = 0.0;             // mean over phases present in truth
    double weighted_mean_accuracy = 0.0;    // volume-fraction-weighted
    double overall_accuracy = 0.0;          // trace / n_total
};

// `truth_fractions` must sum to 1 within 1e-3 (they are renormalized; Table-1
// style rounded inputs are accepted). Accuracy for a phase absent from the
// truth is reported as 0 and excluded from mean_accuracy.
PhaseReport phase_report(const ConfusionMatrix& cm,
                         const std::vector<double>& truth_fractions);

// Fractions taken from the confusion matrix's own truth rows.
PhaseReport phase_report(const ConfusionMatrix& cm);

std::vector<double> volume_fractions(const LabelVolume& vol);

enum class WeightMode { Unweighted, Weighted };

struct ClassWeights {
    std::vector<double> w;
};

// Weighted mode returns 1/fraction computed from `truth`; every phase must
// then be present. Unweighted returns all ones.
ClassWeights class_weights(const LabelVolume& truth, WeightMode mode);

// Pre-softmax activations: ScalarVolume with channels = n_phases.
using LogitField = ScalarVolume;

// Per-voxel softmax over channels, computed with max-subtraction.
ScalarVolume softmax(const LogitField& logits);

struct XeResult {
    double value = 0.0;
    // Number of voxels whose true-channel probability underflowed and was
    // clamped at kXeProbFloor.
    std::int64_t clamped_voxels = 0;
};

inline constexpr double kXeProbFloor = 1e-12;

// Weighted softmax cross entropy: -(1/N) sum over voxels of
// w[t] * log(p_softmax[t]), t the true label. Summation is fixed-order
// pairwise, independent of thread count.
XeResult weighted_xe(const LogitField& logits, const LabelVolume& truth,
                     const ClassWeights& w);

// CSV with one row per phase plus summary rows; mirrored by JSON in the CLI.
std::string phase_report_csv(const PhaseReport& r,
                             const std::vector<std::string>& phase_names = {});

} // namespace rockseg
