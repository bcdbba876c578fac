#include "rockseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rockseg {

std::uint64_t ConfusionMatrix::row_sum(int t) const {
    std::uint64_t s = 0;
    for (int p = 0; p < n_phases; ++p) s += at(t, p);
    return s;
}

double ConfusionMatrix::overall_accuracy() const {
    std::uint64_t diag = 0;
    for (int i = 0; i < n_phases; ++i) diag += at(i, i);
    return n_total == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(n_total);
}

ConfusionMatrix confusion(const LabelVolume& truth, const LabelVolume& pred) {
    if (truth.dims() != pred.dims())
        throw ShapeError("confusion: volume dims differ");
    if (truth.n_phases() != pred.n_phases())
        throw ShapeError("confusion: volumes disagree on n_phases");
    ConfusionMatrix cm;
    cm.n_phases = truth.n_phases();
    cm.counts.assign(static_cast<std::size_t>(cm.n_phases) * cm.n_phases, 0);
    const auto& t = truth.labels();
    const auto& p = pred.labels();
    for (std::size_t i = 0; i < t.size(); ++i) ++cm.counts[t[i] * cm.n_phases + p[i]];
    cm.n_total = t.size();
    return cm;
}

PhaseReport phase_report(const ConfusionMatrix& cm,
                         const std::vector<double>& truth_fractions) {
    if (static_cast<int>(truth_fractions.size()) != cm.n_phases)
        throw ShapeError("phase_report: fraction vector length != n_phases");
    double sum = 0.0;
    for (double f : truth_fractions) {
        if (f < 0) throw ValidationError("phase_report: negative volume fraction");
        sum += f;
    }
    // Table-1 style vectors are rounded to 4 decimals and can sum to 1.0001;
    // accept within 1e-3 and renormalize.
    if (std::abs(sum - 1.0) > 1e-3)
        throw ValidationError("phase_report: fractions sum to " + std::to_string(sum) +
                              ", expected 1 within 1e-3");

    PhaseReport r;
    r.n_phases = cm.n_phases;
    r.per_phase_accuracy.resize(cm.n_phases, 0.0);
    r.volume_fraction.resize(cm.n_phases);
    r.present.resize(cm.n_phases);
    for (int i = 0; i < cm.n_phases; ++i) r.volume_fraction[i] = truth_fractions[i] / sum;

    double mean = 0.0;
    int n_present = 0;
    for (int i = 0; i < cm.n_phases; ++i) {
        const std::uint64_t row = cm.row_sum(i);
        r.present[i] = row > 0;
        if (row > 0) {
            r.per_phase_accuracy[i] =
                static_cast<double>(cm.at(i, i)) / static_cast<double>(row);
            mean += r.per_phase_accuracy[i];
            ++n_present;
        }
    }
    r.mean_accuracy = n_present > 0 ? mean / n_present : 0.0;
    double wsum = 0.0;
    for (int i = 0; i < cm.n_phases; ++i)
        wsum += r.volume_fraction[i] * r.per_phase_accuracy[i];
    r.weighted_mean_accuracy = wsum;
    r.overall_accuracy = cm.overall_accuracy();
    return r;
}

PhaseReport phase_report(const ConfusionMatrix& cm) {
    std::vector<double> fr(cm.n_phases, 0.0);
    if (cm.n_total > 0)
        for (int i = 0; i < cm.n_phases; ++i)
            fr[i] = static_cast<double>(cm.row_sum(i)) / static_cast<double>(cm.n_total);
    return phase_report(cm, fr);
}

std::vector<double> volume_fractions(const LabelVolume& vol) {
    std::vector<std::uint64_t> counts(vol.n_phases(), 0);
    for (std::uint8_t l : vol.labels()) ++counts[l];
    std::vector<double> fr(vol.n_phases());
    for (int i = 0; i < vol.n_phases(); ++i)
        fr[i] = static_cast<double>(counts[i]) / static_cast<double>(vol.size());
    return fr;
}

ClassWeights class_weights(const LabelVolume& truth, WeightMode mode) {
    ClassWeights cw;
    cw.w.assign(truth.n_phases(), 1.0);
    if (mode == WeightMode::Unweighted) return cw;
    const auto fr = volume_fractions(truth);
    for (int i = 0; i < truth.n_phases(); ++i) {
        if (fr[i] == 0.0)
            throw ValidationError("class_weights: phase " + std::to_string(i) +
                                  " absent from truth, weighted mode undefined");
        cw.w[i] = 1.0 / fr[i];
    }
    return cw;
}

ScalarVolume softmax(const LogitField& logits) {
    const int c = logits.channels();
    std::vector<double> out(logits.values().size());
    const auto& v = logits.values();
    const std::int64_t n = logits.dims().count();
    for (std::int64_t i = 0; i < n; ++i) {
        const double* a = v.data() + i * c;
        double m = a[0];
        for (int k = 1; k < c; ++k) m = std::max(m, a[k]);
        double z = 0.0;
        for (int k = 0; k < c; ++k) z += std::exp(a[k] - m);
        for (int k = 0; k < c; ++k) out[i * c + k] = std::exp(a[k] - m) / z;
    }
    return ScalarVolume(logits.dims(), c, std::move(out), logits.voxel_size_um());
}

namespace {

// Fixed-order pairwise reduction over voxel terms.
double pairwise_sum(const LogitField& logits, const LabelVolume& truth,
                    const std::vector<double>& w, std::int64_t lo, std::int64_t hi,
                    std::int64_t& clamped) {
    if (hi - lo <= 64) {
        const int c = logits.channels();
        const auto& v = logits.values();
        const double log_floor = std::log(kXeProbFloor);
        double s = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) {
            const double* a = v.data() + i * c;
            double m = a[0];
            for (int k = 1; k < c; ++k) m = std::max(m, a[k]);
            double z = 0.0;
            for (int k = 0; k < c; ++k) z += std::exp(a[k] - m);
            const int t = truth.at(i);
            const double logp = a[t] - m - std::log(z);
            if (logp < log_floor) {
                ++clamped;
                s += -w[t] * log_floor;
            } else {
                s += -w[t] * logp;
            }
        }
        return s;
    }
    const std::int64_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(logits, truth, w, lo, mid, clamped) +
           pairwise_sum(logits, truth, w, mid, hi, clamped);
}

} // namespace

XeResult weighted_xe(const LogitField& logits, const LabelVolume& truth,
                     const ClassWeights& w) {
    if (logits.dims() != truth.dims())
        throw ShapeError("weighted_xe: volume dims differ");
    if (logits.channels() != truth.n_phases())
        throw ShapeError("weighted_xe: logit channels != n_phases");
    if (static_cast<int>(w.w.size()) != truth.n_phases())
        throw ShapeError("weighted_xe: weight vector length != n_phases");
    XeResult r;
    const std::int64_t n = truth.size();
    r.value = pairwise_sum(logits, truth, w.w, 0, n, r.clamped_voxels) / static_cast<double>(n);
    return r;
}

std::string phase_report_csv(const PhaseReport& r,
                             const std::vector<std::string>& phase_names) {
    std::ostringstream os;
    os.precision(12);
    os << "phase,name,volume_fraction,per_phase_accuracy,present\n";
    for (int i = 0; i < r.n_phases; ++i) {
        const std::string name =
            i < static_cast<int>(phase_names.size()) ? phase_names[i] : "phase" + std::to_string(i);
        os << i << "," << name << "," << r.volume_fraction[i] << ","
           << r.per_phase_accuracy[i] << "," << (r.present[i] ? 1 : 0) << "\n";
    }
    os << ",mean_accuracy," << r.mean_accuracy << ",,\n";
    os << ",weighted_mean_accuracy," << r.weighted_mean_accuracy << ",,\n";
    os << ",overall_accuracy," << r.overall_accuracy << ",,\n";
    return os.str();
}

} // namespace rockseg
