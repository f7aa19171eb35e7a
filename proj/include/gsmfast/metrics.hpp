#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "gsmfast/errors.hpp"

namespace gsmfast {

inline constexpr double kSiSdrCap = 100.0;

/// Scale-invariant SDR in dB, clamped to [-100, 100].
inline double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
    if (estimate.size() != reference.size())
        throw ShapeMismatch("si_sdr: estimate and reference lengths differ");
    double ref_energy = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        ref_energy += reference[i] * reference[i];
        dot += estimate[i] * reference[i];
    }
    if (!(ref_energy > 0.0))
        throw InvalidArgument("si_sdr: reference is all zero");
    const double alpha = dot / ref_energy;
    double target = 0.0, err = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double s = alpha * reference[i];
        target += s * s;
        const double e = s - estimate[i];
        err += e * e;
    }
    if (err == 0.0)
        return kSiSdrCap;
    if (target == 0.0)
        return -kSiSdrCap;
    return std::clamp(10.0 * std::log10(target / err), -kSiSdrCap, kSiSdrCap);
}

struct SourceMetric {
    double si_sdr = 0.0;
    std::size_t assigned_reference = 0;
};

struct MetricReport {
    std::vector<SourceMetric> per_source; // indexed by estimate
    double mean_si_sdr = 0.0;
    std::optional<double> input_si_sdr;
};

/// Best assignment of estimates to references by mean SI-SDR, searched
/// exhaustively; among equal scores the lexicographically first wins.
inline MetricReport permutation_si_sdr(const std::vector<std::vector<double>>& estimates,
                                       const std::vector<std::vector<double>>& references) {
    const std::size_t N = references.size();
    if (estimates.size() != N)
        throw ShapeMismatch("permutation_si_sdr: estimate and reference counts differ");
    if (N == 0)
        throw InvalidArgument("permutation_si_sdr: no signals");
    if (N > 8)
        throw InvalidArgument("permutation_si_sdr: at most 8 sources");
    std::vector<double> score(N * N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            score[i * N + j] = si_sdr(estimates[i], references[j]);

    std::vector<std::size_t> perm(N), best;
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best_sum = -std::numeric_limits<double>::infinity();
    do {
        double sum = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            sum += score[i * N + perm[i]];
        if (sum > best_sum) {
            best_sum = sum;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    MetricReport r;
    for (std::size_t i = 0; i < N; ++i)
        r.per_source.push_back({score[i * N + best[i]], best[i]});
    r.mean_si_sdr = best_sum / static_cast<double>(N);
    return r;
}

/// Mean SI-SDR of the unprocessed mixture channel against every reference.
inline double input_si_sdr(std::span<const double> mixture,
                           const std::vector<std::vector<double>>& references) {
    if (references.empty())
        throw InvalidArgument("input_si_sdr: no references");
    double s = 0.0;
    for (const auto& ref : references)
        s += si_sdr(mixture, ref);
    return s / static_cast<double>(references.size());
}

} // namespace gsmfast
