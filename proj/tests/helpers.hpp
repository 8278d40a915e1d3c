#pragma once

// Shared test utilities: source-tree paths, temp dirs, and the independent
// statistical oracles used to cross-check the library.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xlwm/common.hpp"

namespace testutil {

inline std::string source_dir() { return XLWM_SOURCE_DIR; }

inline std::string data_path(const std::string& rel) {
    return source_dir() + "/data/" + rel;
}

// Fresh directory under the build tree; contents persist for debugging.
inline std::string temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("xlwm_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

// One-sample Kolmogorov-Smirnov statistic against U(0,1).
inline double ks_statistic_uniform(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double hi = (static_cast<double>(i) + 1.0) / n - xs[i];
        double lo = xs[i] - static_cast<double>(i) / n;
        d = std::max(d, std::max(hi, lo));
    }
    return d;
}

// Asymptotic KS critical value; c(0.01) = 1.628.
inline double ks_critical(double alpha, std::size_t n) {
    double c = alpha == 0.01 ? 1.628 : (alpha == 0.05 ? 1.358 : 1.224);
    return c / std::sqrt(static_cast<double>(n));
}

// Brute-force pairwise Mann-Whitney AUC estimator (the ROC oracle).
inline double pairwise_auc(std::span<const double> neg, std::span<const double> pos) {
    double sum = 0.0;
    for (double p : pos)
        for (double q : neg) {
            if (p > q) sum += 1.0;
            else if (p == q) sum += 0.5;
        }
    return sum / (static_cast<double>(neg.size()) * static_cast<double>(pos.size()));
}

}  // namespace testutil
