#pragma once

// Detection statistics for all four methods, threshold calibration, and
// ROC/AUC. Detectors recompute the keyed partitions/randoms position by
// position; windows that would reach before the scored text are left-padded
// with the vocabulary sentinel unless the true preceding context (e.g. the
// generation prompt) is supplied.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xlwm/common.hpp"
#include "xlwm/core.hpp"
#include "xlwm/stats.hpp"
#include "xlwm/watermark.hpp"

namespace xlwm {

struct DetectionOutcome {
    Method method = Method::kNone;
    double statistic = 0.0;
    double threshold = 0.0;
    bool verdict = false;
    std::optional<double> p_value;          // EXP only
    std::size_t scored_positions = 0;
    std::vector<char> per_token_flags;      // green/red per scored position
    std::vector<double> per_token_values;   // EXP: recomputed r of each token
};

// Default decision thresholds (z-score, EXP p-value, XSIR mean-sign score).
struct DetectionThresholds {
    double z = 4.0;
    double p_value = 1e-4;
    double xsir = 0.2;
};

inline double z_from_counts(std::size_t green, std::size_t scored, double gamma) {
    if (scored == 0) throw ConfigError("z statistic needs at least one scored position");
    double n = static_cast<double>(scored);
    return (static_cast<double>(green) - gamma * n) / std::sqrt(n * gamma * (1.0 - gamma));
}

namespace detail {

// Concatenates preceding context (if any) with the scored sequence; only the
// trailing `seq` positions are scored.
struct ScoredView {
    std::vector<TokenId> all;
    std::size_t first_scored;

    ScoredView(std::span<const TokenId> preceding, std::span<const TokenId> seq) {
        all.reserve(preceding.size() + seq.size());
        all.insert(all.end(), preceding.begin(), preceding.end());
        all.insert(all.end(), seq.begin(), seq.end());
        first_scored = preceding.size();
    }
};

}  // namespace detail

inline DetectionOutcome kgw_z(const TokenSequence& seq, const SecretKey& key,
                              const KgwParams& params, const Vocabulary& vocab,
                              double threshold = 4.0,
                              std::span<const TokenId> preceding = {}) {
    params.validate();
    detail::ScoredView view(preceding, seq.ids);
    if (view.all.size() == view.first_scored)
        throw ConfigError("sequence has no scored positions");
    DetectionOutcome out;
    out.method = Method::kKgw;
    out.threshold = threshold;
    std::size_t greens = 0;
    for (std::size_t pos = view.first_scored; pos < view.all.size(); ++pos) {
        std::vector<TokenId> window =
            trailing_window(view.all, pos, static_cast<std::size_t>(params.context_width),
                            vocab.sentinel_id());
        PartitionMask mask = kgw_mask(key, window, params, vocab.size());
        bool green = mask.green[static_cast<std::size_t>(view.all[pos])] != 0;
        out.per_token_flags.push_back(green ? 1 : 0);
        greens += green ? 1 : 0;
    }
    out.scored_positions = view.all.size() - view.first_scored;
    out.statistic = z_from_counts(greens, out.scored_positions, params.gamma);
    out.verdict = out.statistic >= out.threshold;
    return out;
}

inline DetectionOutcome unigram_z(const TokenSequence& seq, const SecretKey& key, double gamma,
                                  const Vocabulary& vocab, double threshold = 4.0) {
    if (seq.empty()) throw ConfigError("sequence has no scored positions");
    PartitionMask mask = unigram_mask(key, gamma, vocab.size());
    DetectionOutcome out;
    out.method = Method::kUnigram;
    out.threshold = threshold;
    std::size_t greens = 0;
    for (TokenId id : seq.ids) {
        bool green = mask.green[static_cast<std::size_t>(id)] != 0;
        out.per_token_flags.push_back(green ? 1 : 0);
        greens += green ? 1 : 0;
    }
    out.scored_positions = seq.size();
    out.statistic = z_from_counts(greens, out.scored_positions, gamma);
    out.verdict = out.statistic >= out.threshold;
    return out;
}

// Sum of log(1/(1-r)) over scored positions; under the null the statistic is
// Gamma(n,1), so the p-value is its upper tail.
inline DetectionOutcome exp_score(const TokenSequence& seq, const SecretKey& key,
                                  const ExpParams& params, const Vocabulary& vocab,
                                  double p_threshold = 1e-4,
                                  std::span<const TokenId> preceding = {}) {
    params.validate();
    detail::ScoredView view(preceding, seq.ids);
    if (view.all.size() == view.first_scored)
        throw ConfigError("sequence has no scored positions");
    DetectionOutcome out;
    out.method = Method::kExp;
    out.threshold = p_threshold;
    double stat = 0.0;
    for (std::size_t pos = view.first_scored; pos < view.all.size(); ++pos) {
        std::vector<TokenId> window =
            trailing_window(view.all, pos, static_cast<std::size_t>(params.context_width),
                            vocab.sentinel_id());
        std::vector<double> r = keyed_uniforms(context_seed(key, window), vocab.size());
        double ri = r[static_cast<std::size_t>(view.all[pos])];
        out.per_token_values.push_back(ri);
        stat += -std::log1p(-ri);
    }
    out.scored_positions = view.all.size() - view.first_scored;
    out.statistic = stat;
    out.p_value = gamma_q(static_cast<double>(out.scored_positions), stat);
    out.verdict = *out.p_value <= p_threshold;
    return out;
}

// Mean step-bias sign of the observed tokens, in [-1, 1].
inline DetectionOutcome xsir_score(const TokenSequence& seq, const XsirBiaser& biaser,
                                   double threshold = 0.2,
                                   std::span<const TokenId> preceding = {}) {
    detail::ScoredView view(preceding, seq.ids);
    if (view.all.size() == view.first_scored)
        throw ConfigError("sequence has no scored positions");
    const ClusterMap& cm = *biaser.params().clusters;
    DetectionOutcome out;
    out.method = Method::kXsir;
    out.threshold = threshold;
    double sum = 0.0;
    for (std::size_t pos = view.first_scored; pos < view.all.size(); ++pos) {
        XsirStepSigns signs =
            biaser.step_signs(std::span(view.all).subspan(0, pos));
        int s = signs.sign_of_token(cm, view.all[pos]);
        out.per_token_flags.push_back(s > 0 ? 1 : 0);
        sum += static_cast<double>(s);
    }
    out.scored_positions = view.all.size() - view.first_scored;
    out.statistic = sum / static_cast<double>(out.scored_positions);
    out.verdict = out.statistic >= out.threshold;
    return out;
}

inline DetectionOutcome xsir_score(const TokenSequence& seq, const SecretKey& key,
                                   const XsirParams& params, const Vocabulary& vocab,
                                   double threshold = 0.2,
                                   std::span<const TokenId> preceding = {}) {
    XsirBiaser biaser(key, params, &vocab);
    return xsir_score(seq, biaser, threshold, preceding);
}

// ---------------------------------------------------------------------------
// Threshold calibration and ROC

struct CalibrationResult {
    double threshold = 0.0;
    double achieved_fpr = 0.0;
    double achieved_tpr = 0.0;
};

// Smallest threshold whose empirical FPR on the negatives stays at or below
// the target; conservative under ties.
inline CalibrationResult calibrate_threshold(std::span<const double> neg_scores,
                                             std::span<const double> pos_scores,
                                             double target_fpr) {
    if (neg_scores.empty() || pos_scores.empty())
        throw ConfigError("calibration needs non-empty score lists");
    if (target_fpr < 0.0 || target_fpr > 1.0) throw ConfigError("target_fpr must be in [0,1]");
    std::vector<double> neg(neg_scores.begin(), neg_scores.end());
    std::sort(neg.begin(), neg.end());
    std::size_t n = neg.size();
    std::size_t allowed = static_cast<std::size_t>(std::floor(target_fpr * static_cast<double>(n)));

    CalibrationResult result;
    if (allowed >= n) {
        result.threshold = -std::numeric_limits<double>::infinity();
    } else {
        // Exclude the top `allowed` scores and everything tied with the next one.
        double cutoff = neg[n - 1 - allowed];
        result.threshold = std::nextafter(cutoff, std::numeric_limits<double>::infinity());
    }
    std::size_t fp = 0;
    for (double s : neg) fp += (s >= result.threshold) ? 1 : 0;
    std::size_t tp = 0;
    for (double s : pos_scores) tp += (s >= result.threshold) ? 1 : 0;
    result.achieved_fpr = static_cast<double>(fp) / static_cast<double>(n);
    result.achieved_tpr = static_cast<double>(tp) / static_cast<double>(pos_scores.size());
    return result;
}

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), both non-decreasing
    double auc = 0.0;
};

// AUC equals the Mann-Whitney estimator P(pos>neg) + 0.5*P(pos=neg); the sum
// is accumulated in exact half-integer arithmetic so it matches a brute-force
// pairwise count bit for bit.
inline RocCurve roc(std::span<const double> neg_scores, std::span<const double> pos_scores) {
    if (neg_scores.empty() || pos_scores.empty())
        throw ConfigError("roc needs non-empty score lists");
    std::vector<double> neg(neg_scores.begin(), neg_scores.end());
    std::vector<double> pos(pos_scores.begin(), pos_scores.end());
    std::sort(neg.begin(), neg.end(), std::greater<>());
    std::sort(pos.begin(), pos.end(), std::greater<>());
    double n = static_cast<double>(neg.size());
    double p = static_cast<double>(pos.size());

    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    std::size_t i = 0, j = 0;
    double pairs = 0.0;  // exact multiples of 0.5
    double tp = 0.0, fp = 0.0;
    while (i < pos.size() || j < neg.size()) {
        double v;
        if (i < pos.size() && j < neg.size())
            v = std::max(pos[i], neg[j]);
        else
            v = (i < pos.size()) ? pos[i] : neg[j];
        std::size_t dp = 0, dn = 0;
        while (i < pos.size() && pos[i] == v) { ++i; ++dp; }
        while (j < neg.size() && neg[j] == v) { ++j; ++dn; }
        // Negatives at value v: pos strictly above = tp so far; ties get half.
        pairs += static_cast<double>(dn) * (tp + 0.5 * static_cast<double>(dp));
        tp += static_cast<double>(dp);
        fp += static_cast<double>(dn);
        curve.points.emplace_back(fp / n, tp / p);
    }
    curve.auc = pairs / (n * p);
    return curve;
}

// Trapezoidal integral of an ROC polyline; the curve's auc matches it to
// floating-point noise.
inline double trapezoid_auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        double dx = curve.points[k].first - curve.points[k - 1].first;
        area += dx * 0.5 * (curve.points[k].second + curve.points[k - 1].second);
    }
    return area;
}

// Score dump line: id, method, statistic, p-value (or "-"), verdict. Fixed
// 12-significant-digit formatting keeps diffs reproducible.
inline std::string format_score_line(const std::string& id, const DetectionOutcome& out) {
    std::string line = id;
    line += '\t';
    line += method_name(out.method);
    line += '\t';
    line += format_g12(out.statistic);
    line += '\t';
    line += out.p_value ? format_g12(*out.p_value) : std::string("-");
    line += '\t';
    line += out.verdict ? "1" : "0";
    return line;
}

}  // namespace xlwm
