#pragma once

// Quality and diversity metrics: perplexity from generation records,
// Self-BLEU, Adjusted Diversity, relative decrease, soft-win tabulation, and
// the two judge fairness experiments.

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlwm/common.hpp"
#include "xlwm/judge.hpp"
#include "xlwm/stats.hpp"
#include "xlwm/watermark.hpp"

namespace xlwm {

// exp of the mean negative log probability of the realized tokens.
inline double perplexity(const GenerationRecord& record) {
    if (record.per_step_prob.empty())
        throw ConfigError("perplexity needs a non-empty generation record");
    double nll = 0.0;
    for (double p : record.per_step_prob) {
        if (!(p > 0.0 && p <= 1.0)) throw InternalError("realized-token probability outside (0,1]");
        nll += -std::log(p);
    }
    return std::exp(nll / static_cast<double>(record.per_step_prob.size()));
}

// ---------------------------------------------------------------------------
// BLEU / Self-BLEU

struct BleuOptions {
    int max_n = 4;
    double epsilon = 1e-9;  // floor for zero modified precisions
};

namespace detail {

using NgramCounts = std::map<std::vector<TokenId>, std::size_t>;

inline NgramCounts ngram_counts(const std::vector<TokenId>& text, int n) {
    NgramCounts counts;
    if (text.size() < static_cast<std::size_t>(n)) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= text.size(); ++i)
        counts[std::vector<TokenId>(text.begin() + static_cast<long>(i),
                                    text.begin() + static_cast<long>(i) + n)] += 1;
    return counts;
}

}  // namespace detail

// Sentence BLEU of `candidate` against `references`: modified n-gram
// precisions up to max_n with uniform weights, exponential brevity penalty
// with closest-reference length (ties toward the shorter), epsilon floor on
// zero precisions.
inline double bleu(const std::vector<TokenId>& candidate,
                   const std::vector<const std::vector<TokenId>*>& references,
                   const BleuOptions& opts = {}) {
    if (references.empty()) throw ConfigError("bleu needs at least one reference");
    if (candidate.empty()) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= opts.max_n; ++n) {
        detail::NgramCounts cand = detail::ngram_counts(candidate, n);
        std::size_t total = 0;
        for (const auto& [gram, c] : cand) total += c;

        double precision = opts.epsilon;
        if (total > 0) {
            detail::NgramCounts clip;
            for (const auto* ref : references) {
                detail::NgramCounts rc = detail::ngram_counts(*ref, n);
                for (const auto& [gram, c] : rc) {
                    auto it = clip.find(gram);
                    if (it == clip.end()) clip[gram] = c;
                    else it->second = std::max(it->second, c);
                }
            }
            std::size_t matched = 0;
            for (const auto& [gram, c] : cand) {
                auto it = clip.find(gram);
                if (it != clip.end()) matched += std::min(c, it->second);
            }
            precision = matched == 0 ? opts.epsilon
                                     : static_cast<double>(matched) / static_cast<double>(total);
        }
        log_sum += std::log(precision) / static_cast<double>(opts.max_n);
    }

    std::size_t c_len = candidate.size();
    std::size_t r_len = references[0]->size();
    for (const auto* ref : references) {
        std::size_t len = ref->size();
        auto dist = [&](std::size_t l) {
            return l > c_len ? l - c_len : c_len - l;
        };
        if (dist(len) < dist(r_len) || (dist(len) == dist(r_len) && len < r_len)) r_len = len;
    }
    double bp = c_len >= r_len
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len));
    return bp * std::exp(log_sum);
}

namespace detail {

// max / second-max of per-text n-gram counts, with the owner of the max.
// The clip count of gram g against "all texts but i" is then max (or second
// when i owns the max), which avoids rebuilding reference tables per text.
struct GramStat {
    std::size_t max_count = 0;
    std::size_t second_count = 0;
    std::size_t owner = 0;
};

inline std::string pack_gram(const std::vector<TokenId>& text, std::size_t at, int n) {
    return std::string(reinterpret_cast<const char*>(text.data() + at),
                       static_cast<std::size_t>(n) * sizeof(TokenId));
}

}  // namespace detail

// Mean over texts of BLEU(text | all other texts). Lower = more diverse.
// Computes the same modified precisions and brevity penalty as bleu() above,
// one corpus-wide pass per n-gram order instead of a quadratic recount.
inline double self_bleu(const std::vector<std::vector<TokenId>>& corpus, int max_n = 4) {
    if (corpus.size() < 2) throw ConfigError("self_bleu needs at least 2 texts");
    const double epsilon = BleuOptions{}.epsilon;
    const std::size_t n_texts = corpus.size();

    // log precision sums per text, accumulated order by order
    std::vector<double> log_sum(n_texts, 0.0);
    std::vector<bool> empty_candidate(n_texts, false);
    for (std::size_t i = 0; i < n_texts; ++i) empty_candidate[i] = corpus[i].empty();

    for (int n = 1; n <= max_n; ++n) {
        std::vector<std::unordered_map<std::string, std::size_t>> counts(n_texts);
        std::unordered_map<std::string, detail::GramStat> stats;
        for (std::size_t i = 0; i < n_texts; ++i) {
            const auto& text = corpus[i];
            if (text.size() < static_cast<std::size_t>(n)) continue;
            auto& mine = counts[i];
            for (std::size_t at = 0; at + n <= text.size(); ++at)
                mine[detail::pack_gram(text, at, n)] += 1;
            for (const auto& [gram, c] : mine) {
                detail::GramStat& st = stats[gram];
                if (c > st.max_count) {
                    st.second_count = st.max_count;
                    st.max_count = c;
                    st.owner = i;
                } else if (c > st.second_count) {
                    st.second_count = c;
                }
            }
        }
        for (std::size_t i = 0; i < n_texts; ++i) {
            std::size_t total = 0, matched = 0;
            for (const auto& [gram, c] : counts[i]) {
                total += c;
                const detail::GramStat& st = stats.at(gram);
                std::size_t clip = st.owner == i ? st.second_count : st.max_count;
                matched += std::min(c, clip);
            }
            double precision = (total == 0 || matched == 0)
                                   ? epsilon
                                   : static_cast<double>(matched) / static_cast<double>(total);
            log_sum[i] += std::log(precision) / static_cast<double>(max_n);
        }
    }

    double sum = 0.0;
    for (std::size_t i = 0; i < n_texts; ++i) {
        if (empty_candidate[i]) continue;  // empty text scores 0
        std::size_t c_len = corpus[i].size();
        std::size_t r_len = 0;
        bool have = false;
        for (std::size_t j = 0; j < n_texts; ++j) {
            if (j == i) continue;
            std::size_t len = corpus[j].size();
            auto dist = [&](std::size_t l) { return l > c_len ? l - c_len : c_len - l; };
            if (!have || dist(len) < dist(r_len) || (dist(len) == dist(r_len) && len < r_len)) {
                r_len = len;
                have = true;
            }
        }
        double bp = c_len >= r_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len));
        sum += bp * std::exp(log_sum[i]);
    }
    return sum / static_cast<double>(n_texts);
}

// ---------------------------------------------------------------------------
// Composite metrics

// AD = w*SB + (1-w)*(1-NC). High self-similarity and low coherency both push
// the score up; "fake" diversity from broken text no longer looks good.
inline double adjusted_diversity(double sb, double nc, double w) {
    if (sb < 0.0 || sb > 1.0 || nc < 0.0 || nc > 1.0 || w < 0.0 || w > 1.0)
        throw ConfigError("adjusted_diversity inputs must lie in [0,1]");
    return w * sb + (1.0 - w) * (1.0 - nc);
}

// ((unwm - wm) / unwm) * 100; negative means the score improved.
inline double relative_decrease(double unwm_score, double wm_score) {
    if (unwm_score == 0.0) throw ConfigError("relative_decrease undefined for zero baseline");
    return (unwm_score - wm_score) / unwm_score * 100.0;
}

// Judge coherency is elicited on a 1-10 scale; normalized to [0,1].
inline double normalize_coherency(double raw_score) {
    return std::min(1.0, std::max(0.0, (raw_score - 1.0) / 9.0));
}

// ---------------------------------------------------------------------------
// Soft-win tabulation

struct WinTabulation {
    double hard_win = 0.0;
    double tie = 0.0;
    double soft_win = 0.0;
    std::size_t counted = 0;   // non-failure verdicts (the denominator)
    std::size_t failures = 0;  // reported separately, never in the rates
};

inline WinTabulation tabulate_wins(const std::vector<JudgeVerdict>& verdicts,
                                   JudgeWinner watermarked_side) {
    if (verdicts.empty()) throw ConfigError("tabulate_wins needs at least one verdict");
    if (watermarked_side != JudgeWinner::kA && watermarked_side != JudgeWinner::kB)
        throw ConfigError("watermarked_side must be A or B");
    WinTabulation t;
    std::size_t hard = 0, ties = 0;
    for (const JudgeVerdict& v : verdicts) {
        if (v.winner == JudgeWinner::kFailure) {
            ++t.failures;
            continue;
        }
        ++t.counted;
        if (v.winner == watermarked_side) ++hard;
        else if (v.winner == JudgeWinner::kTie) ++ties;
    }
    if (t.counted > 0) {
        t.hard_win = static_cast<double>(hard) / static_cast<double>(t.counted);
        t.tie = static_cast<double>(ties) / static_cast<double>(t.counted);
        t.soft_win = t.hard_win + t.tie;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Fairness experiments

struct TranslationFairnessRow {
    std::string language;
    double hard_win_pct = 0.0;
    double hard_win_std = 0.0;
    double first_last_pct = 0.0;  // winner presented first or last
};

struct TranslationFairnessReport {
    std::vector<TranslationFairnessRow> rows;
    std::size_t decisive = 0;
    std::size_t ties = 0;
    std::size_t failures = 0;
};

// Judges identical content across languages, shuffling presentation order
// per call. Percentages are over decisive verdicts, per run, then averaged;
// they sum to 100 within rounding by construction.
inline TranslationFairnessReport fairness_translation_experiment(
    const std::map<std::string, std::vector<std::string>>& texts_by_language,
    JudgeClient& client, const JudgeTemplates& templates, std::size_t runs,
    const std::vector<std::uint64_t>& seeds, JudgeAudit* audit = nullptr) {
    if (texts_by_language.size() < 2)
        throw ConfigError("translation fairness experiment needs >= 2 languages");
    if (runs == 0 || seeds.size() < runs)
        throw ConfigError("need one seed per run");
    std::vector<std::string> languages;
    std::size_t n_samples = 0;
    for (const auto& [lang, texts] : texts_by_language) {
        languages.push_back(lang);
        if (n_samples == 0) n_samples = texts.size();
        else if (texts.size() != n_samples)
            throw ConfigError("languages carry different sample counts");
    }
    if (n_samples == 0) throw ConfigError("no samples provided");

    TranslationFairnessReport report;
    std::map<std::string, std::vector<double>> run_pcts;
    std::size_t first_last_wins = 0;
    for (std::size_t r = 0; r < runs; ++r) {
        std::map<std::string, std::size_t> wins;
        std::size_t decisive = 0;
        for (std::size_t i = 0; i < n_samples; ++i) {
            std::vector<std::string> options;
            options.reserve(languages.size());
            for (const std::string& lang : languages)
                options.push_back(texts_by_language.at(lang)[i]);
            std::uint64_t seed = seeds[r] * 1000003ull + i;
            MultiVerdict v = judge_multi(client, templates, options, seed, audit);
            if (v.winner == -2) {
                ++report.failures;
                continue;
            }
            if (v.winner == -1) {
                ++report.ties;
                continue;
            }
            ++decisive;
            wins[languages[static_cast<std::size_t>(v.winner)]] += 1;
            for (std::size_t slot = 0; slot < v.presentation_order.size(); ++slot) {
                if (v.presentation_order[slot] == v.winner) {
                    if (slot == 0 || slot + 1 == v.presentation_order.size()) ++first_last_wins;
                    break;
                }
            }
        }
        report.decisive += decisive;
        for (const std::string& lang : languages) {
            double pct = decisive == 0 ? 0.0
                                       : 100.0 * static_cast<double>(wins[lang]) /
                                             static_cast<double>(decisive);
            run_pcts[lang].push_back(pct);
        }
    }
    for (const std::string& lang : languages) {
        TranslationFairnessRow row;
        row.language = lang;
        row.hard_win_pct = mean_of(run_pcts[lang]);
        row.hard_win_std = sample_stddev(run_pcts[lang]);
        report.rows.push_back(row);
    }
    // first/last share is pooled over all decisive wins.
    for (TranslationFairnessRow& row : report.rows) {
        row.first_last_pct = report.decisive == 0
                                 ? 0.0
                                 : 100.0 * static_cast<double>(first_last_wins) /
                                       static_cast<double>(report.decisive);
    }
    return report;
}

struct ParaphraseFairnessRow {
    std::string language;
    double perturbed_pct = 0.0, perturbed_std = 0.0;
    double natural_pct = 0.0, natural_std = 0.0;
    double tie_pct = 0.0, tie_std = 0.0;
    double failure_pct = 0.0;
};

// Pairs of (natural, perturbed) same-language texts. Shares excluding
// failures sum to 100% within rounding per language.
inline std::vector<ParaphraseFairnessRow> fairness_paraphrase_experiment(
    const std::map<std::string, std::vector<std::pair<std::string, std::string>>>&
        pairs_by_language,
    JudgeClient& client, const JudgeTemplates& templates, std::size_t runs,
    const std::vector<std::uint64_t>& seeds,
    const std::vector<std::string>& criteria = {"coherency"}, JudgeAudit* audit = nullptr) {
    if (pairs_by_language.empty()) throw ConfigError("no language pairs provided");
    if (runs == 0 || seeds.size() < runs) throw ConfigError("need one seed per run");
    for (const auto& [lang, pairs] : pairs_by_language)
        if (pairs.empty()) throw ConfigError("language " + lang + " has no aligned pairs");

    std::vector<ParaphraseFairnessRow> rows;
    for (const auto& [lang, pairs] : pairs_by_language) {
        std::vector<double> perturbed_p, natural_p, tie_p;
        std::size_t failures = 0, total = 0;
        for (std::size_t r = 0; r < runs; ++r) {
            std::size_t perturbed = 0, natural = 0, ties = 0, counted = 0;
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                std::uint64_t seed = seeds[r] * 7778777ull + i;
                JudgeVerdict v = judge_pair(client, templates, pairs[i].first, pairs[i].second,
                                            criteria, seed, audit);
                ++total;
                switch (v.winner) {
                    case JudgeWinner::kA: ++natural; ++counted; break;
                    case JudgeWinner::kB: ++perturbed; ++counted; break;
                    case JudgeWinner::kTie: ++ties; ++counted; break;
                    case JudgeWinner::kFailure: ++failures; break;
                }
            }
            double denom = counted == 0 ? 1.0 : static_cast<double>(counted);
            perturbed_p.push_back(100.0 * static_cast<double>(perturbed) / denom);
            natural_p.push_back(100.0 * static_cast<double>(natural) / denom);
            tie_p.push_back(100.0 * static_cast<double>(ties) / denom);
        }
        ParaphraseFairnessRow row;
        row.language = lang;
        row.perturbed_pct = mean_of(perturbed_p);
        row.perturbed_std = sample_stddev(perturbed_p);
        row.natural_pct = mean_of(natural_p);
        row.natural_std = sample_stddev(natural_p);
        row.tie_pct = mean_of(tie_p);
        row.tie_std = sample_stddev(tie_p);
        row.failure_pct = 100.0 * static_cast<double>(failures) / static_cast<double>(total);
        rows.push_back(row);
    }
    return rows;
}

// CSV schemas mirroring the fairness tables.
inline std::string translation_fairness_csv(const TranslationFairnessReport& report) {
    std::string out = "language,hard_win_pct,hard_win_std,first_last_pct\n";
    for (const auto& row : report.rows) {
        out += row.language + "," + format_g12(row.hard_win_pct) + "," +
               format_g12(row.hard_win_std) + "," + format_g12(row.first_last_pct) + "\n";
    }
    return out;
}

inline std::string paraphrase_fairness_csv(const std::vector<ParaphraseFairnessRow>& rows) {
    std::string out =
        "language,perturbed_pct,perturbed_std,natural_pct,natural_std,tie_pct,tie_std,"
        "failure_pct\n";
    for (const auto& row : rows) {
        out += row.language + "," + format_g12(row.perturbed_pct) + "," +
               format_g12(row.perturbed_std) + "," + format_g12(row.natural_pct) + "," +
               format_g12(row.natural_std) + "," + format_g12(row.tie_pct) + "," +
               format_g12(row.tie_std) + "," + format_g12(row.failure_pct) + "\n";
    }
    return out;
}

}  // namespace xlwm
