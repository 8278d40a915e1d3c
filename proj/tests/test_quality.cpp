#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "helpers.hpp"
#include "xlwm/quality.hpp"

using namespace xlwm;

namespace {

// Independent sentence-BLEU oracle: plain nested loops, no shared code with
// the implementation.
double oracle_bleu(const std::vector<TokenId>& cand,
                   const std::vector<std::vector<TokenId>>& refs) {
    if (cand.empty()) return 0.0;
    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        int total = static_cast<int>(cand.size()) - n + 1;
        double matched = 0.0;
        if (total > 0) {
            // count each distinct candidate n-gram once, clipped by max ref count
            for (int i = 0; i < total; ++i) {
                bool first_occurrence = true;
                for (int j = 0; j < i; ++j) {
                    if (std::equal(cand.begin() + j, cand.begin() + j + n, cand.begin() + i))
                        first_occurrence = false;
                }
                if (!first_occurrence) continue;
                int cand_count = 0;
                for (int j = 0; j + n <= static_cast<int>(cand.size()); ++j)
                    if (std::equal(cand.begin() + j, cand.begin() + j + n, cand.begin() + i))
                        ++cand_count;
                int best_ref = 0;
                for (const auto& ref : refs) {
                    int c = 0;
                    for (int j = 0; j + n <= static_cast<int>(ref.size()); ++j)
                        if (std::equal(ref.begin() + j, ref.begin() + j + n, cand.begin() + i))
                            ++c;
                    best_ref = std::max(best_ref, c);
                }
                matched += std::min(cand_count, best_ref);
            }
        }
        double p = (total <= 0 || matched == 0.0) ? 1e-9 : matched / total;
        log_sum += std::log(p) / 4.0;
    }
    std::size_t c_len = cand.size();
    std::size_t r_len = refs[0].size();
    for (const auto& ref : refs) {
        auto dist = [&](std::size_t l) { return l > c_len ? l - c_len : c_len - l; };
        if (dist(ref.size()) < dist(r_len) || (dist(ref.size()) == dist(r_len) && ref.size() < r_len))
            r_len = ref.size();
    }
    double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - static_cast<double>(r_len) / c_len);
    return bp * std::exp(log_sum);
}

JudgeVerdict verdict_of(JudgeWinner w) {
    JudgeVerdict v;
    v.winner = w;
    v.presentation_order = {0, 1};
    return v;
}

}  // namespace

TEST_CASE("perplexity closed forms") {
    GenerationRecord rec;
    rec.per_step_prob.assign(20, 1.0 / 64.0);
    CHECK(perplexity(rec) == Catch::Approx(64.0).epsilon(1e-12));

    rec.per_step_prob.assign(7, 1.0);
    CHECK(perplexity(rec) == 1.0);

    rec.per_step_prob = {0.5, 0.125};
    CHECK(perplexity(rec) == Catch::Approx(4.0).epsilon(1e-12));

    rec.per_step_prob.clear();
    CHECK_THROWS_AS(perplexity(rec), ConfigError);
}

TEST_CASE("self-bleu extremes") {
    std::vector<std::vector<TokenId>> identical(3, std::vector<TokenId>{1, 2, 3, 4, 5});
    CHECK(self_bleu(identical) == Catch::Approx(1.0).epsilon(1e-12));

    // no shared unigrams: only the smoothing floor survives
    std::vector<std::vector<TokenId>> disjoint{{1, 2, 3}, {4, 5, 6}};
    CHECK(self_bleu(disjoint) <= 1e-8);

    CHECK_THROWS_AS(self_bleu({{1, 2, 3}}), ConfigError);
}

TEST_CASE("self-bleu matches the hand-computed three-sentence fixture") {
    // Derivation (modified n-gram precisions, uniform weights, BP=1 since all
    // lengths are 7, epsilon=1e-9 on zero precisions):
    //   text0: p1=6/7 p2=4/6 p3=3/5 p4=1/4 -> 0.54108226905393964
    //   text1: p1=5/7 p2=3/6 p3=2/5 p4=1/4 -> 0.43472087194499148
    //   text2: p1=3/7 p2=2/6 p3=1/5 p4=0/4 -> 0.0023119742295813952
    //   mean = 0.32603837174283751
    std::vector<std::vector<TokenId>> corpus{
        {0, 1, 2, 3, 0, 4, 11}, {0, 5, 2, 3, 0, 4, 12}, {7, 8, 9, 10, 0, 4, 11}};
    double score = self_bleu(corpus);
    CHECK(score == Catch::Approx(0.32603837174283751).margin(1e-9));

    double oracle = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        std::vector<std::vector<TokenId>> refs;
        for (std::size_t j = 0; j < corpus.size(); ++j)
            if (j != i) refs.push_back(corpus[j]);
        oracle += oracle_bleu(corpus[i], refs);
    }
    oracle /= static_cast<double>(corpus.size());
    CHECK(score == Catch::Approx(oracle).margin(1e-9));
}

TEST_CASE("self-bleu is invariant under corpus reordering") {
    Xoshiro256pp rng(17);
    std::vector<std::vector<TokenId>> corpus;
    for (int s = 0; s < 8; ++s) {
        std::vector<TokenId> text;
        for (int i = 0; i < 20; ++i) text.push_back(static_cast<TokenId>(rng.below(12)));
        corpus.push_back(text);
    }
    double base = self_bleu(corpus);
    std::vector<std::vector<TokenId>> shuffled{corpus[5], corpus[2], corpus[7], corpus[0],
                                               corpus[3], corpus[6], corpus[1], corpus[4]};
    CHECK(self_bleu(shuffled) == Catch::Approx(base).margin(1e-15));
}

TEST_CASE("duplicating a corpus text never decreases self-bleu") {
    Xoshiro256pp rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<TokenId>> corpus;
        std::size_t n = 3 + rng.below(5);
        for (std::size_t s = 0; s < n; ++s) {
            std::vector<TokenId> text;
            std::size_t len = 5 + rng.below(15);
            for (std::size_t i = 0; i < len; ++i)
                text.push_back(static_cast<TokenId>(rng.below(10)));
            corpus.push_back(text);
        }
        double before = self_bleu(corpus);
        corpus.push_back(corpus[rng.below(corpus.size())]);
        REQUIRE(self_bleu(corpus) >= before - 1e-12);
    }
}

TEST_CASE("adjusted diversity reproduces the published sweep") {
    // One NC consistent across the three weights: derived from the w=0.3 row,
    // nc = 1 - (0.38 - 0.3*0.16)/0.7.
    const double sb = 0.16;
    const double nc = 1.0 - (0.38 - 0.3 * 0.16) / 0.7;
    CHECK(adjusted_diversity(sb, nc, 0.1) == Catch::Approx(0.44).margin(0.005));
    CHECK(adjusted_diversity(sb, nc, 0.3) == Catch::Approx(0.38).margin(0.005));
    CHECK(adjusted_diversity(sb, nc, 0.7) == Catch::Approx(0.25).margin(0.005));
}

TEST_CASE("adjusted diversity boundary cases and validation") {
    CHECK(adjusted_diversity(0.5, 1.0, 0.3) == Catch::Approx(0.3 * 0.5).margin(1e-15));
    CHECK(adjusted_diversity(0.0, 0.0, 0.3) == Catch::Approx(0.7).margin(1e-15));
    CHECK_THROWS_AS(adjusted_diversity(1.5, 0.5, 0.3), ConfigError);
    CHECK_THROWS_AS(adjusted_diversity(0.5, -0.1, 0.3), ConfigError);
    CHECK_THROWS_AS(adjusted_diversity(0.5, 0.5, 2.0), ConfigError);
}

TEST_CASE("adjusted diversity equals the affine formula on random triples") {
    Xoshiro256pp rng(29);
    for (int t = 0; t < 10000; ++t) {
        double sb = rng.next_uniform();
        double nc = rng.next_uniform();
        double w = rng.next_uniform();
        REQUIRE(adjusted_diversity(sb, nc, w) == w * sb + (1.0 - w) * (1.0 - nc));
    }
}

TEST_CASE("relative decrease arithmetic") {
    CHECK(relative_decrease(80.0, 60.0) == Catch::Approx(25.0).epsilon(1e-12));
    CHECK(relative_decrease(42.0, 42.0) == 0.0);
    CHECK(relative_decrease(60.0, 80.0) == Catch::Approx(-100.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(relative_decrease(0.0, 1.0), ConfigError);
}

TEST_CASE("soft-win tabulation") {
    SECTION("published fixture: hard 0.42, tie 0.05 -> soft 0.47") {
        std::vector<JudgeVerdict> verdicts;
        for (int i = 0; i < 42; ++i) verdicts.push_back(verdict_of(JudgeWinner::kA));
        for (int i = 0; i < 5; ++i) verdicts.push_back(verdict_of(JudgeWinner::kTie));
        for (int i = 0; i < 53; ++i) verdicts.push_back(verdict_of(JudgeWinner::kB));
        WinTabulation t = tabulate_wins(verdicts, JudgeWinner::kA);
        CHECK(t.hard_win == 0.42);
        CHECK(t.tie == 0.05);
        CHECK(t.soft_win == 0.47);
        CHECK(t.failures == 0);
    }
    SECTION("all ties") {
        std::vector<JudgeVerdict> verdicts(10, verdict_of(JudgeWinner::kTie));
        WinTabulation t = tabulate_wins(verdicts, JudgeWinner::kB);
        CHECK(t.hard_win == 0.0);
        CHECK(t.soft_win == 1.0);
    }
    SECTION("hand-counted mixed list") {
        std::vector<JudgeVerdict> verdicts{
            verdict_of(JudgeWinner::kA),   verdict_of(JudgeWinner::kB),
            verdict_of(JudgeWinner::kTie), verdict_of(JudgeWinner::kA),
            verdict_of(JudgeWinner::kB),   verdict_of(JudgeWinner::kFailure),
            verdict_of(JudgeWinner::kA),   verdict_of(JudgeWinner::kTie),
            verdict_of(JudgeWinner::kB),   verdict_of(JudgeWinner::kB)};
        WinTabulation t = tabulate_wins(verdicts, JudgeWinner::kA);
        CHECK(t.counted == 9);
        CHECK(t.failures == 1);
        CHECK(t.hard_win == Catch::Approx(3.0 / 9.0));
        CHECK(t.tie == Catch::Approx(2.0 / 9.0));
        CHECK(t.soft_win == Catch::Approx(5.0 / 9.0));
    }
    SECTION("soft = hard + tie on random fixtures") {
        Xoshiro256pp rng(31);
        for (int trial = 0; trial < 1000; ++trial) {
            std::vector<JudgeVerdict> verdicts;
            std::size_t n = 1 + rng.below(50);
            for (std::size_t i = 0; i < n; ++i) {
                switch (rng.below(4)) {
                    case 0: verdicts.push_back(verdict_of(JudgeWinner::kA)); break;
                    case 1: verdicts.push_back(verdict_of(JudgeWinner::kB)); break;
                    case 2: verdicts.push_back(verdict_of(JudgeWinner::kTie)); break;
                    default: verdicts.push_back(verdict_of(JudgeWinner::kFailure)); break;
                }
            }
            WinTabulation t = tabulate_wins(verdicts, JudgeWinner::kA);
            REQUIRE(t.soft_win == t.hard_win + t.tie);
        }
    }
    SECTION("errors") {
        CHECK_THROWS_AS(tabulate_wins({}, JudgeWinner::kA), ConfigError);
        CHECK_THROWS_AS(tabulate_wins({verdict_of(JudgeWinner::kA)}, JudgeWinner::kTie),
                        ConfigError);
    }
}

TEST_CASE("normalized coherency maps the 1-10 scale onto [0,1]") {
    CHECK(normalize_coherency(1.0) == 0.0);
    CHECK(normalize_coherency(10.0) == 1.0);
    CHECK(normalize_coherency(5.5) == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(normalize_coherency(42.0) == 1.0);  // clamped
}
