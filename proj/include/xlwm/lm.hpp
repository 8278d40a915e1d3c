#pragma once

// Pluggable next-token distribution provider plus the deterministic n-gram
// toy model that stands in for a real LLM at desk scale.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "xlwm/common.hpp"
#include "xlwm/core.hpp"

namespace xlwm {

// Natural-log-domain scores over the full vocabulary.
struct LogitVector {
    std::vector<double> scores;

    std::size_t size() const { return scores.size(); }
};

inline std::vector<double> softmax(std::span<const double> scores) {
    double max_score = -std::numeric_limits<double>::infinity();
    for (double s : scores) max_score = std::max(max_score, s);
    std::vector<double> probs(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        probs[i] = std::exp(scores[i] - max_score);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

class LanguageModel {
  public:
    virtual ~LanguageModel() = default;
    virtual LogitVector next_logits(std::span<const TokenId> context) const = 0;
    virtual std::size_t vocab_size() const = 0;
};

// Add-k smoothed n-gram model. Rows for unseen contexts fall back to the
// uniform distribution; every row is a proper distribution by construction.
class ToyLM final : public LanguageModel {
  public:
    ToyLM(std::size_t vocab_size, int order, double smoothing_k)
        : vocab_size_(vocab_size), order_(order), smoothing_k_(smoothing_k) {
        if (order_ < 1 || order_ > 4) throw ConfigError("toy LM order must be in [1,4]");
        if (smoothing_k_ <= 0.0) throw ConfigError("smoothing_k must be > 0");
        if (vocab_size_ == 0) throw ConfigError("vocab size must be > 0");
    }

    std::size_t vocab_size() const override { return vocab_size_; }
    int order() const { return order_; }
    double smoothing_k() const { return smoothing_k_; }

    // Ids listed here get a large negative logit instead of smoothing mass
    // (used to keep the reserved end-of-text id out of random continuations).
    void ban_ids(std::vector<TokenId> ids) { banned_ = std::move(ids); }
    const std::vector<TokenId>& banned_ids() const { return banned_; }

    void count(std::span<const TokenId> context, TokenId target) {
        Row& row = table_[key_of(context)];
        row.counts[target] += 1;
        row.total += 1;
    }

    LogitVector next_logits(std::span<const TokenId> context) const override {
        for (TokenId id : context)
            if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_)
                throw ConfigError("context token out of range for model vocabulary");
        std::size_t width = std::min<std::size_t>(context.size(), static_cast<std::size_t>(order_ - 1));
        std::span<const TokenId> tail = context.subspan(context.size() - width, width);

        LogitVector out;
        const Row* row = nullptr;
        auto it = table_.find(key_of(tail));
        if (it != table_.end()) row = &it->second;

        double total = row ? static_cast<double>(row->total) : 0.0;
        double denom = total + smoothing_k_ * static_cast<double>(vocab_size_);
        double floor_log = std::log(smoothing_k_ / denom);
        out.scores.assign(vocab_size_, floor_log);
        if (row) {
            for (const auto& [tok, c] : row->counts)
                out.scores[static_cast<std::size_t>(tok)] =
                    std::log((static_cast<double>(c) + smoothing_k_) / denom);
        }
        for (TokenId id : banned_) {
            // Finite but negligible: ~e^-46 relative to the uniform floor.
            out.scores[static_cast<std::size_t>(id)] = floor_log - 46.0;
        }
        return out;
    }

    std::size_t context_count() const { return table_.size(); }

    // Structured text serialization with a fixed field order; reloading
    // reproduces the table byte-for-byte.
    std::string serialize() const {
        std::ostringstream out;
        out << "toylm 1\n";
        out << "vocab_size " << vocab_size_ << "\n";
        out << "order " << order_ << "\n";
        out << "smoothing_k " << format_g12(smoothing_k_) << "\n";
        out << "banned";
        for (TokenId id : banned_) out << " " << id;
        out << "\n";
        out << "contexts " << table_.size() << "\n";
        for (const auto& [key, row] : table_) {
            out << "ctx";
            for (TokenId id : key) out << " " << id;
            out << " :";
            for (const auto& [tok, c] : row.counts) out << " " << tok << " " << c;
            out << "\n";
        }
        return out.str();
    }

    static ToyLM deserialize(const std::string& text) {
        std::istringstream in(text);
        std::string tag;
        int version = 0;
        in >> tag >> version;
        if (tag != "toylm" || version != 1) throw ConfigError("bad toy LM file header");
        std::size_t vocab_size = 0;
        int order = 0;
        double k = 0;
        std::string field;
        in >> field >> vocab_size >> field >> order >> field >> k;
        ToyLM lm(vocab_size, order, k);
        in >> field;  // "banned"
        std::string rest;
        std::getline(in, rest);
        {
            std::istringstream bs(rest);
            TokenId id;
            while (bs >> id) lm.banned_.push_back(id);
        }
        std::size_t n_ctx = 0;
        in >> field >> n_ctx;
        for (std::size_t c = 0; c < n_ctx; ++c) {
            in >> field;  // "ctx"
            if (field != "ctx") throw ConfigError("bad toy LM context line");
            std::vector<TokenId> key;
            std::string tokstr;
            while (in >> tokstr && tokstr != ":") key.push_back(std::stoi(tokstr));
            Row& row = lm.table_[key];
            std::string line;
            std::getline(in, line);
            std::istringstream ls(line);
            TokenId tok;
            std::uint64_t cnt;
            while (ls >> tok >> cnt) {
                row.counts[tok] = cnt;
                row.total += cnt;
            }
        }
        return lm;
    }

  private:
    struct Row {
        std::map<TokenId, std::uint64_t> counts;
        std::uint64_t total = 0;
    };

    static std::vector<TokenId> key_of(std::span<const TokenId> ctx) {
        return std::vector<TokenId>(ctx.begin(), ctx.end());
    }

    std::size_t vocab_size_;
    int order_;
    double smoothing_k_;
    std::vector<TokenId> banned_;
    std::map<std::vector<TokenId>, Row> table_;
};

// Counts every n-gram (and the shorter prefixes at sequence starts) so the
// first tokens of a text still condition on whatever context exists.
inline ToyLM train_toy_lm(const std::vector<TokenSequence>& corpus, std::size_t vocab_size,
                          int order, double smoothing_k) {
    if (corpus.empty()) throw ConfigError("toy LM training corpus is empty");
    ToyLM lm(vocab_size, order, smoothing_k);
    std::size_t ctx_width = static_cast<std::size_t>(order - 1);
    for (const TokenSequence& seq : corpus) {
        for (std::size_t i = 0; i < seq.ids.size(); ++i) {
            std::size_t width = std::min(i, ctx_width);
            lm.count(std::span(seq.ids).subspan(i - width, width), seq.ids[i]);
        }
    }
    return lm;
}

// ---------------------------------------------------------------------------
// Sampling

enum class SampleMode { kGreedy, kMultinomial };

struct SamplerConfig {
    SampleMode mode = SampleMode::kMultinomial;
    double temperature = 1.0;
    std::uint64_t rng_seed = 0;
};

inline TokenId argmax_token(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;  // ties keep the lowest id
    return static_cast<TokenId>(best);
}

// Owns the random stream for one generation; greedy mode never touches it.
class Sampler {
  public:
    explicit Sampler(const SamplerConfig& cfg) : cfg_(cfg), rng_(cfg.rng_seed) {
        if (cfg_.temperature <= 0.0) throw ConfigError("temperature must be > 0");
    }

    TokenId sample(const LogitVector& logits) {
        if (cfg_.mode == SampleMode::kGreedy) return argmax_token(logits.scores);
        std::vector<double> scaled(logits.scores.size());
        for (std::size_t i = 0; i < scaled.size(); ++i)
            scaled[i] = logits.scores[i] / cfg_.temperature;
        std::vector<double> probs = softmax(scaled);
        double u = rng_.next_uniform();
        double cum = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (u < cum) return static_cast<TokenId>(i);
        }
        return static_cast<TokenId>(probs.size() - 1);
    }

  private:
    SamplerConfig cfg_;
    Xoshiro256pp rng_;
};

inline TokenId sample(const LogitVector& logits, const SamplerConfig& cfg) {
    Sampler s(cfg);
    return s.sample(logits);
}

}  // namespace xlwm
