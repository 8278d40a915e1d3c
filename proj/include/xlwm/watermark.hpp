#pragma once

// The four watermark embedding procedures (KGW, Unigram, EXP, XSIR), each
// wrapping one LM decode step, plus the generation loop that records what
// detection and quality evaluation need later.

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xlwm/cluster.hpp"
#include "xlwm/common.hpp"
#include "xlwm/core.hpp"
#include "xlwm/embed.hpp"
#include "xlwm/lm.hpp"

namespace xlwm {

enum class Method { kNone, kKgw, kUnigram, kExp, kXsir };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::kNone: return "none";
        case Method::kKgw: return "kgw";
        case Method::kUnigram: return "unigram";
        case Method::kExp: return "exp";
        case Method::kXsir: return "xsir";
    }
    return "?";
}

inline Method method_from_name(std::string_view name) {
    if (name == "none") return Method::kNone;
    if (name == "kgw") return Method::kKgw;
    if (name == "unigram") return Method::kUnigram;
    if (name == "exp") return Method::kExp;
    if (name == "xsir") return Method::kXsir;
    throw ConfigError("unknown watermark method: " + std::string(name));
}

struct KgwParams {
    double gamma = 0.5;
    double delta = 2.0;
    int context_width = 1;  // lefthash over the previous token by default

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in (0,1)");
        if (delta < 0.0) throw ConfigError("delta must be >= 0");
        if (context_width < 1) throw ConfigError("context_width must be >= 1");
    }
};

struct UnigramParams {
    double gamma = 0.5;
    double delta = 2.0;

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in (0,1)");
        if (delta < 0.0) throw ConfigError("delta must be >= 0");
    }
};

struct ExpParams {
    int context_width = 4;

    void validate() const {
        if (context_width < 1) throw ConfigError("context_width must be >= 1");
    }
};

struct XsirParams {
    double delta = 2.0;
    int chunk_width = 10;
    const ClusterMap* clusters = nullptr;
    const TextEmbedder* embedder = nullptr;

    void validate() const {
        if (delta < 0.0) throw ConfigError("delta must be >= 0");
        if (chunk_width < 1) throw ConfigError("chunk_width must be >= 1");
        if (!clusters || !clusters->has_vocab_map())
            throw ConfigError("xsir requires a cluster map covering the vocabulary");
        if (!embedder) throw ConfigError("xsir requires an embedder");
    }
};

// Per-step green/red membership over the vocabulary.
struct PartitionMask {
    std::vector<char> green;

    std::size_t count_green() const {
        std::size_t n = 0;
        for (char g : green) n += static_cast<unsigned char>(g);
        return n;
    }
};

inline std::size_t green_list_size(double gamma, std::size_t vocab_size) {
    return static_cast<std::size_t>(std::llround(gamma * static_cast<double>(vocab_size)));
}

// Seeded permutation of token ids; the first round(gamma*|v|) ids are green.
inline PartitionMask seeded_mask(const KeyedSeed& seed, double gamma, std::size_t vocab_size) {
    std::vector<TokenId> perm(vocab_size);
    std::iota(perm.begin(), perm.end(), 0);
    Xoshiro256pp rng = seeded_rng(seed);
    for (std::size_t i = vocab_size - 1; i > 0; --i) {
        std::size_t j = rng.below(i + 1);
        std::swap(perm[i], perm[j]);
    }
    PartitionMask mask;
    mask.green.assign(vocab_size, 0);
    std::size_t n_green = green_list_size(gamma, vocab_size);
    for (std::size_t i = 0; i < n_green; ++i) mask.green[static_cast<std::size_t>(perm[i])] = 1;
    return mask;
}

inline PartitionMask kgw_mask(const SecretKey& key, std::span<const TokenId> prev_window,
                              const KgwParams& params, std::size_t vocab_size) {
    return seeded_mask(context_seed(key, prev_window), params.gamma, vocab_size);
}

// Position-independent: the partition depends on the key alone.
inline PartitionMask unigram_mask(const SecretKey& key, double gamma, std::size_t vocab_size) {
    return seeded_mask(context_seed(key, {}), gamma, vocab_size);
}

inline LogitVector apply_soft_bias(const LogitVector& logits, const PartitionMask& mask,
                                   double delta) {
    if (logits.size() != mask.green.size()) throw InternalError("mask/logits size mismatch");
    LogitVector out = logits;
    for (std::size_t i = 0; i < out.scores.size(); ++i)
        if (mask.green[i]) out.scores[i] += delta;
    return out;
}

// argmax_i r_i^(1/p_i), evaluated in the log domain as argmax_i log(r_i)/p_i
// for numerical stability. Zero-probability tokens never win.
inline TokenId exp_argmax(std::span<const double> probs, std::span<const double> r) {
    if (probs.size() != r.size()) throw InternalError("probs/r size mismatch");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        double score = std::log(r[i]) / probs[i];
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return static_cast<TokenId>(best);
}

// Exponential-minimum sampling with keyed uniforms; distortion-free in
// expectation over keys.
inline TokenId exp_sample(const SecretKey& key, std::span<const TokenId> prev_window,
                          std::span<const double> probs) {
    std::vector<double> r = keyed_uniforms(context_seed(key, prev_window), probs.size());
    return exp_argmax(probs, r);
}

// ---------------------------------------------------------------------------
// XSIR step bias

// Signs for one generation step: one sign per semantic cluster, every token
// of a cluster sharing it.
struct XsirStepSigns {
    std::vector<std::int8_t> cluster_sign;  // +1 / -1 per cluster index

    int sign_of_token(const ClusterMap& cm, TokenId id) const {
        return cluster_sign[static_cast<std::size_t>(cm.token_cluster(id))];
    }
};

// Derives the per-cluster bias signs for a prefix. The trailing chunk of the
// prefix is canonicalized to cluster representative words, embedded, and
// quantized by a keyed 64-hyperplane sign signature; the signature seeds the
// sign stream. Prefixes whose chunks land in the same signature cell receive
// identical bias vectors, and same-cluster token substitutions never change
// the chunk canonicalization.
class XsirBiaser {
  public:
    XsirBiaser(const SecretKey& key, XsirParams params, const Vocabulary* vocab)
        : key_(key), params_(params), vocab_(vocab) {
        params_.validate();
        if (!vocab_) throw ConfigError("xsir requires a vocabulary");
        std::size_t dim = params_.embedder->dimension();
        Xoshiro256pp rng = seeded_rng(labeled_seed(key_, "xsir/hyperplanes"));
        planes_.assign(64, std::vector<double>(dim));
        for (auto& plane : planes_)
            for (double& x : plane) x = rng.next_uniform() - 0.5;
    }

    const XsirParams& params() const { return params_; }

    std::uint64_t chunk_signature(std::span<const TokenId> prefix) const {
        std::size_t take = std::min<std::size_t>(prefix.size(),
                                                 static_cast<std::size_t>(params_.chunk_width));
        std::vector<std::string> words;
        words.reserve(take);
        for (std::size_t i = prefix.size() - take; i < prefix.size(); ++i) {
            int c = params_.clusters->token_cluster(prefix[i]);
            words.push_back(params_.clusters->cluster_word(c));
        }
        std::vector<double> v = params_.embedder->embed(join(words, " "));
        std::uint64_t sig = 0;
        for (std::size_t j = 0; j < planes_.size(); ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < v.size(); ++d) dot += v[d] * planes_[j][d];
            if (dot >= 0.0) sig |= 1ull << j;
        }
        return sig;
    }

    XsirStepSigns step_signs(std::span<const TokenId> prefix) const {
        std::uint64_t sig = chunk_signature(prefix);
        Sha256 h;
        h.update(key_.bytes);
        h.update("xsir/step");
        std::uint8_t le[8];
        for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(sig >> (8 * i));
        h.update(le, 8);
        Xoshiro256pp rng = rng_from_digest(h.finalize());
        XsirStepSigns signs;
        signs.cluster_sign.resize(static_cast<std::size_t>(params_.clusters->cluster_count()));
        for (auto& s : signs.cluster_sign) s = (rng.next_u64() & 1) ? 1 : -1;
        return signs;
    }

    // Signed bias over the vocabulary: delta * sign(cluster(token)).
    std::vector<double> bias_vector(std::span<const TokenId> prefix) const {
        XsirStepSigns signs = step_signs(prefix);
        const std::vector<int>& vc = params_.clusters->vocab_clusters();
        std::vector<double> bias(vc.size());
        for (std::size_t i = 0; i < vc.size(); ++i)
            bias[i] = params_.delta *
                      static_cast<double>(signs.cluster_sign[static_cast<std::size_t>(vc[i])]);
        return bias;
    }

  private:
    SecretKey key_;
    XsirParams params_;
    const Vocabulary* vocab_;
    std::vector<std::vector<double>> planes_;
};

inline std::vector<double> xsir_step_bias(const SecretKey& key, const TokenSequence& prefix,
                                          const XsirParams& params, const Vocabulary& vocab) {
    XsirBiaser biaser(key, params, &vocab);
    return biaser.bias_vector(prefix.ids);
}

// ---------------------------------------------------------------------------
// Generation

// Everything needed to replay detection and compute quality metrics from the
// record alone: prompt, output, the unbiased realized-token probabilities,
// and the per-step watermark trace.
struct GenerationRecord {
    TokenSequence prompt;
    TokenSequence output;
    std::vector<double> per_step_prob;  // unbiased model prob of each realized token
    Method method = Method::kNone;
    double gamma = 0.0;
    double delta = 0.0;
    int context_width = 0;
    int chunk_width = 0;
    std::string key_hex;
    std::uint64_t rng_seed = 0;
    std::vector<char> trace_green;   // KGW/Unigram/XSIR: sampled token in green / +1 cluster
    std::vector<double> trace_r;     // EXP: keyed uniform of the realized token
};

class Watermarker {
  public:
    virtual ~Watermarker() = default;

    struct StepOutcome {
        TokenId token;
        std::optional<bool> green;  // mask methods and XSIR
        std::optional<double> r;    // EXP
    };

    virtual StepOutcome step(const LogitVector& logits, std::span<const TokenId> context,
                             Sampler& sampler) const = 0;
    virtual Method method() const = 0;
    virtual void fill_params(GenerationRecord&) const {}
};

class PlainDecoder final : public Watermarker {
  public:
    StepOutcome step(const LogitVector& logits, std::span<const TokenId>,
                     Sampler& sampler) const override {
        return {sampler.sample(logits), std::nullopt, std::nullopt};
    }
    Method method() const override { return Method::kNone; }
};

class KgwWatermarker final : public Watermarker {
  public:
    KgwWatermarker(const SecretKey& key, KgwParams params, std::size_t vocab_size, TokenId pad_id)
        : key_(key), params_(params), vocab_size_(vocab_size), pad_id_(pad_id) {
        params_.validate();
    }

    StepOutcome step(const LogitVector& logits, std::span<const TokenId> context,
                     Sampler& sampler) const override {
        std::vector<TokenId> window = trailing_window(
            context, context.size(), static_cast<std::size_t>(params_.context_width), pad_id_);
        PartitionMask mask = kgw_mask(key_, window, params_, vocab_size_);
        TokenId tok = sampler.sample(apply_soft_bias(logits, mask, params_.delta));
        return {tok, mask.green[static_cast<std::size_t>(tok)] != 0, std::nullopt};
    }

    Method method() const override { return Method::kKgw; }
    void fill_params(GenerationRecord& rec) const override {
        rec.gamma = params_.gamma;
        rec.delta = params_.delta;
        rec.context_width = params_.context_width;
    }

  private:
    SecretKey key_;
    KgwParams params_;
    std::size_t vocab_size_;
    TokenId pad_id_;
};

class UnigramWatermarker final : public Watermarker {
  public:
    UnigramWatermarker(const SecretKey& key, UnigramParams params, std::size_t vocab_size)
        : params_(params), mask_(unigram_mask(key, params.gamma, vocab_size)) {
        params_.validate();
    }

    StepOutcome step(const LogitVector& logits, std::span<const TokenId>,
                     Sampler& sampler) const override {
        TokenId tok = sampler.sample(apply_soft_bias(logits, mask_, params_.delta));
        return {tok, mask_.green[static_cast<std::size_t>(tok)] != 0, std::nullopt};
    }

    Method method() const override { return Method::kUnigram; }
    void fill_params(GenerationRecord& rec) const override {
        rec.gamma = params_.gamma;
        rec.delta = params_.delta;
    }
    const PartitionMask& mask() const { return mask_; }

  private:
    UnigramParams params_;
    PartitionMask mask_;
};

class ExpWatermarker final : public Watermarker {
  public:
    ExpWatermarker(const SecretKey& key, ExpParams params, TokenId pad_id)
        : key_(key), params_(params), pad_id_(pad_id) {
        params_.validate();
    }

    // EXP replaces sampling entirely; the sampler config is unused.
    StepOutcome step(const LogitVector& logits, std::span<const TokenId> context,
                     Sampler&) const override {
        std::vector<double> probs = softmax(logits.scores);
        std::vector<TokenId> window = trailing_window(
            context, context.size(), static_cast<std::size_t>(params_.context_width), pad_id_);
        std::vector<double> r = keyed_uniforms(context_seed(key_, window), probs.size());
        TokenId tok = exp_argmax(probs, r);
        return {tok, std::nullopt, r[static_cast<std::size_t>(tok)]};
    }

    Method method() const override { return Method::kExp; }
    void fill_params(GenerationRecord& rec) const override {
        rec.context_width = params_.context_width;
    }

  private:
    SecretKey key_;
    ExpParams params_;
    TokenId pad_id_;
};

class XsirWatermarker final : public Watermarker {
  public:
    XsirWatermarker(const SecretKey& key, XsirParams params, const Vocabulary* vocab)
        : biaser_(key, params, vocab) {}

    StepOutcome step(const LogitVector& logits, std::span<const TokenId> context,
                     Sampler& sampler) const override {
        XsirStepSigns signs = biaser_.step_signs(context);
        const std::vector<int>& vc = biaser_.params().clusters->vocab_clusters();
        LogitVector biased = logits;
        for (std::size_t i = 0; i < biased.scores.size(); ++i)
            biased.scores[i] += biaser_.params().delta *
                                static_cast<double>(signs.cluster_sign[static_cast<std::size_t>(vc[i])]);
        TokenId tok = sampler.sample(biased);
        bool positive = signs.cluster_sign[static_cast<std::size_t>(vc[static_cast<std::size_t>(tok)])] > 0;
        return {tok, positive, std::nullopt};
    }

    Method method() const override { return Method::kXsir; }
    void fill_params(GenerationRecord& rec) const override {
        rec.delta = biaser_.params().delta;
        rec.chunk_width = biaser_.params().chunk_width;
        rec.gamma = 0.5;  // XSIR always splits the vocabulary in half
    }
    const XsirBiaser& biaser() const { return biaser_; }

  private:
    XsirBiaser biaser_;
};

// Runs one generation stream. Per-step probabilities are read from the
// unbiased model distribution, mirroring how a separate evaluation model
// would perceive the text. Generation stops at max_new_tokens or at eot_id.
inline GenerationRecord generate(const LanguageModel& model, const Watermarker& wm,
                                 const TokenSequence& prompt, std::size_t max_new_tokens,
                                 const SamplerConfig& sampler_cfg, TokenId eot_id = -1) {
    if (prompt.empty()) throw ConfigError("prompt must be non-empty");
    if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");

    GenerationRecord rec;
    rec.prompt = prompt;
    rec.output.language_tag = prompt.language_tag;
    rec.method = wm.method();
    rec.rng_seed = sampler_cfg.rng_seed;
    wm.fill_params(rec);

    Sampler sampler(sampler_cfg);
    std::vector<TokenId> context = prompt.ids;
    for (std::size_t step = 0; step < max_new_tokens; ++step) {
        LogitVector logits = model.next_logits(context);
        std::vector<double> probs = softmax(logits.scores);
        Watermarker::StepOutcome out = wm.step(logits, context, sampler);
        rec.output.ids.push_back(out.token);
        rec.per_step_prob.push_back(probs[static_cast<std::size_t>(out.token)]);
        if (out.green.has_value()) rec.trace_green.push_back(*out.green ? 1 : 0);
        if (out.r.has_value()) rec.trace_r.push_back(*out.r);
        context.push_back(out.token);
        if (eot_id >= 0 && out.token == eot_id) break;
    }
    return rec;
}

}  // namespace xlwm
