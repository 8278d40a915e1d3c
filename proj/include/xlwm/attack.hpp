#pragma once

// Attack channels and pipeline composition. Offline channels transform
// whitespace-tokenizable surface text and the caller re-tokenizes, so
// detectors are exercised through the full text -> tokens path. External
// MT/paraphrase services sit behind a thin HTTP adapter with response
// caching keyed by request digest.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xlwm/common.hpp"
#include "xlwm/core.hpp"
#include "xlwm/detect.hpp"
#include "xlwm/net.hpp"
#include "xlwm/watermark.hpp"

namespace xlwm {

enum class ChannelKind {
    kIdentity,
    kLexiconTranslate,
    kSynonymParaphrase,
    kExternalMt,
    kExternalParaphrase,
};

inline std::string channel_kind_name(ChannelKind k) {
    switch (k) {
        case ChannelKind::kIdentity: return "identity";
        case ChannelKind::kLexiconTranslate: return "lexicon_translate";
        case ChannelKind::kSynonymParaphrase: return "synonym_paraphrase";
        case ChannelKind::kExternalMt: return "external_mt";
        case ChannelKind::kExternalParaphrase: return "external_paraphrase";
    }
    return "?";
}

// Word-for-word translation table; the offline stand-in for an MT service.
struct BilingualLexicon {
    std::unordered_map<std::string, std::string> forward;
    bool bijective = false;

    static BilingualLexicon from_tsv(const std::string& path) {
        BilingualLexicon lex;
        std::unordered_map<std::string, std::string> reverse;
        bool invertible = true;
        std::size_t line_no = 0;
        for (const std::string& raw : split_on(read_file(path), '\n')) {
            ++line_no;
            if (raw.empty() || raw[0] == '#') continue;
            std::string line = raw;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto fields = split_on(line, '\t');
            if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
                throw ConfigError("malformed lexicon line at " + path + ":" +
                                  std::to_string(line_no));
            if (lex.forward.count(fields[0]) || reverse.count(fields[1])) invertible = false;
            lex.forward.emplace(fields[0], fields[1]);
            reverse.emplace(fields[1], fields[0]);
        }
        lex.bijective = invertible;
        return lex;
    }

    BilingualLexicon inverted() const {
        if (!bijective) throw ConfigError("cannot invert a non-bijective lexicon");
        BilingualLexicon out;
        out.bijective = true;
        for (const auto& [a, b] : forward) out.forward.emplace(b, a);
        return out;
    }
};

// Same-language synonym groups; every member maps to its alternatives.
struct SynonymTable {
    std::unordered_map<std::string, std::vector<std::string>> alternatives;

    static SynonymTable from_tsv(const std::string& path) {
        SynonymTable table;
        for (const std::string& raw : split_on(read_file(path), '\n')) {
            if (raw.empty() || raw[0] == '#') continue;
            std::string line = raw;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto members = split_on(line, '\t');
            if (members.size() < 2) continue;
            for (std::size_t i = 0; i < members.size(); ++i) {
                std::vector<std::string> others;
                for (std::size_t j = 0; j < members.size(); ++j)
                    if (j != i) others.push_back(members[j]);
                table.alternatives.emplace(members[i], std::move(others));
            }
        }
        return table;
    }
};

// HTTP adapter for external MT/paraphrase services. Protocol: POST JSON
// {text, source_lang, target_lang} -> {text}. Responses are cached on disk
// under digest-named files so reruns stay offline.
class ExternalChannelClient {
  public:
    ExternalChannelClient(std::string host, int port, std::string endpoint = "/translate",
                          int timeout_ms = 5000, int retries = 2, std::string cache_dir = "")
        : host_(std::move(host)), port_(port), endpoint_(std::move(endpoint)),
          timeout_ms_(timeout_ms), retries_(retries), cache_dir_(std::move(cache_dir)) {}

    std::string transform(const std::string& text, const std::string& src,
                          const std::string& dst) const;

    std::string cache_file(const std::string& text, const std::string& src,
                           const std::string& dst) const {
        std::string key = endpoint_ + "\x1f" + src + "\x1f" + dst + "\x1f" + text;
        return cache_dir_ + "/" + sha256_hex(key) + ".json";
    }

  private:
    std::string host_;
    int port_;
    std::string endpoint_;
    int timeout_ms_;
    int retries_;
    std::string cache_dir_;
};

struct Channel {
    ChannelKind kind = ChannelKind::kIdentity;
    std::string src_lang;
    std::string dst_lang;
    double strength = 1.0;  // fraction of eligible words transformed
    std::uint64_t rng_seed = 0;
    double dropout = 0.0;  // extra seeded word dropout ("edit" stages)
    const BilingualLexicon* lexicon = nullptr;
    const SynonymTable* synonyms = nullptr;
    const ExternalChannelClient* client = nullptr;
};

struct ChannelLog {
    ChannelKind kind = ChannelKind::kIdentity;
    std::size_t eligible = 0;
    std::size_t substituted = 0;
    std::size_t dropped = 0;
    std::string request_digest;  // external channels only
};

struct ChannelResult {
    std::string text;
    ChannelLog log;
};

namespace detail {

// Stream seeded by the channel seed and the input text; the same (seed,
// input) pair always picks the same positions.
inline Xoshiro256pp channel_rng(const Channel& ch, std::string_view text) {
    Sha256 h;
    h.update("channel");
    std::uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(ch.rng_seed >> (8 * i));
    h.update(le, 8);
    h.update(text);
    return rng_from_digest(h.finalize());
}

// First k of a seeded permutation of `indices`.
inline std::vector<std::size_t> pick_positions(std::vector<std::size_t> indices, std::size_t k,
                                               Xoshiro256pp& rng) {
    for (std::size_t i = 0; i < k && i + 1 < indices.size(); ++i) {
        std::size_t j = i + rng.below(indices.size() - i);
        std::swap(indices[i], indices[j]);
    }
    indices.resize(std::min(k, indices.size()));
    return indices;
}

}  // namespace detail

inline ChannelResult apply_channel(const std::string& text, const Channel& ch,
                                   int stage_index = -1) {
    if (ch.strength < 0.0 || ch.strength > 1.0) throw ConfigError("channel strength outside [0,1]");
    ChannelResult result;
    result.log.kind = ch.kind;

    if (ch.kind == ChannelKind::kIdentity || ch.strength == 0.0) {
        result.text = text;
        return result;
    }

    if (ch.kind == ChannelKind::kExternalMt || ch.kind == ChannelKind::kExternalParaphrase) {
        if (!ch.client) throw ConfigError("external channel has no client configured");
        try {
            result.text = ch.client->transform(text, ch.src_lang, ch.dst_lang);
        } catch (const ExternalServiceError& e) {
            throw ExternalServiceError(e.what(), stage_index);
        }
        result.log.request_digest = sha256_hex(text);
        return result;
    }

    std::vector<std::string> words = split_whitespace(text);
    Xoshiro256pp rng = detail::channel_rng(ch, text);

    if (ch.kind == ChannelKind::kLexiconTranslate) {
        if (!ch.lexicon) throw ConfigError("lexicon_translate channel has no lexicon");
        std::vector<std::size_t> eligible;
        for (std::size_t i = 0; i < words.size(); ++i)
            if (ch.lexicon->forward.count(words[i])) eligible.push_back(i);
        result.log.eligible = eligible.size();
        std::size_t k = static_cast<std::size_t>(
            std::llround(ch.strength * static_cast<double>(eligible.size())));
        for (std::size_t i : detail::pick_positions(std::move(eligible), k, rng)) {
            words[i] = ch.lexicon->forward.at(words[i]);
            ++result.log.substituted;
        }
    } else if (ch.kind == ChannelKind::kSynonymParaphrase) {
        if (!ch.synonyms) throw ConfigError("synonym_paraphrase channel has no synonym table");
        std::vector<std::size_t> eligible;
        for (std::size_t i = 0; i < words.size(); ++i)
            if (ch.synonyms->alternatives.count(words[i])) eligible.push_back(i);
        result.log.eligible = eligible.size();
        std::size_t k = static_cast<std::size_t>(
            std::llround(ch.strength * static_cast<double>(eligible.size())));
        for (std::size_t i : detail::pick_positions(std::move(eligible), k, rng)) {
            const auto& alts = ch.synonyms->alternatives.at(words[i]);
            words[i] = alts[rng.below(alts.size())];
            ++result.log.substituted;
        }
        if (ch.dropout > 0.0 && !words.empty()) {
            std::vector<std::size_t> all(words.size());
            std::iota(all.begin(), all.end(), 0);
            std::size_t drop = static_cast<std::size_t>(
                std::llround(ch.dropout * static_cast<double>(words.size())));
            drop = std::min(drop, words.size() - 1);  // never drop everything
            std::vector<std::size_t> chosen = detail::pick_positions(std::move(all), drop, rng);
            std::sort(chosen.rbegin(), chosen.rend());
            for (std::size_t i : chosen) words.erase(words.begin() + static_cast<long>(i));
            result.log.dropped = chosen.size();
        }
    } else {
        throw InternalError("unhandled channel kind");
    }

    result.text = join(words, " ");
    return result;
}

// ---------------------------------------------------------------------------
// Pipelines

enum class AttackMode { kSymmetric, kAsymmetric };

struct AttackPipeline {
    std::vector<Channel> stages;
    std::string shape;       // "T", "T-P", "T-P-T", ...
    std::string path_label;  // e.g. "en->ar" or "en->ar->en"

    // Symmetric iff the text ends up back in its starting language.
    AttackMode mode() const {
        if (stages.empty()) return AttackMode::kSymmetric;
        return stages.front().src_lang == stages.back().dst_lang ? AttackMode::kSymmetric
                                                                 : AttackMode::kAsymmetric;
    }
};

inline std::string attack_mode_name(AttackMode m) {
    return m == AttackMode::kSymmetric ? "symmetric" : "asymmetric";
}

using DetectorFn = std::function<DetectionOutcome(const TokenSequence&)>;

struct PipelineRun {
    std::vector<DetectionOutcome> outcomes;  // [0] = no-attack, then one per stage
    std::vector<std::string> texts;          // aligned with outcomes
    AttackMode mode = AttackMode::kSymmetric;
    std::string path_label;
    std::string shape;
};

// Detection is evaluated through the text -> tokens path after every stage,
// including stage zero (no attack), so restored text scores exactly like the
// original.
inline PipelineRun run_pipeline(const GenerationRecord& record, const AttackPipeline& pipeline,
                                const DetectorFn& detector, const Tokenizer& tokenizer) {
    PipelineRun run;
    run.mode = pipeline.mode();
    run.path_label = pipeline.path_label;
    run.shape = pipeline.shape;

    std::string text = tokenizer.decode(record.output);
    std::string lang = record.output.language_tag;
    run.texts.push_back(text);
    run.outcomes.push_back(detector(tokenizer.encode(text, lang)));
    for (std::size_t k = 0; k < pipeline.stages.size(); ++k) {
        ChannelResult res = apply_channel(text, pipeline.stages[k], static_cast<int>(k));
        text = res.text;
        lang = pipeline.stages[k].dst_lang.empty() ? lang : pipeline.stages[k].dst_lang;
        run.texts.push_back(text);
        run.outcomes.push_back(detector(tokenizer.encode(text, lang)));
    }
    return run;
}

// Channel ingredients for building the standard suite over a language set.
struct ChannelResources {
    // lexicons[{src,dst}] for every ordered pair that will be used
    std::map<std::pair<std::string, std::string>, const BilingualLexicon*> lexicons;
    std::map<std::string, const SynonymTable*> synonyms;
    // Paraphrase edits apply to the text as it stands, which after a partial
    // translation mixes languages; when set, this union table is used for
    // the paraphrase stages instead of the per-language ones.
    const SynonymTable* merged_synonyms = nullptr;
    double translate_strength = 1.0;
    double paraphrase_strength = 0.3;
    double paraphrase_dropout = 0.0;
    std::uint64_t rng_seed = 0;
};

inline SynonymTable merge_synonym_tables(const std::vector<const SynonymTable*>& tables) {
    SynonymTable merged;
    for (const SynonymTable* t : tables)
        for (const auto& [word, alts] : t->alternatives) merged.alternatives[word] = alts;
    return merged;
}

// The three pipeline shapes per ordered language pair: translation (T),
// translation then paraphrase (T-P), and translation, paraphrase, then
// translation back to the original language (T-P-T).
inline std::vector<AttackPipeline> build_standard_suite(const std::vector<std::string>& languages,
                                                        const ChannelResources& res) {
    if (languages.size() < 2)
        throw ConfigError("standard attack suite needs at least 2 languages");
    auto lexicon_for = [&](const std::string& src, const std::string& dst) {
        auto it = res.lexicons.find({src, dst});
        if (it == res.lexicons.end())
            throw ConfigError("no lexicon for language pair " + src + "->" + dst);
        return it->second;
    };
    auto synonyms_for = [&](const std::string& lang) {
        if (res.merged_synonyms) return res.merged_synonyms;
        auto it = res.synonyms.find(lang);
        if (it == res.synonyms.end())
            throw ConfigError("no synonym table for language " + lang);
        return it->second;
    };

    std::vector<AttackPipeline> suite;
    for (const std::string& src : languages) {
        for (const std::string& dst : languages) {
            if (src == dst) continue;
            Channel translate{ChannelKind::kLexiconTranslate, src, dst, res.translate_strength,
                              res.rng_seed, 0.0, lexicon_for(src, dst), nullptr, nullptr};
            Channel paraphrase{ChannelKind::kSynonymParaphrase, dst, dst,
                               res.paraphrase_strength, res.rng_seed + 1,
                               res.paraphrase_dropout, nullptr, synonyms_for(dst), nullptr};
            Channel back{ChannelKind::kLexiconTranslate, dst, src, res.translate_strength,
                         res.rng_seed + 2, 0.0, lexicon_for(dst, src), nullptr, nullptr};

            suite.push_back({{translate}, "T", src + "->" + dst});
            suite.push_back({{translate, paraphrase}, "T-P", src + "->" + dst});
            suite.push_back({{translate, paraphrase, back}, "T-P-T", src + "->" + dst + "->" + src});
        }
    }
    return suite;
}

}  // namespace xlwm
