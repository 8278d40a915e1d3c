#pragma once

// Vocabulary handling, secret keys, keyed deterministic randomness, and the
// built-in tokenizers. Everything downstream (embedding, detection, attacks)
// flows through these types.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xlwm/common.hpp"
#include "xlwm/rng.hpp"
#include "xlwm/sha256.hpp"

namespace xlwm {

enum class NormalizationMode { kRaw, kUnicodeDecoded };

inline std::string normalization_mode_name(NormalizationMode m) {
    return m == NormalizationMode::kRaw ? "raw" : "unicode-decoded";
}

inline NormalizationMode normalization_mode_from_name(std::string_view name) {
    if (name == "raw") return NormalizationMode::kRaw;
    if (name == "unicode-decoded" || name == "unicode_decoded")
        return NormalizationMode::kUnicodeDecoded;
    throw ConfigError("unknown normalization mode: " + std::string(name));
}

// Encodes a Unicode code point as UTF-8.
inline void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

// Decodes \uXXXX (and \\) escape sequences into UTF-8 text. Vocabularies
// exported by some tokenizers store non-ASCII surface forms in this escaped
// shape; matching against plain dictionary words then fails unless the
// escapes are decoded first.
inline std::string decode_unicode_escapes(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    auto hexval = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    while (i < s.size()) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            char n = s[i + 1];
            if (n == '\\') {
                out += '\\';
                i += 2;
                continue;
            }
            if (n == 'u' && i + 5 < s.size()) {
                std::uint32_t cp = 0;
                bool ok = true;
                for (int k = 0; k < 4; ++k) {
                    int v = hexval(s[i + 2 + k]);
                    if (v < 0) { ok = false; break; }
                    cp = cp << 4 | static_cast<std::uint32_t>(v);
                }
                if (ok) {
                    append_utf8(out, cp);
                    i += 6;
                    continue;
                }
            }
        }
        out += s[i++];
    }
    return out;
}

// Dense token-id -> surface-form table. Under kUnicodeDecoded the stored
// lines are escape-decoded before use; under kRaw they are taken verbatim.
class Vocabulary {
  public:
    Vocabulary() = default;
    Vocabulary(std::vector<std::string> lines, NormalizationMode mode)
        : lines_(std::move(lines)), mode_(mode) {}

    // File format: UTF-8 text, one surface form per line, line number = id.
    static Vocabulary from_file(const std::string& path, NormalizationMode mode) {
        std::string content = read_file(path);
        std::vector<std::string> lines;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= content.size(); ++i) {
            if (i == content.size() || content[i] == '\n') {
                std::string_view line(content.data() + start, i - start);
                if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
                if (i < content.size() || !line.empty()) lines.emplace_back(line);
                start = i + 1;
            }
        }
        if (lines.empty()) throw ConfigError("empty vocabulary file: " + path);
        return Vocabulary(std::move(lines), mode);
    }

    std::size_t size() const { return lines_.size(); }
    NormalizationMode mode() const { return mode_; }
    const std::string& raw_line(TokenId id) const { return lines_.at(static_cast<std::size_t>(id)); }

    std::string surface(TokenId id) const {
        const std::string& line = raw_line(id);
        return mode_ == NormalizationMode::kUnicodeDecoded ? decode_unicode_escapes(line) : line;
    }

    // Reserved padding id for positions before the first real context token.
    TokenId sentinel_id() const { return static_cast<TokenId>(lines_.size()); }

    bool contains(TokenId id) const {
        return id >= 0 && static_cast<std::size_t>(id) < lines_.size();
    }

  private:
    std::vector<std::string> lines_;
    NormalizationMode mode_ = NormalizationMode::kRaw;
};

struct TokenSequence {
    std::vector<TokenId> ids;
    std::string language_tag;  // BCP-47-style, e.g. "en"

    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }
};

// Opaque key material; identical bytes imply identical partitions/randoms.
struct SecretKey {
    std::string bytes;

    explicit SecretKey(std::string b) : bytes(std::move(b)) {
        if (bytes.size() < 16) throw ConfigError("secret key must be at least 16 bytes");
    }

    // Derives 32 key bytes from an arbitrary passphrase.
    static SecretKey from_passphrase(std::string_view text) {
        Digest256 d = sha256(text);
        return SecretKey(std::string(reinterpret_cast<const char*>(d.data()), d.size()));
    }

    static SecretKey from_hex(std::string_view hex) {
        auto raw = ::xlwm::from_hex(hex);
        return SecretKey(std::string(reinterpret_cast<const char*>(raw.data()), raw.size()));
    }

    std::string hex() const {
        return to_hex(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
    }
};

struct KeyedSeed {
    Digest256 digest{};
};

// Digest of key bytes followed by each window token id as 64-bit
// little-endian. Equal (key, window) pairs give equal seeds.
inline KeyedSeed context_seed(const SecretKey& key, std::span<const TokenId> window) {
    Sha256 h;
    h.update(key.bytes);
    for (TokenId id : window) {
        std::uint64_t v = static_cast<std::uint64_t>(static_cast<std::uint32_t>(id));
        std::uint8_t le[8];
        for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(v >> (8 * i));
        h.update(le, 8);
    }
    return KeyedSeed{h.finalize()};
}

// Domain-separated variant for auxiliary streams (e.g. hyperplane banks).
inline KeyedSeed labeled_seed(const SecretKey& key, std::string_view label) {
    Sha256 h;
    h.update(key.bytes);
    h.update(label);
    return KeyedSeed{h.finalize()};
}

inline Xoshiro256pp seeded_rng(const KeyedSeed& seed) {
    return rng_from_digest(seed.digest);
}

inline std::vector<double> keyed_uniforms(const KeyedSeed& seed, std::size_t n) {
    if (n == 0) throw std::invalid_argument("keyed_uniforms: n must be >= 1");
    Xoshiro256pp rng = seeded_rng(seed);
    std::vector<double> out(n);
    for (auto& v : out) v = rng.next_uniform();
    return out;
}

// Trailing window of `width` ids ending just before `pos`, left-padded with
// `pad_id` when fewer than `width` tokens precede the position.
inline std::vector<TokenId> trailing_window(std::span<const TokenId> ids, std::size_t pos,
                                            std::size_t width, TokenId pad_id) {
    std::vector<TokenId> window(width, pad_id);
    std::size_t have = std::min(pos, width);
    for (std::size_t i = 0; i < have; ++i)
        window[width - have + i] = ids[pos - have + i];
    return window;
}

// ---------------------------------------------------------------------------
// Tokenizers

class Tokenizer {
  public:
    virtual ~Tokenizer() = default;
    virtual TokenSequence encode(std::string_view text, std::string language_tag = "") const = 0;
    virtual std::string decode(std::span<const TokenId> ids) const = 0;
    virtual const Vocabulary& vocab() const = 0;

    std::string decode(const TokenSequence& seq) const { return decode(std::span(seq.ids)); }
};

// Splits on whitespace and looks surface forms up in a fixed vocabulary.
class WhitespaceTokenizer final : public Tokenizer {
  public:
    using Tokenizer::decode;
    explicit WhitespaceTokenizer(Vocabulary vocab) : vocab_(std::move(vocab)) {
        for (std::size_t id = 0; id < vocab_.size(); ++id)
            index_.emplace(vocab_.surface(static_cast<TokenId>(id)), static_cast<TokenId>(id));
    }

    TokenSequence encode(std::string_view text, std::string language_tag = "") const override {
        TokenSequence seq;
        seq.language_tag = std::move(language_tag);
        for (const std::string& word : split_whitespace(text)) {
            auto it = index_.find(word);
            if (it == index_.end())
                throw ConfigError("word not in vocabulary: '" + word + "'");
            seq.ids.push_back(it->second);
        }
        return seq;
    }

    std::string decode(std::span<const TokenId> ids) const override {
        std::vector<std::string> words;
        words.reserve(ids.size());
        for (TokenId id : ids) words.push_back(vocab_.surface(id));
        return join(words, " ");
    }

    const Vocabulary& vocab() const override { return vocab_; }

  private:
    Vocabulary vocab_;
    std::unordered_map<std::string, TokenId> index_;
};

// Token id = byte value; vocabulary is the 256 single-byte strings.
class ByteTokenizer final : public Tokenizer {
  public:
    using Tokenizer::decode;
    ByteTokenizer() : vocab_(make_byte_vocab()) {}

    TokenSequence encode(std::string_view text, std::string language_tag = "") const override {
        TokenSequence seq;
        seq.language_tag = std::move(language_tag);
        seq.ids.reserve(text.size());
        for (unsigned char c : text) seq.ids.push_back(static_cast<TokenId>(c));
        return seq;
    }

    std::string decode(std::span<const TokenId> ids) const override {
        std::string out;
        out.reserve(ids.size());
        for (TokenId id : ids) {
            if (id < 0 || id > 255) throw ConfigError("byte tokenizer id out of range");
            out += static_cast<char>(static_cast<unsigned char>(id));
        }
        return out;
    }

    const Vocabulary& vocab() const override { return vocab_; }

  private:
    static Vocabulary make_byte_vocab() {
        std::vector<std::string> lines(256);
        for (int i = 0; i < 256; ++i) lines[i] = std::string(1, static_cast<char>(i));
        return Vocabulary(std::move(lines), NormalizationMode::kRaw);
    }

    Vocabulary vocab_;
};

struct TokenizerConfig {
    std::string name;        // "whitespace" | "byte" | "external"
    std::string vocab_path;  // required for whitespace/external
    NormalizationMode mode = NormalizationMode::kRaw;
};

inline std::unique_ptr<Tokenizer> make_tokenizer(const TokenizerConfig& cfg) {
    if (cfg.name == "byte" || cfg.name == "byte-level") return std::make_unique<ByteTokenizer>();
    if (cfg.name == "whitespace" || cfg.name == "external") {
        if (cfg.vocab_path.empty())
            throw ConfigError("tokenizer '" + cfg.name + "' requires a vocabulary file");
        return std::make_unique<WhitespaceTokenizer>(Vocabulary::from_file(cfg.vocab_path, cfg.mode));
    }
    throw ConfigError("unknown tokenizer name: " + cfg.name);
}

// Canonical whitespace normalization; detokenize(tokenize(x)) == normalize(x)
// for the whitespace tokenizer.
inline std::string normalize_whitespace(std::string_view text) {
    return join(split_whitespace(text), " ");
}

}  // namespace xlwm
