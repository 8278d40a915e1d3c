#pragma once

// Text embedding provider interface plus the built-in deterministic mock.
// Real multilingual embedding services plug in behind TextEmbedder; the mock
// keeps the full pipeline runnable offline.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xlwm/common.hpp"

namespace xlwm {

class TextEmbedder {
  public:
    virtual ~TextEmbedder() = default;
    virtual std::vector<double> embed(std::string_view text) const = 0;
    virtual std::size_t dimension() const = 0;
};

// Hashed character n-gram embedding, fixed dimension 256. N-grams are taken
// inside whitespace-separated words only, so the embedding is a bag of word
// features: reordering the words of a text leaves the vector unchanged.
class HashedNgramEmbedder final : public TextEmbedder {
  public:
    static constexpr std::size_t kDim = 256;
    static constexpr int kMaxN = 3;

    std::vector<double> embed(std::string_view text) const override {
        std::vector<double> v(kDim, 0.0);
        for (const std::string& word : split_whitespace(text)) {
            for (int n = 1; n <= kMaxN; ++n) {
                if (word.size() < static_cast<std::size_t>(n)) break;
                for (std::size_t i = 0; i + n <= word.size(); ++i)
                    v[fnv1a(word.data() + i, static_cast<std::size_t>(n)) % kDim] += 1.0;
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
        }
        return v;
    }

    std::size_t dimension() const override { return kDim; }

  private:
    static std::uint64_t fnv1a(const char* data, std::size_t n) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(data[i]);
            h *= 0x100000001b3ull;
        }
        return h;
    }
};

}  // namespace xlwm
