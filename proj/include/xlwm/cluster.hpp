#pragma once

// Cross-lingual semantic clusters: connected components of a bilingual
// lexicon graph, mapped onto model vocabularies. The mapping step is where
// tokenizers that store non-ASCII surface forms as escape sequences silently
// lose every non-Latin cluster unless the forms are decoded first; both
// behaviors are available for comparison.

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xlwm/common.hpp"
#include "xlwm/core.hpp"

namespace xlwm {

struct LexiconPair {
    std::string a;
    std::string b;
};

// Reads "word<TAB>word" lines. Blank lines and '#' comments are skipped.
inline std::vector<LexiconPair> read_lexicon_pairs(const std::string& path) {
    std::string content = read_file(path);
    std::vector<LexiconPair> pairs;
    std::size_t line_no = 0;
    for (const std::string& line : split_on(content, '\n')) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::string stripped = line;
        if (!stripped.empty() && stripped.back() == '\r') stripped.pop_back();
        if (stripped.empty()) continue;
        auto fields = split_on(stripped, '\t');
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
            throw ConfigError("malformed lexicon pair at " + path + ":" + std::to_string(line_no));
        pairs.push_back({fields[0], fields[1]});
    }
    return pairs;
}

// Word -> cluster index (dense), plus token id -> cluster index once a
// vocabulary has been mapped on. Cluster ids are canonical: ordered by the
// lexicographically smallest member word.
class ClusterMap {
  public:
    static ClusterMap build(const std::vector<LexiconPair>& pairs) {
        if (pairs.empty()) throw ConfigError("cannot build clusters from an empty lexicon");
        ClusterMap cm;
        std::unordered_map<std::string, int> node_id;
        std::vector<std::string> words;
        auto intern = [&](const std::string& w) {
            auto [it, inserted] = node_id.emplace(w, static_cast<int>(words.size()));
            if (inserted) words.push_back(w);
            return it->second;
        };
        std::vector<int> parent;
        std::vector<int> rank;
        auto find = [&](int x) {
            while (parent[x] != x) {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            return x;
        };
        for (const LexiconPair& p : pairs) {
            int a = intern(p.a);
            int b = intern(p.b);
            while (static_cast<int>(parent.size()) < static_cast<int>(words.size())) {
                parent.push_back(static_cast<int>(parent.size()));
                rank.push_back(0);
            }
            if (a == b) continue;  // self-loops carry no information
            int ra = find(a), rb = find(b);
            if (ra == rb) continue;
            if (rank[ra] < rank[rb]) std::swap(ra, rb);
            parent[rb] = ra;
            if (rank[ra] == rank[rb]) ++rank[ra];
        }
        // Canonical ids: sort components by their smallest member word.
        std::unordered_map<int, std::string> root_min;
        for (std::size_t i = 0; i < words.size(); ++i) {
            int r = find(static_cast<int>(i));
            auto it = root_min.find(r);
            if (it == root_min.end() || words[i] < it->second) root_min[r] = words[i];
        }
        std::vector<std::pair<std::string, int>> ordered;
        ordered.reserve(root_min.size());
        for (const auto& [root, minword] : root_min) ordered.emplace_back(minword, root);
        std::sort(ordered.begin(), ordered.end());
        std::unordered_map<int, int> root_to_cluster;
        for (std::size_t c = 0; c < ordered.size(); ++c) root_to_cluster[ordered[c].second] = static_cast<int>(c);
        for (std::size_t i = 0; i < words.size(); ++i)
            cm.cluster_of_.emplace(words[i], root_to_cluster[find(static_cast<int>(i))]);
        cm.word_cluster_count_ = static_cast<int>(ordered.size());
        cm.cluster_count_ = cm.word_cluster_count_;
        return cm;
    }

    int word_cluster(const std::string& word) const {
        auto it = cluster_of_.find(word);
        return it == cluster_of_.end() ? -1 : it->second;
    }

    int cluster_count() const { return cluster_count_; }
    int word_cluster_count() const { return word_cluster_count_; }
    bool has_vocab_map() const { return !vocab_cluster_.empty(); }

    const std::vector<int>& vocab_clusters() const { return vocab_cluster_; }

    int token_cluster(TokenId id) const {
        return vocab_cluster_.at(static_cast<std::size_t>(id));
    }

    // Canonical representative word for a cluster (smallest member), or the
    // token's own surface form for vocabulary-singleton clusters.
    const std::string& cluster_word(int cluster) const {
        return cluster_rep_.at(static_cast<std::size_t>(cluster));
    }

    // Matches each vocabulary surface form against the word clusters after
    // the normalization chain below. Unmatched tokens become fresh singleton
    // clusters so the token-level map is total.
    void map_vocab(const Vocabulary& vocab) {
        vocab_cluster_.assign(vocab.size(), -1);
        cluster_rep_.assign(static_cast<std::size_t>(word_cluster_count_), "");
        for (const auto& [word, c] : cluster_of_) {
            std::string& rep = cluster_rep_[static_cast<std::size_t>(c)];
            if (rep.empty() || word < rep) rep = word;
        }
        int next = word_cluster_count_;
        for (std::size_t id = 0; id < vocab.size(); ++id) {
            std::string norm = normalize_surface(vocab.surface(static_cast<TokenId>(id)));
            auto it = cluster_of_.find(norm);
            if (it != cluster_of_.end()) {
                vocab_cluster_[id] = it->second;
            } else {
                vocab_cluster_[id] = next++;
                cluster_rep_.push_back(norm.empty() ? vocab.raw_line(static_cast<TokenId>(id)) : norm);
            }
        }
        cluster_count_ = next;
    }

    // Normalization applied to token surfaces before lexicon matching:
    // strip leading word-boundary markers (space, U+2581, U+0120), then
    // ASCII-lowercase. Escape decoding happened in Vocabulary::surface when
    // the vocabulary runs in unicode-decoded mode.
    static std::string normalize_surface(std::string_view s) {
        std::string_view rest = s;
        bool stripped = true;
        while (stripped && !rest.empty()) {
            stripped = false;
            if (rest.front() == ' ') {
                rest.remove_prefix(1);
                stripped = true;
            } else if (rest.size() >= 3 && static_cast<unsigned char>(rest[0]) == 0xE2 &&
                       static_cast<unsigned char>(rest[1]) == 0x96 &&
                       static_cast<unsigned char>(rest[2]) == 0x81) {  // U+2581
                rest.remove_prefix(3);
                stripped = true;
            } else if (rest.size() >= 2 && static_cast<unsigned char>(rest[0]) == 0xC4 &&
                       static_cast<unsigned char>(rest[1]) == 0xA0) {  // U+0120
                rest.remove_prefix(2);
                stripped = true;
            }
        }
        std::string out(rest);
        for (char& c : out)
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        return out;
    }

    // Export format: "token_id<TAB>cluster_id" per line.
    std::string export_vocab_map() const {
        std::string out;
        for (std::size_t id = 0; id < vocab_cluster_.size(); ++id) {
            out += std::to_string(id);
            out += '\t';
            out += std::to_string(vocab_cluster_[id]);
            out += '\n';
        }
        return out;
    }

    // Fraction of tokens matching `pred` that landed in a multi-token (or
    // word-backed) cluster rather than a fresh singleton.
    template <typename Pred>
    double matched_fraction(const Vocabulary& vocab, Pred pred) const {
        std::size_t eligible = 0, matched = 0;
        for (std::size_t id = 0; id < vocab_cluster_.size(); ++id) {
            if (!pred(vocab.raw_line(static_cast<TokenId>(id)))) continue;
            ++eligible;
            if (vocab_cluster_[id] < word_cluster_count_) ++matched;
        }
        return eligible == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(eligible);
    }

  private:
    std::map<std::string, int> cluster_of_;
    std::vector<int> vocab_cluster_;
    std::vector<std::string> cluster_rep_;
    int word_cluster_count_ = 0;
    int cluster_count_ = 0;
};

inline ClusterMap build_clusters(const std::vector<LexiconPair>& pairs) {
    return ClusterMap::build(pairs);
}

}  // namespace xlwm
