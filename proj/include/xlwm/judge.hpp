#pragma once

// LLM-as-judge harness: client interface, prompt templates, verdict grammar,
// presentation-order randomization, and the audit trail that makes every
// call replayable. The deterministic heuristic judge keeps the whole
// pipeline runnable offline; a real service plugs in behind JudgeClient.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlwm/common.hpp"
#include "xlwm/core.hpp"
#include "xlwm/rng.hpp"

namespace xlwm {

enum class JudgeWinner { kA, kB, kTie, kFailure };

inline std::string judge_winner_name(JudgeWinner w) {
    switch (w) {
        case JudgeWinner::kA: return "A";
        case JudgeWinner::kB: return "B";
        case JudgeWinner::kTie: return "TIE";
        case JudgeWinner::kFailure: return "FAILURE";
    }
    return "?";
}

// Winner and scores refer to the caller's underlying texts (a, b) after the
// presentation permutation has been undone. The permutation itself is always
// recorded for position-bias audits.
struct JudgeVerdict {
    JudgeWinner winner = JudgeWinner::kFailure;
    std::map<std::string, std::pair<double, double>> scores;  // criterion -> (a, b)
    std::vector<int> presentation_order;  // slot k held underlying text order[k]
    std::uint64_t seed = 0;
    std::string raw_response;
};

class JudgeClient {
  public:
    virtual ~JudgeClient() = default;
    virtual std::string complete(const std::string& system_prompt,
                                 const std::string& user_prompt, std::uint64_t seed) = 0;
};

// ---------------------------------------------------------------------------
// Templates

struct JudgeTemplates {
    int version = 0;
    std::string pair_system;
    std::string pair_user;
    std::string multi_system;
    std::string multi_user;

    static JudgeTemplates load(const std::string& dir) {
        JudgeTemplates t;
        t.pair_system = load_one(dir + "/pair_system.txt", t.version);
        t.pair_user = load_one(dir + "/pair_user.txt", t.version);
        t.multi_system = load_one(dir + "/multi_system.txt", t.version);
        t.multi_user = load_one(dir + "/multi_user.txt", t.version);
        return t;
    }

  private:
    // First line "#version N" is stripped and recorded.
    static std::string load_one(const std::string& path, int& version) {
        std::string content = read_file(path);
        if (content.rfind("#version ", 0) == 0) {
            std::size_t eol = content.find('\n');
            version = std::stoi(content.substr(9, eol - 9));
            content = eol == std::string::npos ? "" : content.substr(eol + 1);
        }
        return content;
    }
};

inline std::string render_template(std::string tmpl,
                                   const std::map<std::string, std::string>& fields) {
    for (const auto& [key, value] : fields) {
        std::string marker = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = tmpl.find(marker, pos)) != std::string::npos) {
            tmpl.replace(pos, marker.size(), value);
            pos += value.size();
        }
    }
    return tmpl;
}

// Built-in fallback used when no template directory is configured; the
// repo's data/judge assets carry the same structure.
inline JudgeTemplates default_judge_templates() {
    JudgeTemplates t;
    t.version = 1;
    t.pair_system =
        "You are an impartial evaluator of text quality. Compare the two texts on the\n"
        "listed criteria and decide which one reads better overall.\n"
        "Output format, exactly:\n"
        "- First line: \"A\" if the first text is better, \"B\" if the second is better,\n"
        "  or \"TIE\" if they are of equal quality.\n"
        "- Then one line per criterion: \"<criterion>: <score for A>, <score for B>\"\n"
        "  with integer scores from 1 (worst) to 10 (best).\n"
        "No other text.\n";
    t.pair_user =
        "Compare the following two texts.\n\n[TEXT A]\n{text_a}\n[/TEXT A]\n\n[TEXT B]\n"
        "{text_b}\n[/TEXT B]\n\nCriteria: {criteria}\n";
    t.multi_system =
        "You are an impartial evaluator of text quality. The user lists several texts\n"
        "carrying the same content. Pick the one with the best quality.\n"
        "Output format, exactly one line: \"CHOICE: <option number>\" or \"TIE\" if all\n"
        "options are equally good.\n";
    t.multi_user =
        "Judge the quality of the following {count} texts.\n\n{options}\n"
        "Answer with \"CHOICE: <number>\" or \"TIE\".\n";
    return t;
}

// ---------------------------------------------------------------------------
// Verdict grammar

// Pair responses: first non-empty line "A" | "B" | "TIE", then zero or more
// criterion lines "name: score_first, score_second" (a lone score applies to
// both presented texts). Anything else is a parse failure.
struct ParsedPairResponse {
    bool ok = false;
    int choice = -1;  // 0 = first presented, 1 = second, -1 = tie
    std::map<std::string, std::pair<double, double>> slot_scores;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t used = 0;
        out = std::stod(s, &used);
        return used == s.size();
    } catch (...) {
        return false;
    }
}

}  // namespace detail

inline ParsedPairResponse parse_pair_response(const std::string& raw) {
    ParsedPairResponse parsed;
    bool verdict_seen = false;
    for (const std::string& line_raw : split_on(raw, '\n')) {
        std::string line = detail::trim(line_raw);
        if (line.empty()) continue;
        if (!verdict_seen) {
            if (line == "A") parsed.choice = 0;
            else if (line == "B") parsed.choice = 1;
            else if (line == "TIE") parsed.choice = -1;
            else return parsed;  // grammar violation -> failure
            verdict_seen = true;
            continue;
        }
        std::size_t colon = line.find(':');
        if (colon == std::string::npos) return ParsedPairResponse{};
        std::string name = detail::trim(line.substr(0, colon));
        auto parts = split_on(line.substr(colon + 1), ',');
        double first = 0, second = 0;
        if (parts.size() == 1) {
            if (!detail::parse_double(detail::trim(parts[0]), first)) return ParsedPairResponse{};
            second = first;
        } else if (parts.size() == 2) {
            if (!detail::parse_double(detail::trim(parts[0]), first) ||
                !detail::parse_double(detail::trim(parts[1]), second))
                return ParsedPairResponse{};
        } else {
            return ParsedPairResponse{};
        }
        parsed.slot_scores[name] = {first, second};
    }
    parsed.ok = verdict_seen;
    return parsed;
}

// Multi-option responses: "CHOICE: k" (1-based presented slot) or "TIE".
inline std::optional<int> parse_multi_response(const std::string& raw, std::size_t n_options) {
    for (const std::string& line_raw : split_on(raw, '\n')) {
        std::string line = detail::trim(line_raw);
        if (line.empty()) continue;
        if (line == "TIE") return -1;
        if (line.rfind("CHOICE:", 0) == 0) {
            double v = 0;
            if (!detail::parse_double(detail::trim(line.substr(7)), v)) return std::nullopt;
            int k = static_cast<int>(v);
            if (k < 1 || static_cast<std::size_t>(k) > n_options) return std::nullopt;
            return k - 1;
        }
        return std::nullopt;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Audit trail

// Append-only JSONL sink; one line per judge call. Re-running tabulation
// from this file reproduces the original tables exactly.
class JudgeAudit {
  public:
    explicit JudgeAudit(std::string path) : path_(std::move(path)) {
        std::filesystem::create_directories(std::filesystem::path(path_).parent_path());
    }

    void persist(const JudgeVerdict& v, const std::string& system_prompt,
                 const std::string& user_prompt) {
        nlohmann::json j{
            {"seed", v.seed},
            {"order", v.presentation_order},
            {"winner", judge_winner_name(v.winner)},
            {"raw_response", v.raw_response},
            {"system_sha256", sha256_hex(system_prompt)},
            {"user_sha256", sha256_hex(user_prompt)},
        };
        nlohmann::json scores = nlohmann::json::object();
        for (const auto& [name, ab] : v.scores) scores[name] = {ab.first, ab.second};
        j["scores"] = scores;
        std::lock_guard<std::mutex> lock(mu_);
        std::ofstream out(path_, std::ios::app);
        if (!out) throw ConfigError("cannot append to judge audit: " + path_);
        out << j.dump() << "\n";
        ++calls_;
    }

    std::size_t calls() const { return calls_; }
    const std::string& path() const { return path_; }

    static std::vector<JudgeVerdict> load(const std::string& path) {
        std::vector<JudgeVerdict> out;
        for (const std::string& line : split_on(read_file(path), '\n')) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            JudgeVerdict v;
            v.seed = j.at("seed").get<std::uint64_t>();
            v.presentation_order = j.at("order").get<std::vector<int>>();
            std::string w = j.at("winner").get<std::string>();
            v.winner = w == "A" ? JudgeWinner::kA
                       : w == "B" ? JudgeWinner::kB
                       : w == "TIE" ? JudgeWinner::kTie : JudgeWinner::kFailure;
            v.raw_response = j.at("raw_response").get<std::string>();
            for (const auto& [name, ab] : j.at("scores").items())
                v.scores[name] = {ab[0].get<double>(), ab[1].get<double>()};
            out.push_back(std::move(v));
        }
        return out;
    }

  private:
    std::string path_;
    std::mutex mu_;
    std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Pairwise judging

// Presents the two texts in seed-randomized order, records the permutation,
// and maps the judge's slot-level verdict back onto the underlying texts.
// Service failures and grammar violations yield FAILURE verdicts.
inline JudgeVerdict judge_pair(JudgeClient& client, const JudgeTemplates& templates,
                               const std::string& text_a, const std::string& text_b,
                               const std::vector<std::string>& criteria, std::uint64_t seed,
                               JudgeAudit* audit = nullptr) {
    Sha256 h;
    h.update("judge/order");
    std::uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    h.update(le, 8);
    bool swap = rng_from_digest(h.finalize()).next_u64() & 1;

    JudgeVerdict verdict;
    verdict.seed = seed;
    verdict.presentation_order = swap ? std::vector<int>{1, 0} : std::vector<int>{0, 1};
    const std::string& first = swap ? text_b : text_a;
    const std::string& second = swap ? text_a : text_b;

    std::string criteria_str = join(criteria, ", ");
    std::string user = render_template(
        templates.pair_user,
        {{"text_a", first}, {"text_b", second}, {"criteria", criteria_str}});
    std::string system = render_template(templates.pair_system, {{"criteria", criteria_str}});

    try {
        verdict.raw_response = client.complete(system, user, seed);
        ParsedPairResponse parsed = parse_pair_response(verdict.raw_response);
        if (parsed.ok) {
            if (parsed.choice == -1) verdict.winner = JudgeWinner::kTie;
            else {
                int underlying = verdict.presentation_order[static_cast<std::size_t>(parsed.choice)];
                verdict.winner = underlying == 0 ? JudgeWinner::kA : JudgeWinner::kB;
            }
            for (const auto& [name, slot] : parsed.slot_scores) {
                double for_a = swap ? slot.second : slot.first;
                double for_b = swap ? slot.first : slot.second;
                verdict.scores[name] = {for_a, for_b};
            }
        }
    } catch (const ExternalServiceError& e) {
        verdict.winner = JudgeWinner::kFailure;
        verdict.raw_response = std::string("service error: ") + e.what();
    }
    if (audit) audit->persist(verdict, system, user);
    return verdict;
}

// Multi-option verdict for the translation fairness experiment.
struct MultiVerdict {
    int winner = -2;  // underlying option index; -1 = tie, -2 = failure
    std::vector<int> presentation_order;
    std::uint64_t seed = 0;
    std::string raw_response;
};

inline MultiVerdict judge_multi(JudgeClient& client, const JudgeTemplates& templates,
                                const std::vector<std::string>& options, std::uint64_t seed,
                                JudgeAudit* audit = nullptr) {
    if (options.size() < 2) throw ConfigError("judge_multi needs at least 2 options");
    Sha256 h;
    h.update("judge/multi-order");
    std::uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    h.update(le, 8);
    Xoshiro256pp rng = rng_from_digest(h.finalize());

    MultiVerdict verdict;
    verdict.seed = seed;
    verdict.presentation_order.resize(options.size());
    for (std::size_t i = 0; i < options.size(); ++i)
        verdict.presentation_order[i] = static_cast<int>(i);
    for (std::size_t i = options.size() - 1; i > 0; --i) {
        std::size_t j = rng.below(i + 1);
        std::swap(verdict.presentation_order[i], verdict.presentation_order[j]);
    }

    std::string block;
    for (std::size_t slot = 0; slot < options.size(); ++slot) {
        int underlying = verdict.presentation_order[slot];
        block += "[OPTION " + std::to_string(slot + 1) + "]\n";
        block += options[static_cast<std::size_t>(underlying)];
        block += "\n[/OPTION " + std::to_string(slot + 1) + "]\n";
    }
    std::string user = render_template(
        templates.multi_user,
        {{"options", block}, {"count", std::to_string(options.size())}});

    try {
        verdict.raw_response = client.complete(templates.multi_system, user, seed);
        auto parsed = parse_multi_response(verdict.raw_response, options.size());
        if (parsed.has_value())
            verdict.winner = *parsed == -1
                                 ? -1
                                 : verdict.presentation_order[static_cast<std::size_t>(*parsed)];
    } catch (const ExternalServiceError& e) {
        verdict.winner = -2;
        verdict.raw_response = std::string("service error: ") + e.what();
    }
    if (audit) {
        JudgeVerdict as_pair;
        as_pair.seed = seed;
        as_pair.presentation_order = verdict.presentation_order;
        as_pair.winner = verdict.winner == -1 ? JudgeWinner::kTie
                         : verdict.winner >= 0 ? JudgeWinner::kA : JudgeWinner::kFailure;
        as_pair.raw_response = verdict.raw_response;
        audit->persist(as_pair, templates.multi_system, user);
    }
    return verdict;
}

// ---------------------------------------------------------------------------
// Offline judge

// Deterministic heuristic judge: extracts the texts from the prompt markers,
// scores each by n-gram repetition, and emits grammar-conformant output.
// Default client for offline runs; never touches the network.
class HeuristicJudge final : public JudgeClient {
  public:
    explicit HeuristicJudge(double tie_band = 0.25) : tie_band_(tie_band) {}

    std::string complete(const std::string&, const std::string& user_prompt,
                         std::uint64_t) override {
        std::vector<std::string> texts = extract_sections(user_prompt, "TEXT", {"A", "B"});
        if (texts.size() == 2) {
            double sa = coherency_score(texts[0]);
            double sb = coherency_score(texts[1]);
            std::string verdict = std::abs(sa - sb) <= tie_band_ ? "TIE" : (sa > sb ? "A" : "B");
            std::vector<std::string> criteria = extract_criteria(user_prompt);
            std::string out = verdict + "\n";
            for (const std::string& c : criteria)
                out += c + ": " + format_g12(criterion_score(sa, c)) + ", " +
                       format_g12(criterion_score(sb, c)) + "\n";
            return out;
        }
        std::vector<std::string> options = extract_numbered_options(user_prompt);
        if (options.size() >= 2) {
            std::size_t best = 0;
            double best_score = -1;
            bool all_equal = true;
            for (std::size_t i = 0; i < options.size(); ++i) {
                double s = coherency_score(options[i]);
                if (i > 0 && s != best_score) all_equal = false;
                if (s > best_score) {
                    best_score = s;
                    best = i;
                }
            }
            return all_equal ? "TIE\n" : "CHOICE: " + std::to_string(best + 1) + "\n";
        }
        return "could not locate texts\n";
    }

    // Distinct-bigram ratio mapped onto the 1..10 judge scale.
    static double coherency_score(const std::string& text) {
        std::vector<std::string> words = split_whitespace(text);
        if (words.size() < 2) return 5.0;
        std::map<std::pair<std::string, std::string>, int> bigrams;
        for (std::size_t i = 0; i + 1 < words.size(); ++i)
            bigrams[{words[i], words[i + 1]}] += 1;
        double distinct = static_cast<double>(bigrams.size());
        double total = static_cast<double>(words.size() - 1);
        return 1.0 + 9.0 * distinct / total;
    }

  private:
    static double criterion_score(double base, const std::string& criterion) {
        // Small deterministic offset so criteria do not collapse onto one value.
        Digest256 d = sha256(criterion);
        double jitter = static_cast<double>(d[0] % 5) / 10.0;
        return std::min(10.0, std::max(1.0, base - jitter));
    }

    static std::vector<std::string> extract_sections(const std::string& prompt,
                                                     const std::string& tag,
                                                     const std::vector<std::string>& labels) {
        std::vector<std::string> out;
        for (const std::string& label : labels) {
            std::string open = "[" + tag + " " + label + "]";
            std::string close = "[/" + tag + " " + label + "]";
            std::size_t b = prompt.find(open);
            std::size_t e = prompt.find(close);
            if (b == std::string::npos || e == std::string::npos || e <= b) return {};
            b += open.size();
            out.push_back(detail::trim(prompt.substr(b, e - b)));
        }
        return out;
    }

    static std::vector<std::string> extract_numbered_options(const std::string& prompt) {
        std::vector<std::string> out;
        for (int k = 1;; ++k) {
            std::string open = "[OPTION " + std::to_string(k) + "]";
            std::string close = "[/OPTION " + std::to_string(k) + "]";
            std::size_t b = prompt.find(open);
            std::size_t e = prompt.find(close);
            if (b == std::string::npos || e == std::string::npos || e <= b) break;
            b += open.size();
            out.push_back(detail::trim(prompt.substr(b, e - b)));
        }
        return out;
    }

    static std::vector<std::string> extract_criteria(const std::string& prompt) {
        std::size_t pos = prompt.find("Criteria:");
        if (pos == std::string::npos) return {"coherency"};
        std::size_t eol = prompt.find('\n', pos);
        std::string list = prompt.substr(pos + 9, eol - pos - 9);
        std::vector<std::string> out;
        for (const std::string& c : split_on(list, ','))
            if (!detail::trim(c).empty()) out.push_back(detail::trim(c));
        return out.empty() ? std::vector<std::string>{"coherency"} : out;
    }

    double tie_band_;
};

// Adapter so the HTTP transport satisfies JudgeClient without judge.hpp
// depending on the socket code.
template <typename Transport>
class TransportJudgeClient final : public JudgeClient {
  public:
    explicit TransportJudgeClient(Transport transport) : transport_(std::move(transport)) {}
    std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                         std::uint64_t seed) override {
        return transport_.complete(system_prompt, user_prompt, seed);
    }

  private:
    Transport transport_;
};

}  // namespace xlwm
