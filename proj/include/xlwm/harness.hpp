#pragma once

// Experiment orchestration: run configuration, dataset ingestion, the
// generate/detect/attack/quality pipeline, and report emission. Offline runs
// are fully deterministic: the same config digest always produces the same
// bytes on disk.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlwm/attack.hpp"
#include "xlwm/cluster.hpp"
#include "xlwm/common.hpp"
#include "xlwm/core.hpp"
#include "xlwm/detect.hpp"
#include "xlwm/embed.hpp"
#include "xlwm/judge.hpp"
#include "xlwm/lm.hpp"
#include "xlwm/quality.hpp"
#include "xlwm/record_io.hpp"
#include "xlwm/watermark.hpp"

namespace xlwm {

inline constexpr const char* kVersion = "0.1.0";

enum class DatasetFormat { kJsonlTextField, kLfqaPairs };

inline std::string dataset_format_name(DatasetFormat f) {
    return f == DatasetFormat::kJsonlTextField ? "jsonl_text_field" : "lfqa_pairs";
}

inline DatasetFormat dataset_format_from_name(std::string_view name) {
    if (name == "jsonl_text_field") return DatasetFormat::kJsonlTextField;
    if (name == "lfqa_pairs") return DatasetFormat::kLfqaPairs;
    throw ConfigError("unknown dataset format: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
    std::vector<std::string> methods{"kgw", "unigram", "exp", "xsir"};
    std::vector<std::string> languages;
    std::map<std::string, std::string> datasets;  // language -> path
    DatasetFormat dataset_format = DatasetFormat::kJsonlTextField;
    std::size_t sample_count = 500;
    std::size_t attack_sample_count = 100;
    std::size_t prompt_tokens = 30;
    std::size_t max_new_tokens = 200;
    std::uint64_t seed = 1;
    std::string key_hex;  // derived from seed when empty

    double gamma = 0.5;
    double delta = 2.0;
    int kgw_context_width = 1;
    int exp_context_width = 4;
    int xsir_chunk_width = 10;

    double z_threshold = 4.0;
    double p_threshold = 1e-4;
    double xsir_threshold = 0.2;
    std::vector<double> target_fprs{0.001, 0.01};

    bool attack_suite = true;
    double translate_strength = 1.0;
    double paraphrase_strength = 0.3;
    double paraphrase_dropout = 0.05;

    std::string judge = "mock";  // "mock" or "http://host:port"
    double ad_weight = 0.3;

    std::string vocab_path;
    std::string normalization = "unicode-decoded";
    std::string lexicon_path;
    std::map<std::string, std::string> synonym_paths;    // language -> path
    std::map<std::string, std::string> translate_paths;  // "src->dst" -> path

    int lm_order = 2;
    double lm_smoothing_k = 0.1;

    std::string output_dir;
    int workers = 0;  // 0 = hardware concurrency

    void validate() const {
        if (methods.empty()) throw ConfigError("config: no methods selected");
        for (const std::string& m : methods) method_from_name(m);
        if (languages.empty()) throw ConfigError("config: no languages selected");
        if (sample_count == 0) throw ConfigError("config: sample_count must be >= 1");
        if (prompt_tokens == 0) throw ConfigError("config: prompt_tokens must be >= 1");
        if (max_new_tokens == 0) throw ConfigError("config: max_new_tokens must be >= 1");
        if (vocab_path.empty()) throw ConfigError("config: vocab_path is required");
        for (const std::string& lang : languages)
            if (!datasets.count(lang))
                throw ConfigError("config: no dataset for language " + lang);
        if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("config: gamma must be in (0,1)");
        if (delta < 0.0) throw ConfigError("config: delta must be >= 0");
        bool wants_xsir = false;
        for (const std::string& m : methods) wants_xsir |= (m == "xsir");
        if (wants_xsir && lexicon_path.empty())
            throw ConfigError("config: xsir requires lexicon_path");
        if (attack_suite && languages.size() < 2)
            throw ConfigError("config: attack suite needs >= 2 languages");
        if (judge != "mock" && judge.rfind("http://", 0) != 0)
            throw ConfigError("config: judge must be 'mock' or an http://host:port URL");
    }

    SecretKey secret_key() const {
        if (!key_hex.empty()) return SecretKey::from_hex(key_hex);
        return SecretKey::from_passphrase("xlwm/run-key/" + std::to_string(seed));
    }

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"methods", methods},
            {"languages", languages},
            {"datasets", datasets},
            {"dataset_format", dataset_format_name(dataset_format)},
            {"sample_count", sample_count},
            {"attack_sample_count", attack_sample_count},
            {"prompt_tokens", prompt_tokens},
            {"max_new_tokens", max_new_tokens},
            {"seed", seed},
            {"key_hex", key_hex},
            {"gamma", gamma},
            {"delta", delta},
            {"kgw_context_width", kgw_context_width},
            {"exp_context_width", exp_context_width},
            {"xsir_chunk_width", xsir_chunk_width},
            {"z_threshold", z_threshold},
            {"p_threshold", p_threshold},
            {"xsir_threshold", xsir_threshold},
            {"target_fprs", target_fprs},
            {"attack_suite", attack_suite},
            {"translate_strength", translate_strength},
            {"paraphrase_strength", paraphrase_strength},
            {"paraphrase_dropout", paraphrase_dropout},
            {"judge", judge},
            {"ad_weight", ad_weight},
            {"vocab_path", vocab_path},
            {"normalization", normalization},
            {"lexicon_path", lexicon_path},
            {"synonym_paths", synonym_paths},
            {"translate_paths", translate_paths},
            {"lm_order", lm_order},
            {"lm_smoothing_k", lm_smoothing_k},
            {"output_dir", output_dir},
            {"workers", workers},
        };
    }

    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig c;
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("methods", c.methods);
        get("languages", c.languages);
        get("datasets", c.datasets);
        if (j.contains("dataset_format"))
            c.dataset_format = dataset_format_from_name(j.at("dataset_format").get<std::string>());
        get("sample_count", c.sample_count);
        get("attack_sample_count", c.attack_sample_count);
        get("prompt_tokens", c.prompt_tokens);
        get("max_new_tokens", c.max_new_tokens);
        get("seed", c.seed);
        get("key_hex", c.key_hex);
        get("gamma", c.gamma);
        get("delta", c.delta);
        get("kgw_context_width", c.kgw_context_width);
        get("exp_context_width", c.exp_context_width);
        get("xsir_chunk_width", c.xsir_chunk_width);
        get("z_threshold", c.z_threshold);
        get("p_threshold", c.p_threshold);
        get("xsir_threshold", c.xsir_threshold);
        get("target_fprs", c.target_fprs);
        get("attack_suite", c.attack_suite);
        get("translate_strength", c.translate_strength);
        get("paraphrase_strength", c.paraphrase_strength);
        get("paraphrase_dropout", c.paraphrase_dropout);
        get("judge", c.judge);
        get("ad_weight", c.ad_weight);
        get("vocab_path", c.vocab_path);
        get("normalization", c.normalization);
        get("lexicon_path", c.lexicon_path);
        get("synonym_paths", c.synonym_paths);
        get("translate_paths", c.translate_paths);
        get("lm_order", c.lm_order);
        get("lm_smoothing_k", c.lm_smoothing_k);
        get("output_dir", c.output_dir);
        get("workers", c.workers);
        return c;
    }

    static RunConfig from_file(const std::string& path) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        return from_json(j);
    }

    // Digest over the semantic fields; output_dir and workers do not change
    // results and stay out so reports are location-independent.
    std::string digest() const {
        nlohmann::json j = to_json();
        j.erase("output_dir");
        j.erase("workers");
        return sha256_hex(j.dump());
    }
};

// ---------------------------------------------------------------------------
// Dataset ingestion

struct IngestResult {
    std::vector<std::string> prompts;
    std::size_t skipped = 0;  // malformed or too-short records
};

// C4-shape: the text field, prompt = first prompt_tokens tokens. LFQA-shape:
// the question becomes the instruction prompt. Selection is the first n
// after a seeded shuffle; fewer than n usable records is a hard error.
inline IngestResult ingest_dataset(const std::string& path, DatasetFormat format,
                                   const std::string& language_tag, std::size_t n,
                                   std::size_t prompt_tokens, std::uint64_t shuffle_seed,
                                   const Tokenizer& tokenizer) {
    if (n == 0) throw ConfigError("ingest: n must be >= 1");
    IngestResult result;
    std::vector<std::string> usable;
    for (const std::string& line : split_on(read_file(path), '\n')) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            ++result.skipped;
            continue;
        }
        std::string prompt;
        if (format == DatasetFormat::kJsonlTextField) {
            if (!j.contains("text") || !j.at("text").is_string()) {
                ++result.skipped;
                continue;
            }
            TokenSequence toks;
            try {
                toks = tokenizer.encode(j.at("text").get<std::string>(), language_tag);
            } catch (const ConfigError&) {
                ++result.skipped;
                continue;
            }
            if (toks.size() < prompt_tokens) {
                ++result.skipped;
                continue;
            }
            toks.ids.resize(prompt_tokens);
            prompt = tokenizer.decode(toks);
        } else {
            if (!j.contains("question") || !j.at("question").is_string()) {
                ++result.skipped;
                continue;
            }
            prompt = j.at("question").get<std::string>();
            try {
                if (tokenizer.encode(prompt, language_tag).empty()) {
                    ++result.skipped;
                    continue;
                }
            } catch (const ConfigError&) {
                ++result.skipped;
                continue;
            }
        }
        usable.push_back(std::move(prompt));
    }
    if (usable.size() < n)
        throw ConfigError("dataset " + path + " has " + std::to_string(usable.size()) +
                          " usable records, need " + std::to_string(n));
    Xoshiro256pp rng(shuffle_seed);
    for (std::size_t i = usable.size() - 1; i > 0; --i) {
        std::size_t j = rng.below(i + 1);
        std::swap(usable[i], usable[j]);
    }
    usable.resize(n);
    result.prompts = std::move(usable);
    return result;
}

// ---------------------------------------------------------------------------
// Worker pool

// Bounded pool over independent indices; the first exception wins and is
// rethrown after all workers join.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t n_threads = workers > 0 ? static_cast<std::size_t>(workers)
                                        : std::max(1u, hw == 0 ? 4u : hw);
    n_threads = std::min(n_threads, n);
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true);
                }
            }
        });
    }
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Report structures

struct DetectionRow {
    std::string method;
    std::string language;
    std::optional<double> gamma;
    std::optional<double> delta;
    std::string threshold_kind;  // "fixed" or "tpr@fpr=<t>"
    double threshold = 0.0;
    double tpr = 0.0, tnr = 0.0, fpr = 0.0, fnr = 0.0;
    double auc = 0.0;
};

struct AttackRow {
    std::string method;
    std::string language_path;
    std::string shape;
    std::string mode;
    std::vector<double> stage_auc;  // [0] = no attack
    double final_auc = 0.0;
};

struct QualityRow {
    std::string method;
    std::string language;
    double ppl_wm = 0.0, ppl_unwm = 0.0;
    double self_bleu_wm = 0.0, self_bleu_unwm = 0.0;
    double nc_wm = 0.0, nc_unwm = 0.0;
    double ad_wm = 0.0, ad_unwm = 0.0;
    double coherency_decrease_pct = 0.0;
    double hard_win = 0.0, tie = 0.0, soft_win = 0.0;
    std::size_t judge_failures = 0;
};

struct RunReport {
    std::string config_digest;
    std::string version = kVersion;
    std::vector<DetectionRow> detection;
    std::vector<AttackRow> attacks;
    std::vector<QualityRow> quality;
    std::map<std::string, std::vector<std::pair<double, double>>> roc_points;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["provenance"] = {{"config_digest", config_digest}, {"version", version}};
        j["detection"] = nlohmann::json::array();
        for (const DetectionRow& r : detection) {
            nlohmann::json row{
                {"method", r.method},     {"language", r.language},
                {"threshold_kind", r.threshold_kind}, {"threshold", r.threshold},
                {"tpr", r.tpr},           {"tnr", r.tnr},
                {"fpr", r.fpr},           {"fnr", r.fnr},
                {"auc", r.auc},
            };
            row["gamma"] = r.gamma ? nlohmann::json(*r.gamma) : nlohmann::json();
            row["delta"] = r.delta ? nlohmann::json(*r.delta) : nlohmann::json();
            j["detection"].push_back(row);
        }
        j["attacks"] = nlohmann::json::array();
        for (const AttackRow& r : attacks)
            j["attacks"].push_back({{"method", r.method},
                                    {"language_path", r.language_path},
                                    {"shape", r.shape},
                                    {"mode", r.mode},
                                    {"stage_auc", r.stage_auc},
                                    {"final_auc", r.final_auc}});
        j["quality"] = nlohmann::json::array();
        for (const QualityRow& r : quality)
            j["quality"].push_back({{"method", r.method},
                                    {"language", r.language},
                                    {"ppl_wm", r.ppl_wm},
                                    {"ppl_unwm", r.ppl_unwm},
                                    {"self_bleu_wm", r.self_bleu_wm},
                                    {"self_bleu_unwm", r.self_bleu_unwm},
                                    {"nc_wm", r.nc_wm},
                                    {"nc_unwm", r.nc_unwm},
                                    {"ad_wm", r.ad_wm},
                                    {"ad_unwm", r.ad_unwm},
                                    {"coherency_decrease_pct", r.coherency_decrease_pct},
                                    {"hard_win", r.hard_win},
                                    {"tie", r.tie},
                                    {"soft_win", r.soft_win},
                                    {"judge_failures", r.judge_failures}});
        nlohmann::json rocs = nlohmann::json::object();
        for (const auto& [name, points] : roc_points) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& [fpr, tpr] : points) arr.push_back({fpr, tpr});
            rocs[name] = arr;
        }
        j["roc"] = rocs;
        return j;
    }

    static RunReport from_json(const nlohmann::json& j) {
        RunReport rep;
        rep.config_digest = j.at("provenance").at("config_digest").get<std::string>();
        rep.version = j.at("provenance").at("version").get<std::string>();
        for (const auto& row : j.at("detection")) {
            DetectionRow r;
            r.method = row.at("method").get<std::string>();
            r.language = row.at("language").get<std::string>();
            if (!row.at("gamma").is_null()) r.gamma = row.at("gamma").get<double>();
            if (!row.at("delta").is_null()) r.delta = row.at("delta").get<double>();
            r.threshold_kind = row.at("threshold_kind").get<std::string>();
            r.threshold = row.at("threshold").get<double>();
            r.tpr = row.at("tpr").get<double>();
            r.tnr = row.at("tnr").get<double>();
            r.fpr = row.at("fpr").get<double>();
            r.fnr = row.at("fnr").get<double>();
            r.auc = row.at("auc").get<double>();
            rep.detection.push_back(r);
        }
        for (const auto& row : j.at("attacks")) {
            AttackRow r;
            r.method = row.at("method").get<std::string>();
            r.language_path = row.at("language_path").get<std::string>();
            r.shape = row.at("shape").get<std::string>();
            r.mode = row.at("mode").get<std::string>();
            r.stage_auc = row.at("stage_auc").get<std::vector<double>>();
            r.final_auc = row.at("final_auc").get<double>();
            rep.attacks.push_back(r);
        }
        for (const auto& row : j.at("quality")) {
            QualityRow r;
            r.method = row.at("method").get<std::string>();
            r.language = row.at("language").get<std::string>();
            r.ppl_wm = row.at("ppl_wm").get<double>();
            r.ppl_unwm = row.at("ppl_unwm").get<double>();
            r.self_bleu_wm = row.at("self_bleu_wm").get<double>();
            r.self_bleu_unwm = row.at("self_bleu_unwm").get<double>();
            r.nc_wm = row.at("nc_wm").get<double>();
            r.nc_unwm = row.at("nc_unwm").get<double>();
            r.ad_wm = row.at("ad_wm").get<double>();
            r.ad_unwm = row.at("ad_unwm").get<double>();
            r.coherency_decrease_pct = row.at("coherency_decrease_pct").get<double>();
            r.hard_win = row.at("hard_win").get<double>();
            r.tie = row.at("tie").get<double>();
            r.soft_win = row.at("soft_win").get<double>();
            r.judge_failures = row.at("judge_failures").get<std::size_t>();
            rep.quality.push_back(r);
        }
        for (const auto& [name, arr] : j.at("roc").items()) {
            std::vector<std::pair<double, double>> points;
            for (const auto& pt : arr) points.emplace_back(pt[0].get<double>(), pt[1].get<double>());
            rep.roc_points[name] = points;
        }
        return rep;
    }
};

// Detection table in the fixed schema used across the result tables.
inline std::string detection_csv(const RunReport& report) {
    std::string out = "method,language,gamma,delta,threshold,TPR,TNR,FPR,FNR\n";
    for (const DetectionRow& r : report.detection) {
        out += r.method + "," + r.language + ",";
        out += (r.gamma ? format_g12(*r.gamma) : "") + std::string(",");
        out += (r.delta ? format_g12(*r.delta) : "") + std::string(",");
        out += format_g12(r.threshold) + "," + format_g12(r.tpr) + "," + format_g12(r.tnr) +
               "," + format_g12(r.fpr) + "," + format_g12(r.fnr) + "\n";
    }
    return out;
}

inline std::string attacks_csv(const RunReport& report) {
    std::string out = "method,language_path,shape,mode,stage,auc\n";
    for (const AttackRow& r : report.attacks)
        for (std::size_t k = 0; k < r.stage_auc.size(); ++k)
            out += r.method + "," + r.language_path + "," + r.shape + "," + r.mode + "," +
                   std::to_string(k) + "," + format_g12(r.stage_auc[k]) + "\n";
    return out;
}

inline std::string quality_csv(const RunReport& report) {
    std::string out =
        "method,language,ppl_wm,ppl_unwm,self_bleu_wm,self_bleu_unwm,nc_wm,nc_unwm,ad_wm,"
        "ad_unwm,coherency_decrease_pct,hard_win,tie,soft_win,judge_failures\n";
    for (const QualityRow& r : report.quality)
        out += r.method + "," + r.language + "," + format_g12(r.ppl_wm) + "," +
               format_g12(r.ppl_unwm) + "," + format_g12(r.self_bleu_wm) + "," +
               format_g12(r.self_bleu_unwm) + "," + format_g12(r.nc_wm) + "," +
               format_g12(r.nc_unwm) + "," + format_g12(r.ad_wm) + "," + format_g12(r.ad_unwm) +
               "," + format_g12(r.coherency_decrease_pct) + "," + format_g12(r.hard_win) + "," +
               format_g12(r.tie) + "," + format_g12(r.soft_win) + "," +
               std::to_string(r.judge_failures) + "\n";
    return out;
}

struct EmitFormats {
    bool json = true;
    bool csv = true;
    bool roc_points = true;
};

inline void emit_report(const RunReport& report, const std::string& dir,
                        const EmitFormats& formats = {}) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw ConfigError("cannot create output directory: " + dir);
    if (formats.json) write_file(dir + "/report.json", report.to_json().dump(2) + "\n");
    if (formats.csv) {
        write_file(dir + "/report.csv", detection_csv(report));
        write_file(dir + "/quality.csv", quality_csv(report));
        write_file(dir + "/attacks.csv", attacks_csv(report));
    }
    if (formats.roc_points) {
        fs::create_directories(dir + "/roc");
        for (const auto& [name, points] : report.roc_points) {
            std::string safe = name;
            for (char& c : safe)
                if (c == '/' || c == ':' || c == '>') c = '_';
            std::string body = "fpr\ttpr\n";
            for (const auto& [fpr, tpr] : points)
                body += format_g12(fpr) + "\t" + format_g12(tpr) + "\n";
            write_file(dir + "/roc/" + safe + ".tsv", body);
        }
    }
}

// ---------------------------------------------------------------------------
// Experiment driver

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view scope, std::uint64_t index) {
    Sha256 h;
    std::uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(base >> (8 * i));
    h.update(le, 8);
    h.update(scope);
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(index >> (8 * i));
    h.update(le, 8);
    return fold_digest(h.finalize());
}

inline double exp_roc_score(const DetectionOutcome& outcome) {
    double p = std::max(outcome.p_value.value_or(1.0), 1e-300);
    return -std::log10(p);
}

inline double roc_score(const DetectionOutcome& outcome) {
    return outcome.method == Method::kExp ? exp_roc_score(outcome) : outcome.statistic;
}

inline std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == '/' || c == ':' || c == '>') c = '_';
    return s;
}

}  // namespace detail

// Shared immutable state for one experiment.
struct ExperimentContext {
    RunConfig config;
    SecretKey key;
    Vocabulary vocab;
    std::unique_ptr<WhitespaceTokenizer> tokenizer;
    HashedNgramEmbedder embedder;
    std::optional<ClusterMap> clusters;
    std::map<std::string, BilingualLexicon> lexicons;      // "src->dst"
    std::map<std::string, SynonymTable> synonyms;          // language
    SynonymTable merged_synonyms;
    TokenId eot_id = -1;

    explicit ExperimentContext(RunConfig cfg)
        : config(std::move(cfg)),
          key(config.secret_key()),
          vocab(Vocabulary::from_file(config.vocab_path,
                                      normalization_mode_from_name(config.normalization))) {
        config.validate();
        tokenizer = std::make_unique<WhitespaceTokenizer>(vocab);
        if (vocab.surface(0) == "<eot>") eot_id = 0;

        bool wants_xsir = false;
        for (const std::string& m : config.methods) wants_xsir |= (m == "xsir");
        if (wants_xsir || !config.lexicon_path.empty()) {
            clusters = build_clusters(read_lexicon_pairs(config.lexicon_path));
            clusters->map_vocab(vocab);
        }
        if (config.attack_suite) {
            for (const auto& [pair, path] : config.translate_paths)
                lexicons.emplace(pair, BilingualLexicon::from_tsv(path));
            // Build missing directions by inversion where possible.
            for (const std::string& src : config.languages) {
                for (const std::string& dst : config.languages) {
                    if (src == dst) continue;
                    std::string fwd = src + "->" + dst;
                    std::string rev = dst + "->" + src;
                    if (!lexicons.count(fwd) && lexicons.count(rev) && lexicons.at(rev).bijective)
                        lexicons.emplace(fwd, lexicons.at(rev).inverted());
                }
            }
            for (const auto& [lang, path] : config.synonym_paths)
                synonyms.emplace(lang, SynonymTable::from_tsv(path));
            std::vector<const SynonymTable*> tables;
            for (const auto& [lang, table] : synonyms) tables.push_back(&table);
            merged_synonyms = merge_synonym_tables(tables);
        }
    }

    // Tokenized dataset records for one language (malformed lines skipped).
    // C4-shaped records contribute their text field, LFQA-shaped records the
    // question followed by the answer.
    std::vector<TokenSequence> load_corpus(const std::string& lang) const {
        std::vector<TokenSequence> corpus;
        for (const std::string& line : split_on(read_file(config.datasets.at(lang)), '\n')) {
            if (line.empty()) continue;
            try {
                nlohmann::json j = nlohmann::json::parse(line);
                std::string text;
                if (j.contains("text") && j.at("text").is_string()) {
                    text = j.at("text").get<std::string>();
                } else if (j.contains("question") && j.at("question").is_string()) {
                    text = j.at("question").get<std::string>();
                    if (j.contains("answer") && j.at("answer").is_string())
                        text += " " + j.at("answer").get<std::string>();
                } else {
                    continue;
                }
                corpus.push_back(tokenizer->encode(text, lang));
            } catch (...) {
                continue;
            }
        }
        return corpus;
    }

    // Language model for one language. Support is restricted to the tokens
    // seen in that language's corpus (plus nothing else), so generations stay
    // in-language instead of leaking smoothing mass across the shared
    // multilingual vocabulary; the reserved end-of-text id stays banned too.
    ToyLM train_lm(const std::string& lang) const {
        std::vector<TokenSequence> corpus = load_corpus(lang);
        ToyLM lm = train_toy_lm(corpus, vocab.size(), config.lm_order, config.lm_smoothing_k);
        std::vector<char> seen(vocab.size(), 0);
        for (const TokenSequence& seq : corpus)
            for (TokenId id : seq.ids) seen[static_cast<std::size_t>(id)] = 1;
        std::vector<TokenId> banned;
        for (std::size_t id = 0; id < vocab.size(); ++id)
            if (!seen[id]) banned.push_back(static_cast<TokenId>(id));
        lm.ban_ids(std::move(banned));
        return lm;
    }

    std::unique_ptr<Watermarker> make_watermarker(const std::string& method) const {
        Method m = method_from_name(method);
        switch (m) {
            case Method::kNone:
                return std::make_unique<PlainDecoder>();
            case Method::kKgw:
                return std::make_unique<KgwWatermarker>(
                    key, KgwParams{config.gamma, config.delta, config.kgw_context_width},
                    vocab.size(), vocab.sentinel_id());
            case Method::kUnigram:
                return std::make_unique<UnigramWatermarker>(
                    key, UnigramParams{config.gamma, config.delta}, vocab.size());
            case Method::kExp:
                return std::make_unique<ExpWatermarker>(key, ExpParams{config.exp_context_width},
                                                        vocab.sentinel_id());
            case Method::kXsir:
                return std::make_unique<XsirWatermarker>(key, xsir_params(), &vocab);
        }
        throw InternalError("unreachable");
    }

    XsirParams xsir_params() const {
        XsirParams p;
        p.delta = config.delta;
        p.chunk_width = config.xsir_chunk_width;
        p.clusters = &*clusters;
        p.embedder = &embedder;
        return p;
    }

    DetectorFn make_detector(const std::string& method,
                             std::shared_ptr<XsirBiaser> biaser = nullptr) const {
        Method m = method_from_name(method);
        const RunConfig& cfg = config;
        switch (m) {
            case Method::kKgw:
                return [this, cfg](const TokenSequence& seq) {
                    return kgw_z(seq, key,
                                 KgwParams{cfg.gamma, cfg.delta, cfg.kgw_context_width}, vocab,
                                 cfg.z_threshold);
                };
            case Method::kUnigram:
                return [this, cfg](const TokenSequence& seq) {
                    return unigram_z(seq, key, cfg.gamma, vocab, cfg.z_threshold);
                };
            case Method::kExp:
                return [this, cfg](const TokenSequence& seq) {
                    return exp_score(seq, key, ExpParams{cfg.exp_context_width}, vocab,
                                     cfg.p_threshold);
                };
            case Method::kXsir: {
                if (!biaser) biaser = std::make_shared<XsirBiaser>(key, xsir_params(), &vocab);
                double thr = cfg.xsir_threshold;
                return [biaser, thr](const TokenSequence& seq) {
                    return xsir_score(seq, *biaser, thr);
                };
            }
            case Method::kNone:
                break;
        }
        throw ConfigError("no detector for method " + method);
    }
};

// Full experiment: paired corpora, detection, calibration, attacks, quality,
// and persisted artifacts under the run directory layout.
inline RunReport run_experiment(const RunConfig& config_in) {
    ExperimentContext ctx(config_in);
    const RunConfig& cfg = ctx.config;
    namespace fs = std::filesystem;

    std::string out_dir = cfg.output_dir.empty() ? "run" : cfg.output_dir;
    fs::create_directories(out_dir);
    for (const char* sub : {"records", "scores", "attacks", "judge"})
        fs::create_directories(out_dir + "/" + sub);
    write_file(out_dir + "/config.snapshot", cfg.to_json().dump(2) + "\n");

    RunReport report;
    report.config_digest = cfg.digest();

    std::unique_ptr<JudgeClient> judge_client;
    if (cfg.judge == "mock") judge_client = std::make_unique<HeuristicJudge>();
    JudgeTemplates templates = default_judge_templates();

    for (const std::string& lang : cfg.languages) {
        // Corpus, model, prompts.
        ToyLM lm = ctx.train_lm(lang);
        write_file(out_dir + "/records/toylm_" + lang + ".txt", lm.serialize());

        IngestResult ingest = ingest_dataset(cfg.datasets.at(lang), cfg.dataset_format, lang,
                                             cfg.sample_count, cfg.prompt_tokens,
                                             detail::derive_seed(cfg.seed, "ingest/" + lang, 0),
                                             *ctx.tokenizer);

        // Unwatermarked corpus, shared across methods for this language.
        PlainDecoder plain;
        std::vector<GenerationRecord> unwm(cfg.sample_count);
        parallel_for(cfg.sample_count, cfg.workers, [&](std::size_t i) {
            TokenSequence prompt = ctx.tokenizer->encode(ingest.prompts[i], lang);
            SamplerConfig sc{SampleMode::kMultinomial, 1.0,
                             detail::derive_seed(cfg.seed, lang + "/unwm", i)};
            unwm[i] = generate(lm, plain, prompt, cfg.max_new_tokens, sc, ctx.eot_id);
            unwm[i].key_hex = ctx.key.hex();
        });
        write_records_jsonl(out_dir + "/records/" + lang + "_unwm.jsonl", unwm);

        // Unwatermarked quality baselines, shared across methods.
        std::vector<double> ppl_un_all;
        std::vector<std::vector<TokenId>> sb_un_corpus;
        for (const GenerationRecord& rec : unwm) {
            ppl_un_all.push_back(perplexity(rec));
            sb_un_corpus.push_back(rec.output.ids);
        }
        double ppl_unwm_mean = mean_of(ppl_un_all);
        double sb_unwm = self_bleu(sb_un_corpus);

        for (const std::string& method : cfg.methods) {
            std::unique_ptr<Watermarker> wm = ctx.make_watermarker(method);
            std::shared_ptr<XsirBiaser> biaser;
            if (method == "xsir")
                biaser = std::make_shared<XsirBiaser>(ctx.key, ctx.xsir_params(), &ctx.vocab);
            DetectorFn detector = ctx.make_detector(method, biaser);

            std::vector<GenerationRecord> wm_recs(cfg.sample_count);
            parallel_for(cfg.sample_count, cfg.workers, [&](std::size_t i) {
                TokenSequence prompt = ctx.tokenizer->encode(ingest.prompts[i], lang);
                SamplerConfig sc{SampleMode::kMultinomial, 1.0,
                                 detail::derive_seed(cfg.seed, lang + "/" + method + "/wm", i)};
                wm_recs[i] = generate(lm, *wm, prompt, cfg.max_new_tokens, sc, ctx.eot_id);
                wm_recs[i].key_hex = ctx.key.hex();
            });
            write_records_jsonl(out_dir + "/records/" + method + "_" + lang + "_wm.jsonl",
                                wm_recs);

            // Detection through the text -> tokens path.
            std::vector<DetectionOutcome> wm_out(cfg.sample_count), un_out(cfg.sample_count);
            parallel_for(cfg.sample_count, cfg.workers, [&](std::size_t i) {
                wm_out[i] = detector(ctx.tokenizer->encode(
                    ctx.tokenizer->decode(wm_recs[i].output), lang));
                un_out[i] = detector(ctx.tokenizer->encode(
                    ctx.tokenizer->decode(unwm[i].output), lang));
            });
            std::vector<double> pos, neg;
            std::string wm_dump, un_dump;
            for (std::size_t i = 0; i < cfg.sample_count; ++i) {
                pos.push_back(detail::roc_score(wm_out[i]));
                neg.push_back(detail::roc_score(un_out[i]));
                wm_dump += format_score_line(lang + "/" + method + "/wm/" + std::to_string(i),
                                             wm_out[i]) + "\n";
                un_dump += format_score_line(lang + "/" + method + "/unwm/" + std::to_string(i),
                                             un_out[i]) + "\n";
            }
            write_file(out_dir + "/scores/" + method + "_" + lang + "_wm.tsv", wm_dump);
            write_file(out_dir + "/scores/" + method + "_" + lang + "_unwm.tsv", un_dump);

            RocCurve curve = roc(neg, pos);
            report.roc_points[method + ":" + lang + ":noattack"] = curve.points;

            bool has_gd = method == "kgw" || method == "unigram" || method == "xsir";
            std::optional<double> row_gamma =
                method == "xsir" ? std::optional<double>(0.5)
                                 : (has_gd ? std::optional<double>(cfg.gamma) : std::nullopt);
            std::optional<double> row_delta =
                has_gd ? std::optional<double>(cfg.delta) : std::nullopt;

            // Fixed-threshold row: confusion counts from the outcome verdicts.
            {
                std::size_t tp = 0, fp = 0;
                for (const auto& o : wm_out) tp += o.verdict ? 1 : 0;
                for (const auto& o : un_out) fp += o.verdict ? 1 : 0;
                DetectionRow row;
                row.method = method;
                row.language = lang;
                row.gamma = row_gamma;
                row.delta = row_delta;
                row.threshold_kind = "fixed";
                row.threshold = method == "exp" ? cfg.p_threshold
                                : method == "xsir" ? cfg.xsir_threshold : cfg.z_threshold;
                double p_count = static_cast<double>(cfg.sample_count);
                row.tpr = static_cast<double>(tp) / p_count;
                row.fnr = static_cast<double>(cfg.sample_count - tp) / p_count;
                row.fpr = static_cast<double>(fp) / p_count;
                row.tnr = static_cast<double>(cfg.sample_count - fp) / p_count;
                row.auc = curve.auc;
                report.detection.push_back(row);
            }
            for (double target : cfg.target_fprs) {
                CalibrationResult cal = calibrate_threshold(neg, pos, target);
                DetectionRow row;
                row.method = method;
                row.language = lang;
                row.gamma = row_gamma;
                row.delta = row_delta;
                row.threshold_kind = "tpr@fpr=" + format_g12(target);
                row.threshold = cal.threshold;
                row.tpr = cal.achieved_tpr;
                row.fnr = 1.0 - cal.achieved_tpr;
                row.fpr = cal.achieved_fpr;
                row.tnr = 1.0 - cal.achieved_fpr;
                row.auc = curve.auc;
                report.detection.push_back(row);
            }

            // Attack suite over pipelines starting in this language.
            if (cfg.attack_suite) {
                ChannelResources res;
                res.translate_strength = cfg.translate_strength;
                res.paraphrase_strength = cfg.paraphrase_strength;
                res.paraphrase_dropout = cfg.paraphrase_dropout;
                res.rng_seed = detail::derive_seed(cfg.seed, "attack", 0);
                for (const auto& [pair, lex] : ctx.lexicons) {
                    auto arrow = pair.find("->");
                    res.lexicons[{pair.substr(0, arrow), pair.substr(arrow + 2)}] = &lex;
                }
                for (const auto& [l, table] : ctx.synonyms) res.synonyms[l] = &table;
                if (!ctx.merged_synonyms.alternatives.empty())
                    res.merged_synonyms = &ctx.merged_synonyms;

                std::size_t n_att = std::min(cfg.attack_sample_count, cfg.sample_count);
                std::vector<double> neg_att(neg.begin(),
                                            neg.begin() + static_cast<long>(n_att));
                for (const AttackPipeline& pipeline : build_standard_suite(cfg.languages, res)) {
                    if (pipeline.stages.front().src_lang != lang) continue;
                    std::vector<PipelineRun> runs(n_att);
                    parallel_for(n_att, cfg.workers, [&](std::size_t i) {
                        runs[i] = run_pipeline(wm_recs[i], pipeline, detector, *ctx.tokenizer);
                    });
                    AttackRow row;
                    row.method = method;
                    row.language_path = pipeline.path_label;
                    row.shape = pipeline.shape;
                    row.mode = attack_mode_name(pipeline.mode());
                    std::string dump;
                    std::size_t n_stages = pipeline.stages.size() + 1;
                    for (std::size_t k = 0; k < n_stages; ++k) {
                        std::vector<double> stage_scores;
                        for (std::size_t i = 0; i < n_att; ++i) {
                            stage_scores.push_back(detail::roc_score(runs[i].outcomes[k]));
                            dump += format_score_line(
                                        lang + "/" + method + "/" + pipeline.shape + "/stage" +
                                            std::to_string(k) + "/" + std::to_string(i),
                                        runs[i].outcomes[k]) + "\n";
                        }
                        row.stage_auc.push_back(roc(neg_att, stage_scores).auc);
                        if (k + 1 == n_stages) {
                            report.roc_points[method + ":" + pipeline.path_label + ":" +
                                              pipeline.shape] =
                                roc(neg_att, stage_scores).points;
                        }
                    }
                    row.final_auc = row.stage_auc.back();
                    report.attacks.push_back(row);
                    write_file(out_dir + "/attacks/" + method + "_" +
                                   detail::sanitize(pipeline.path_label) + "_" + pipeline.shape +
                                   ".tsv",
                               dump);
                }
            }

            // Quality metrics.
            {
                QualityRow q;
                q.method = method;
                q.language = lang;
                std::vector<double> ppl_wm;
                std::vector<std::vector<TokenId>> sb_wm;
                for (std::size_t i = 0; i < cfg.sample_count; ++i) {
                    ppl_wm.push_back(perplexity(wm_recs[i]));
                    sb_wm.push_back(wm_recs[i].output.ids);
                }
                q.ppl_wm = mean_of(ppl_wm);
                q.ppl_unwm = ppl_unwm_mean;
                q.self_bleu_wm = self_bleu(sb_wm);
                q.self_bleu_unwm = sb_unwm;
                if (judge_client) {
                    JudgeAudit audit(out_dir + "/judge/" + method + "_" + lang + ".jsonl");
                    std::vector<JudgeVerdict> verdicts;
                    std::vector<double> coh_wm, coh_un;
                    for (std::size_t i = 0; i < cfg.sample_count; ++i) {
                        JudgeVerdict v = judge_pair(
                            *judge_client, templates,
                            ctx.tokenizer->decode(wm_recs[i].output),
                            ctx.tokenizer->decode(unwm[i].output), {"coherency"},
                            detail::derive_seed(cfg.seed, lang + "/" + method + "/judge", i),
                            &audit);
                        verdicts.push_back(v);
                        auto it = v.scores.find("coherency");
                        if (it != v.scores.end()) {
                            coh_wm.push_back(it->second.first);
                            coh_un.push_back(it->second.second);
                        }
                    }
                    WinTabulation tab = tabulate_wins(verdicts, JudgeWinner::kA);
                    q.hard_win = tab.hard_win;
                    q.tie = tab.tie;
                    q.soft_win = tab.soft_win;
                    q.judge_failures = tab.failures;
                    if (!coh_wm.empty()) {
                        double mean_wm = mean_of(coh_wm);
                        double mean_un = mean_of(coh_un);
                        q.nc_wm = normalize_coherency(mean_wm);
                        q.nc_unwm = normalize_coherency(mean_un);
                        q.coherency_decrease_pct = relative_decrease(mean_un, mean_wm);
                    }
                }
                q.ad_wm = adjusted_diversity(std::min(1.0, q.self_bleu_wm), q.nc_wm,
                                             cfg.ad_weight);
                q.ad_unwm = adjusted_diversity(std::min(1.0, q.self_bleu_unwm), q.nc_unwm,
                                               cfg.ad_weight);
                report.quality.push_back(q);
            }
        }
    }

    emit_report(report, out_dir);
    return report;
}

}  // namespace xlwm
