// Command-line front end for the cross-lingual watermarking toolkit.
//
// Subcommands: generate, detect, attack, calibrate, quality, judge, report,
// and all (the full experiment pipeline). Flags map onto RunConfig fields;
// see data/configs/desk_default.json for a complete offline configuration.
//
// Exit codes: 0 success, 2 config error, 3 external-service error,
// 4 internal invariant violation.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "xlwm/harness.hpp"
#include "xlwm/http.hpp"
#include "xlwm/xlwm.hpp"

namespace {

using namespace xlwm;

RunConfig load_config(const std::string& path, const std::string& output_dir_override,
                      int workers_override) {
    RunConfig cfg = RunConfig::from_file(path);
    if (!output_dir_override.empty()) cfg.output_dir = output_dir_override;
    if (workers_override > 0) cfg.workers = workers_override;
    cfg.validate();
    return cfg;
}

std::vector<std::string> filter(const std::vector<std::string>& values,
                                const std::string& keep) {
    if (keep.empty()) return values;
    for (const std::string& v : values)
        if (v == keep) return {keep};
    throw ConfigError("'" + keep + "' is not in the run config");
}

std::uint64_t sample_seed(const RunConfig& cfg, const std::string& scope, std::uint64_t i) {
    Sha256 h;
    std::uint8_t le[8];
    for (int k = 0; k < 8; ++k) le[k] = static_cast<std::uint8_t>(cfg.seed >> (8 * k));
    h.update(le, 8);
    h.update(scope);
    for (int k = 0; k < 8; ++k) le[k] = static_cast<std::uint8_t>(i >> (8 * k));
    h.update(le, 8);
    return fold_digest(h.finalize());
}

int cmd_generate(const RunConfig& cfg, const std::string& only_method,
                 const std::string& only_language) {
    ExperimentContext ctx(cfg);
    std::string out = cfg.output_dir.empty() ? "run" : cfg.output_dir;
    std::filesystem::create_directories(out + "/records");
    for (const std::string& lang : filter(cfg.languages, only_language)) {
        ToyLM lm = ctx.train_lm(lang);
        IngestResult ingest = ingest_dataset(cfg.datasets.at(lang), cfg.dataset_format, lang,
                                             cfg.sample_count, cfg.prompt_tokens,
                                             sample_seed(cfg, "ingest/" + lang, 0),
                                             *ctx.tokenizer);
        PlainDecoder plain;
        std::vector<GenerationRecord> unwm(cfg.sample_count);
        parallel_for(cfg.sample_count, cfg.workers, [&](std::size_t i) {
            TokenSequence prompt = ctx.tokenizer->encode(ingest.prompts[i], lang);
            unwm[i] = generate(lm, plain, prompt, cfg.max_new_tokens,
                               {SampleMode::kMultinomial, 1.0,
                                sample_seed(cfg, lang + "/unwm", i)},
                               ctx.eot_id);
            unwm[i].key_hex = ctx.key.hex();
        });
        write_records_jsonl(out + "/records/" + lang + "_unwm.jsonl", unwm);
        for (const std::string& method : filter(cfg.methods, only_method)) {
            std::unique_ptr<Watermarker> wm = ctx.make_watermarker(method);
            std::vector<GenerationRecord> recs(cfg.sample_count);
            parallel_for(cfg.sample_count, cfg.workers, [&](std::size_t i) {
                TokenSequence prompt = ctx.tokenizer->encode(ingest.prompts[i], lang);
                recs[i] = generate(lm, *wm, prompt, cfg.max_new_tokens,
                                   {SampleMode::kMultinomial, 1.0,
                                    sample_seed(cfg, lang + "/" + method + "/wm", i)},
                                   ctx.eot_id);
                recs[i].key_hex = ctx.key.hex();
            });
            std::string path = out + "/records/" + method + "_" + lang + "_wm.jsonl";
            write_records_jsonl(path, recs);
            std::cout << path << ": " << recs.size() << " records\n";
        }
    }
    return kExitOk;
}

int cmd_detect(const RunConfig& cfg, const std::string& records_path,
               const std::string& out_path, bool with_prompt,
               const std::string& method_override) {
    ExperimentContext ctx(cfg);
    std::vector<GenerationRecord> records = read_records_jsonl(records_path);
    if (records.empty()) throw ConfigError("no records in " + records_path);
    std::string dump;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const GenerationRecord& rec = records[i];
        std::string method =
            method_override.empty() ? method_name(rec.method) : method_override;
        if (method == "none")
            throw ConfigError("records carry no watermark method; pass --method");
        Method method_id = method_from_name(method);
        DetectionOutcome outcome;
        if (with_prompt) {
            std::span<const TokenId> preceding(rec.prompt.ids);
            switch (method_id) {
                case Method::kKgw:
                    outcome = kgw_z(rec.output, ctx.key,
                                    {cfg.gamma, cfg.delta, cfg.kgw_context_width}, ctx.vocab,
                                    cfg.z_threshold, preceding);
                    break;
                case Method::kUnigram:
                    outcome = unigram_z(rec.output, ctx.key, cfg.gamma, ctx.vocab,
                                        cfg.z_threshold);
                    break;
                case Method::kExp:
                    outcome = exp_score(rec.output, ctx.key, {cfg.exp_context_width}, ctx.vocab,
                                        cfg.p_threshold, preceding);
                    break;
                case Method::kXsir:
                    outcome = xsir_score(rec.output, ctx.key, ctx.xsir_params(), ctx.vocab,
                                         cfg.xsir_threshold, preceding);
                    break;
                default:
                    throw ConfigError("no detector for method " + method);
            }
        } else {
            outcome = ctx.make_detector(method)(rec.output);
        }
        dump += format_score_line(records_path + "/" + std::to_string(i), outcome) + "\n";
    }
    if (out_path.empty()) std::cout << dump;
    else write_file(out_path, dump);
    return kExitOk;
}

std::vector<double> read_scores(const std::string& path) {
    std::vector<double> scores;
    for (const std::string& line : split_on(read_file(path), '\n')) {
        if (line.empty()) continue;
        auto fields = split_on(line, '\t');
        // plain one-score-per-line files or score-dump lines (statistic = 3rd field)
        scores.push_back(std::stod(fields.size() >= 3 ? fields[2] : fields[0]));
    }
    if (scores.empty()) throw ConfigError("no scores in " + path);
    return scores;
}

int cmd_calibrate(const std::string& neg_path, const std::string& pos_path, double target_fpr) {
    std::vector<double> neg = read_scores(neg_path);
    std::vector<double> pos = read_scores(pos_path);
    CalibrationResult cal = calibrate_threshold(neg, pos, target_fpr);
    RocCurve curve = roc(neg, pos);
    nlohmann::json j{{"threshold", cal.threshold},
                     {"achieved_fpr", cal.achieved_fpr},
                     {"achieved_tpr", cal.achieved_tpr},
                     {"auc", curve.auc},
                     {"negatives", neg.size()},
                     {"positives", pos.size()}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_quality(const RunConfig& cfg, const std::string& wm_path, const std::string& unwm_path) {
    ExperimentContext ctx(cfg);
    std::vector<GenerationRecord> wm = read_records_jsonl(wm_path);
    std::vector<GenerationRecord> unwm = read_records_jsonl(unwm_path);
    if (wm.size() != unwm.size() || wm.empty())
        throw ConfigError("need equal non-empty watermarked/unwatermarked record files");

    std::vector<double> ppl_wm_v, ppl_un_v;
    std::vector<std::vector<TokenId>> sb_wm, sb_un;
    for (std::size_t i = 0; i < wm.size(); ++i) {
        ppl_wm_v.push_back(perplexity(wm[i]));
        ppl_un_v.push_back(perplexity(unwm[i]));
        sb_wm.push_back(wm[i].output.ids);
        sb_un.push_back(unwm[i].output.ids);
    }
    HeuristicJudge judge;
    JudgeTemplates templates = default_judge_templates();
    std::vector<JudgeVerdict> verdicts;
    std::vector<double> coh_wm, coh_un;
    for (std::size_t i = 0; i < wm.size(); ++i) {
        JudgeVerdict v = judge_pair(judge, templates, ctx.tokenizer->decode(wm[i].output),
                                    ctx.tokenizer->decode(unwm[i].output), {"coherency"},
                                    sample_seed(cfg, "cli/judge", i));
        verdicts.push_back(v);
        auto it = v.scores.find("coherency");
        if (it != v.scores.end()) {
            coh_wm.push_back(it->second.first);
            coh_un.push_back(it->second.second);
        }
    }
    WinTabulation tab = tabulate_wins(verdicts, JudgeWinner::kA);
    double nc_wm = normalize_coherency(mean_of(coh_wm));
    double nc_un = normalize_coherency(mean_of(coh_un));
    double sb_wm_score = self_bleu(sb_wm);
    double sb_un_score = self_bleu(sb_un);
    nlohmann::json j{
        {"ppl_wm", mean_of(ppl_wm_v)},
        {"ppl_unwm", mean_of(ppl_un_v)},
        {"self_bleu_wm", sb_wm_score},
        {"self_bleu_unwm", sb_un_score},
        {"nc_wm", nc_wm},
        {"nc_unwm", nc_un},
        {"ad_wm", adjusted_diversity(std::min(1.0, sb_wm_score), nc_wm, cfg.ad_weight)},
        {"ad_unwm", adjusted_diversity(std::min(1.0, sb_un_score), nc_un, cfg.ad_weight)},
        {"coherency_decrease_pct", relative_decrease(mean_of(coh_un), mean_of(coh_wm))},
        {"hard_win", tab.hard_win},
        {"tie", tab.tie},
        {"soft_win", tab.soft_win},
        {"judge_failures", tab.failures}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_attack(const RunConfig& cfg, const std::string& records_path, std::size_t limit) {
    ExperimentContext ctx(cfg);
    std::vector<GenerationRecord> records = read_records_jsonl(records_path);
    if (records.empty()) throw ConfigError("no records in " + records_path);
    if (limit > 0 && records.size() > limit) records.resize(limit);
    std::string lang = records[0].output.language_tag;
    std::string method = method_name(records[0].method);
    DetectorFn detector = ctx.make_detector(method);

    ChannelResources res;
    res.translate_strength = cfg.translate_strength;
    res.paraphrase_strength = cfg.paraphrase_strength;
    res.paraphrase_dropout = cfg.paraphrase_dropout;
    res.rng_seed = sample_seed(cfg, "attack", 0);
    for (const auto& [pair, lex] : ctx.lexicons) {
        auto arrow = pair.find("->");
        res.lexicons[{pair.substr(0, arrow), pair.substr(arrow + 2)}] = &lex;
    }
    for (const auto& [l, table] : ctx.synonyms) res.synonyms[l] = &table;
    if (!ctx.merged_synonyms.alternatives.empty()) res.merged_synonyms = &ctx.merged_synonyms;

    nlohmann::json summary = nlohmann::json::array();
    for (const AttackPipeline& pipeline : build_standard_suite(cfg.languages, res)) {
        if (pipeline.stages.front().src_lang != lang) continue;
        std::vector<PipelineRun> runs(records.size());
        parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
            runs[i] = run_pipeline(records[i], pipeline, detector, *ctx.tokenizer);
        });
        nlohmann::json stages = nlohmann::json::array();
        for (std::size_t k = 0; k < runs[0].outcomes.size(); ++k) {
            double mean_stat = 0;
            for (const PipelineRun& r : runs) mean_stat += r.outcomes[k].statistic;
            stages.push_back(mean_stat / static_cast<double>(runs.size()));
        }
        summary.push_back({{"shape", pipeline.shape},
                           {"path", pipeline.path_label},
                           {"mode", attack_mode_name(pipeline.mode())},
                           {"mean_statistic_per_stage", stages}});
    }
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

int cmd_judge(const std::string& a_path, const std::string& b_path, const std::string& judge_url,
              const std::string& audit_path, std::uint64_t seed) {
    std::vector<std::string> a_texts, b_texts;
    for (const std::string& line : split_on(read_file(a_path), '\n'))
        if (!line.empty()) a_texts.push_back(line);
    for (const std::string& line : split_on(read_file(b_path), '\n'))
        if (!line.empty()) b_texts.push_back(line);
    if (a_texts.size() != b_texts.size() || a_texts.empty())
        throw ConfigError("judge needs two aligned non-empty text files");

    std::unique_ptr<JudgeClient> client;
    if (judge_url == "mock") {
        client = std::make_unique<HeuristicJudge>();
    } else if (judge_url.rfind("http://", 0) == 0) {
        std::string rest = judge_url.substr(7);
        auto colon = rest.find(':');
        if (colon == std::string::npos) throw ConfigError("judge url needs host:port");
        client = std::make_unique<TransportJudgeClient<HttpJudgeTransport>>(
            HttpJudgeTransport(rest.substr(0, colon), std::stoi(rest.substr(colon + 1))));
    } else {
        throw ConfigError("judge must be 'mock' or http://host:port");
    }

    std::optional<JudgeAudit> audit;
    if (!audit_path.empty()) audit.emplace(audit_path);
    JudgeTemplates templates = default_judge_templates();
    std::vector<JudgeVerdict> verdicts;
    for (std::size_t i = 0; i < a_texts.size(); ++i)
        verdicts.push_back(judge_pair(*client, templates, a_texts[i], b_texts[i], {"coherency"},
                                      seed * 100003ull + i, audit ? &*audit : nullptr));
    WinTabulation tab = tabulate_wins(verdicts, JudgeWinner::kA);
    nlohmann::json j{{"pairs", a_texts.size()},
                     {"hard_win", tab.hard_win},
                     {"tie", tab.tie},
                     {"soft_win", tab.soft_win},
                     {"failures", tab.failures}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_report(const std::string& run_dir) {
    RunReport report =
        RunReport::from_json(nlohmann::json::parse(read_file(run_dir + "/report.json")));
    emit_report(report, run_dir);
    std::cout << "report re-emitted under " << run_dir << "\n";
    return kExitOk;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"cross-lingual LLM watermarking toolkit"};
    app.require_subcommand(1);

    std::string config_path, output_dir, records_path, out_path;
    std::string neg_path, pos_path, wm_path, unwm_path;
    std::string a_path, b_path, judge_url = "mock", audit_path, run_dir;
    std::string only_method, only_language;
    double target_fpr = 0.01;
    int workers = 0;
    std::size_t limit = 0;
    std::uint64_t seed = 1;
    bool with_prompt = false;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run config JSON")->required();
        sub->add_option("--output-dir", output_dir, "override config output_dir");
        sub->add_option("--workers", workers, "override worker count");
    };

    CLI::App* all = app.add_subcommand("all", "run the full experiment pipeline");
    add_config(all);

    CLI::App* gen = app.add_subcommand("generate", "generate paired corpora");
    add_config(gen);
    gen->add_option("--method", only_method, "restrict to one method");
    gen->add_option("--language", only_language, "restrict to one language");

    CLI::App* det = app.add_subcommand("detect", "score a records file");
    add_config(det);
    det->add_option("--records", records_path, "records jsonl")->required();
    det->add_option("--out", out_path, "write score dump here instead of stdout");
    det->add_option("--method", only_method,
                    "detector to apply (defaults to each record's own method)");
    det->add_flag("--with-prompt", with_prompt,
                  "replay detection with the recorded prompt as preceding context");

    CLI::App* att = app.add_subcommand("attack", "run the standard attack suite on records");
    add_config(att);
    att->add_option("--records", records_path, "watermarked records jsonl")->required();
    att->add_option("--limit", limit, "cap the number of records");

    CLI::App* cal = app.add_subcommand("calibrate", "empirical threshold calibration");
    cal->add_option("--neg", neg_path, "negative scores file")->required();
    cal->add_option("--pos", pos_path, "positive scores file")->required();
    cal->add_option("--target-fpr", target_fpr, "target false-positive rate");

    CLI::App* qua = app.add_subcommand("quality", "quality metrics for paired records");
    add_config(qua);
    qua->add_option("--wm", wm_path, "watermarked records jsonl")->required();
    qua->add_option("--unwm", unwm_path, "unwatermarked records jsonl")->required();

    CLI::App* jud = app.add_subcommand("judge", "pairwise judging over two text files");
    jud->add_option("--a", a_path, "file with one text per line")->required();
    jud->add_option("--b", b_path, "file with one text per line")->required();
    jud->add_option("--judge", judge_url, "mock or http://host:port");
    jud->add_option("--audit", audit_path, "append audit jsonl here");
    jud->add_option("--seed", seed, "base seed for order randomization");

    CLI::App* rep = app.add_subcommand("report", "re-emit report files from a run directory");
    rep->add_option("--run-dir", run_dir, "directory containing report.json")->required();

    CLI11_PARSE(app, argc, argv);

    if (all->parsed()) {
        RunConfig cfg = load_config(config_path, output_dir, workers);
        RunReport report = run_experiment(cfg);
        std::cout << "report written to " << (cfg.output_dir.empty() ? "run" : cfg.output_dir)
                  << "/report.json (" << report.detection.size() << " detection rows)\n";
        return kExitOk;
    }
    if (gen->parsed())
        return cmd_generate(load_config(config_path, output_dir, workers), only_method,
                            only_language);
    if (det->parsed())
        return cmd_detect(load_config(config_path, output_dir, workers), records_path, out_path,
                          with_prompt, only_method);
    if (att->parsed())
        return cmd_attack(load_config(config_path, output_dir, workers), records_path, limit);
    if (cal->parsed()) return cmd_calibrate(neg_path, pos_path, target_fpr);
    if (qua->parsed())
        return cmd_quality(load_config(config_path, output_dir, workers), wm_path, unwm_path);
    if (jud->parsed()) return cmd_judge(a_path, b_path, judge_url, audit_path, seed);
    if (rep->parsed()) return cmd_report(run_dir);
    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const xlwm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return xlwm::kExitConfig;
    } catch (const xlwm::ExternalServiceError& e) {
        std::cerr << "external service error: " << e.what() << "\n";
        return xlwm::kExitExternalService;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return xlwm::kExitInternal;
    }
}
