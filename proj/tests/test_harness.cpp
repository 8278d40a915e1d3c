#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "xlwm/harness.hpp"
#include "xlwm/net.hpp"

using namespace xlwm;

namespace {

RunConfig desk_config(const std::string& out_dir) {
    RunConfig cfg;
    cfg.methods = {"kgw"};
    cfg.languages = {"en"};
    cfg.datasets = {{"en", testutil::data_path("fixtures/c4like_en.jsonl")}};
    cfg.sample_count = 12;
    cfg.attack_sample_count = 6;
    cfg.prompt_tokens = 8;
    cfg.max_new_tokens = 40;
    cfg.seed = 4242;
    cfg.vocab_path = testutil::data_path("vocab_multi.txt");
    cfg.lexicon_path = testutil::data_path("lexicon.tsv");
    cfg.attack_suite = false;
    cfg.output_dir = out_dir;
    cfg.workers = 2;
    return cfg;
}

}  // namespace

TEST_CASE("ingest_dataset selects deterministically and reports skips") {
    WhitespaceTokenizer tok(
        Vocabulary::from_file(testutil::data_path("vocab_multi.txt"), NormalizationMode::kRaw));

    SECTION("three-line fixture, n=2") {
        IngestResult a = ingest_dataset(testutil::data_path("fixtures/c4_tiny.jsonl"),
                                        DatasetFormat::kJsonlTextField, "en", 2, 4, 9, tok);
        IngestResult b = ingest_dataset(testutil::data_path("fixtures/c4_tiny.jsonl"),
                                        DatasetFormat::kJsonlTextField, "en", 2, 4, 9, tok);
        REQUIRE(a.prompts.size() == 2);
        CHECK(a.prompts == b.prompts);
        CHECK(a.skipped == 0);
        for (const std::string& p : a.prompts)
            CHECK(tok.encode(p).size() == 4);  // prompt = first prompt_tokens tokens
    }

    SECTION("malformed middle line is skipped and counted") {
        std::string dir = testutil::temp_dir("ingest");
        write_file(dir + "/data.jsonl",
                   "{\"text\": \"stone river light cloud\"}\n"
                   "{not json at all\n"
                   "{\"text\": \"ember wind shadow flame\"}\n");
        IngestResult r = ingest_dataset(dir + "/data.jsonl", DatasetFormat::kJsonlTextField,
                                        "en", 2, 3, 1, tok);
        CHECK(r.prompts.size() == 2);
        CHECK(r.skipped == 1);
    }

    SECTION("asking for more records than usable is a hard error") {
        CHECK_THROWS_AS(ingest_dataset(testutil::data_path("fixtures/c4_tiny.jsonl"),
                                       DatasetFormat::kJsonlTextField, "en", 50, 4, 1, tok),
                        ConfigError);
    }

    SECTION("lfqa questions become prompts verbatim") {
        IngestResult r = ingest_dataset(testutil::data_path("fixtures/lfqa_tiny.jsonl"),
                                        DatasetFormat::kLfqaPairs, "en", 4, 30, 2, tok);
        REQUIRE(r.prompts.size() == 4);
        for (const std::string& p : r.prompts) CHECK(!tok.encode(p).empty());
    }
}

TEST_CASE("run config validation and digest") {
    RunConfig cfg = desk_config(testutil::temp_dir("cfg"));
    cfg.validate();

    SECTION("round-trips through json") {
        RunConfig back = RunConfig::from_json(cfg.to_json());
        CHECK(back.to_json() == cfg.to_json());
        CHECK(back.digest() == cfg.digest());
    }
    SECTION("sample_count=0 fails before any work") {
        RunConfig bad = cfg;
        bad.sample_count = 0;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        CHECK_THROWS_AS(run_experiment(bad), ConfigError);
    }
    SECTION("missing dataset and vocab are config errors") {
        RunConfig bad = cfg;
        bad.languages = {"en", "xx"};
        bad.attack_suite = false;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        RunConfig bad2 = cfg;
        bad2.vocab_path.clear();
        CHECK_THROWS_AS(bad2.validate(), ConfigError);
    }
    SECTION("digest ignores output location but not semantics") {
        RunConfig moved = cfg;
        moved.output_dir = "/somewhere/else";
        moved.workers = 7;
        CHECK(moved.digest() == cfg.digest());
        RunConfig changed = cfg;
        changed.delta = 5.0;
        CHECK(changed.digest() != cfg.digest());
    }
}

TEST_CASE("parallel_for covers every index and propagates errors") {
    std::vector<std::atomic<int>> hits(500);
    parallel_for(500, 4, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (const auto& h : hits) REQUIRE(h.load() == 1);

    CHECK_THROWS_AS(parallel_for(100, 4,
                                 [&](std::size_t i) {
                                     if (i == 37) throw ConfigError("boom");
                                 }),
                    ConfigError);
}

TEST_CASE("toy-LM experiment produces a coherent report") {
    std::string out = testutil::temp_dir("run_smoke");
    RunConfig cfg = desk_config(out);
    std::uint64_t net_before = net_request_counter().load();
    RunReport report = run_experiment(cfg);

    // offline runs perform zero network operations
    CHECK(net_request_counter().load() == net_before);

    REQUIRE(report.detection.size() == 3);  // fixed + two calibrated rows
    for (const DetectionRow& row : report.detection) {
        CHECK(row.tpr + row.fnr == Catch::Approx(1.0).margin(1e-12));
        CHECK(row.tnr + row.fpr == Catch::Approx(1.0).margin(1e-12));
    }
    CHECK(report.detection[0].auc > 0.9);  // kgw separates cleanly even at n=12

    REQUIRE(report.quality.size() == 1);
    CHECK(report.quality[0].ppl_wm > 1.0);
    CHECK(report.quality[0].soft_win ==
          report.quality[0].hard_win + report.quality[0].tie);
    CHECK(report.quality[0].ad_wm >= 0.0);

    // run directory layout
    namespace fs = std::filesystem;
    CHECK(fs::exists(out + "/config.snapshot"));
    CHECK(fs::exists(out + "/records/kgw_en_wm.jsonl"));
    CHECK(fs::exists(out + "/records/en_unwm.jsonl"));
    CHECK(fs::exists(out + "/scores/kgw_en_wm.tsv"));
    CHECK(fs::exists(out + "/judge/kgw_en.jsonl"));
    CHECK(fs::exists(out + "/report.json"));
    CHECK(fs::exists(out + "/report.csv"));

    std::string csv = read_file(out + "/report.csv");
    CHECK(csv.rfind("method,language,gamma,delta,threshold,TPR,TNR,FPR,FNR\n", 0) == 0);

    // report json round-trips through the reader without loss
    RunReport back = RunReport::from_json(nlohmann::json::parse(read_file(out + "/report.json")));
    CHECK(back.to_json() == report.to_json());

    // records reload and re-detect identically
    auto records = read_records_jsonl(out + "/records/kgw_en_wm.jsonl");
    REQUIRE(records.size() == cfg.sample_count);
    CHECK(records[0].method == Method::kKgw);
    CHECK(records[0].output.size() == cfg.max_new_tokens);
}

TEST_CASE("offline runs are byte-identical across executions") {
    std::string out1 = testutil::temp_dir("repro1");
    std::string out2 = testutil::temp_dir("repro2");
    RunConfig cfg1 = desk_config(out1);
    RunConfig cfg2 = desk_config(out2);
    cfg1.workers = 1;
    cfg2.workers = 3;  // parallelism must not leak into the artifacts
    run_experiment(cfg1);
    run_experiment(cfg2);
    for (const char* name : {"/report.json", "/report.csv", "/quality.csv", "/attacks.csv"})
        REQUIRE(read_file(out1 + name) == read_file(out2 + name));
    CHECK(read_file(out1 + "/records/kgw_en_wm.jsonl") ==
          read_file(out2 + "/records/kgw_en_wm.jsonl"));
    CHECK(read_file(out1 + "/scores/kgw_en_unwm.tsv") ==
          read_file(out2 + "/scores/kgw_en_unwm.tsv"));
}

TEST_CASE("attack suite rows appear for pipelines starting in each language") {
    std::string out = testutil::temp_dir("run_attacks");
    RunConfig cfg = desk_config(out);
    cfg.languages = {"en", "ar"};
    cfg.datasets["ar"] = testutil::data_path("fixtures/c4like_ar.jsonl");
    cfg.attack_suite = true;
    cfg.sample_count = 10;
    cfg.attack_sample_count = 5;
    cfg.translate_paths = {{"en->ar", testutil::data_path("translate_en_ar.tsv")}};
    cfg.synonym_paths = {{"en", testutil::data_path("synonyms_en.tsv")},
                         {"ar", testutil::data_path("synonyms_ar.tsv")}};
    RunReport report = run_experiment(cfg);

    // en->ar and ar->en, three shapes each
    REQUIRE(report.attacks.size() == 6);
    int symmetric = 0;
    for (const AttackRow& row : report.attacks) {
        REQUIRE(row.stage_auc.size() >= 2);
        if (row.mode == "symmetric") {
            ++symmetric;
            CHECK(row.shape == "T-P-T");
        }
        CHECK(row.final_auc == row.stage_auc.back());
    }
    CHECK(symmetric == 2);
    CHECK(std::filesystem::exists(out + "/attacks"));
    std::string csv = read_file(out + "/attacks.csv");
    CHECK(csv.rfind("method,language_path,shape,mode,stage,auc\n", 0) == 0);
}

TEST_CASE("lfqa-shaped datasets run end to end") {
    std::string out = testutil::temp_dir("run_lfqa");
    RunConfig cfg = desk_config(out);
    cfg.datasets = {{"en", testutil::data_path("fixtures/lfqa_tiny.jsonl")}};
    cfg.dataset_format = DatasetFormat::kLfqaPairs;
    cfg.sample_count = 4;
    cfg.max_new_tokens = 30;
    RunReport report = run_experiment(cfg);
    REQUIRE(report.detection.size() == 3);
    CHECK(report.detection[0].tpr == 1.0);  // kgw still detects at this scale
}

TEST_CASE("emit_report refuses unwritable directories") {
    RunReport report;
    report.config_digest = "d";
    CHECK_THROWS_AS(emit_report(report, "/proc/definitely/not/writable"), ConfigError);
}
