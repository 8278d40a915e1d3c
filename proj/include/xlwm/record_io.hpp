#pragma once

// GenerationRecord serialization. Records go to JSONL files; the method and
// parameter snapshot travels with each record so detection can be replayed
// from the file alone.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlwm/common.hpp"
#include "xlwm/watermark.hpp"

namespace xlwm {

inline nlohmann::json record_to_json(const GenerationRecord& rec) {
    nlohmann::json j{
        {"method", method_name(rec.method)},
        {"language", rec.output.language_tag},
        {"prompt_ids", rec.prompt.ids},
        {"output_ids", rec.output.ids},
        {"per_step_prob", rec.per_step_prob},
        {"gamma", rec.gamma},
        {"delta", rec.delta},
        {"context_width", rec.context_width},
        {"chunk_width", rec.chunk_width},
        {"key_hex", rec.key_hex},
        {"rng_seed", rec.rng_seed},
    };
    if (!rec.trace_green.empty()) {
        std::vector<int> greens(rec.trace_green.begin(), rec.trace_green.end());
        j["trace_green"] = greens;
    }
    if (!rec.trace_r.empty()) j["trace_r"] = rec.trace_r;
    return j;
}

inline GenerationRecord record_from_json(const nlohmann::json& j) {
    GenerationRecord rec;
    rec.method = method_from_name(j.at("method").get<std::string>());
    rec.prompt.ids = j.at("prompt_ids").get<std::vector<TokenId>>();
    rec.output.ids = j.at("output_ids").get<std::vector<TokenId>>();
    rec.prompt.language_tag = j.at("language").get<std::string>();
    rec.output.language_tag = rec.prompt.language_tag;
    rec.per_step_prob = j.at("per_step_prob").get<std::vector<double>>();
    rec.gamma = j.at("gamma").get<double>();
    rec.delta = j.at("delta").get<double>();
    rec.context_width = j.at("context_width").get<int>();
    rec.chunk_width = j.at("chunk_width").get<int>();
    rec.key_hex = j.at("key_hex").get<std::string>();
    rec.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    if (j.contains("trace_green"))
        for (int g : j.at("trace_green").get<std::vector<int>>())
            rec.trace_green.push_back(static_cast<char>(g));
    if (j.contains("trace_r")) rec.trace_r = j.at("trace_r").get<std::vector<double>>();
    return rec;
}

inline void write_records_jsonl(const std::string& path,
                                const std::vector<GenerationRecord>& records) {
    std::string out;
    for (const GenerationRecord& rec : records) {
        out += record_to_json(rec).dump();
        out += '\n';
    }
    write_file(path, out);
}

inline std::vector<GenerationRecord> read_records_jsonl(const std::string& path) {
    std::vector<GenerationRecord> records;
    for (const std::string& line : split_on(read_file(path), '\n')) {
        if (line.empty()) continue;
        records.push_back(record_from_json(nlohmann::json::parse(line)));
    }
    return records;
}

}  // namespace xlwm
