#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "autohall/backend.hpp"
#include "autohall/detect.hpp"
#include "autohall/evalreport.hpp"
#include "autohall/pipeline.hpp"

namespace autohall {

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

inline void write_run_manifest(const std::string& path, const json& config_snapshot,
                               const std::string& corpus_path, const PromptRegistry& prompts,
                               std::uint64_t seed, const GenerationStats* stats = nullptr) {
    json manifest;
    manifest["config"] = config_snapshot;
    manifest["corpus_checksum"] = fnv1a64_hex(read_file(corpus_path));
    json checksums;
    for (const auto& id : prompts.ids()) checksums[id] = prompts.checksum(id);
    manifest["template_checksums"] = checksums;
    manifest["seed"] = seed;
    if (stats) manifest["stats"] = *stats;
    write_file(path, manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Detection over a balanced dataset
// ---------------------------------------------------------------------------

enum class DetectMethod { Ours, ZeroSelfCheck, FewSelfCheck, Unigram };

inline DetectMethod detect_method_from_string(const std::string& s) {
    if (s == "ours") return DetectMethod::Ours;
    if (s == "zero-selfck") return DetectMethod::ZeroSelfCheck;
    if (s == "few-selfck") return DetectMethod::FewSelfCheck;
    if (s == "selfck-1gm") return DetectMethod::Unigram;
    throw ConfigError("unknown method: " + s);
}

inline std::string to_string(DetectMethod m) {
    switch (m) {
        case DetectMethod::Ours: return "ours";
        case DetectMethod::ZeroSelfCheck: return "zero-selfck";
        case DetectMethod::FewSelfCheck: return "few-selfck";
        case DetectMethod::Unigram: return "selfck-1gm";
    }
    throw Error("bad method enum");
}

struct DetectOptions {
    DetectMethod method = DetectMethod::Ours;
    std::uint32_t k = 13;
    std::uint32_t threshold = 1;
    double sampling_temperature = 0.1;
    bool unigram_include_original = true;
    UnigramAgg unigram_agg = UnigramAgg::Mean;
    /// NaN means calibrate on the labeled entries (brute-force F1 sweep).
    double unigram_threshold = std::numeric_limits<double>::quiet_NaN();
    std::vector<Exemplar> exemplars;  // few-shot only
    std::string contradiction_template = "contradict.v1";
    std::uint32_t worker_threads = 0;
};

struct DetectRun {
    std::vector<json> records;                 // one line-record per entry
    std::map<std::string, bool> predictions;   // claim_id -> predicted hallucination
};

/// Runs one detection method over every dataset entry. Entries run
/// concurrently under the backend bound; output is sorted by claim id.
inline DetectRun detect_dataset(const std::vector<DatasetEntry>& entries, const DetectOptions& opt,
                                const PromptRegistry& prompts, Backend& backend) {
    struct Slot {
        json record;
        bool predicted = false;
        bool failed = false;
        double score = 0.0;
    };
    std::vector<Slot> slots(entries.size());

    auto run_entry = [&](std::size_t i) {
        const DatasetEntry& entry = entries[i];
        Slot& slot = slots[i];
        switch (opt.method) {
            case DetectMethod::Ours: {
                DetectionOutcome outcome =
                    detect(entry.claim, entry.reference, opt.k, opt.threshold, prompts, backend,
                           opt.sampling_temperature, opt.contradiction_template);
                slot.predicted = outcome.predicted_hallucination;
                slot.record = outcome_record(outcome, "ours");
                break;
            }
            case DetectMethod::ZeroSelfCheck: {
                slot.predicted = zero_shot_selfcheck(entry.claim, entry.reference, prompts, backend);
                slot.record = json{{"claim_id", entry.claim.id},
                                   {"method", "zero-selfck"},
                                   {"predicted", slot.predicted}};
                break;
            }
            case DetectMethod::FewSelfCheck: {
                slot.predicted =
                    few_shot_selfcheck(entry.claim, entry.reference, opt.exemplars, prompts, backend);
                slot.record = json{{"claim_id", entry.claim.id},
                                   {"method", "few-selfck"},
                                   {"predicted", slot.predicted}};
                break;
            }
            case DetectMethod::Unigram: {
                GenerationParams base;
                base.model_id = backend.config().model_id;
                base.temperature = opt.sampling_temperature;
                auto maybe = sample_alternatives(entry.claim, opt.k, base, prompts, backend);
                std::vector<std::string> texts;
                for (const auto& s : maybe)
                    if (s) texts.push_back(s->text);
                if (texts.empty()) throw Error("all samples missing for " + entry.claim.id);
                slot.score = unigram_score(entry.reference.text, texts,
                                           opt.unigram_include_original, opt.unigram_agg);
                break;
            }
        }
    };

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= entries.size()) break;
            try {
                run_entry(i);
            } catch (const Error& e) {
                slots[i].failed = true;
                slots[i].record = json{{"claim_id", entries[i].claim.id},
                                       {"error", std::string(e.what())},
                                       {"method", to_string(opt.method)}};
            }
        }
    };
    std::uint32_t n_workers = opt.worker_threads ? opt.worker_threads
                                                 : backend.config().max_concurrency;
    n_workers = std::min<std::uint32_t>(n_workers, static_cast<std::uint32_t>(entries.size()));
    if (n_workers <= 1) {
        work();
    } else {
        std::vector<std::thread> threads;
        for (std::uint32_t t = 0; t < n_workers; ++t) threads.emplace_back(work);
        for (auto& t : threads) t.join();
    }

    // unigram scores become predictions only once the threshold is known
    if (opt.method == DetectMethod::Unigram) {
        double threshold = opt.unigram_threshold;
        if (std::isnan(threshold)) {
            std::vector<double> scores;
            std::vector<bool> gold;
            for (std::size_t i = 0; i < entries.size(); ++i) {
                if (slots[i].failed) continue;
                scores.push_back(slots[i].score);
                gold.push_back(entries[i].is_hallucination);
            }
            threshold = calibrate_unigram_threshold(scores, gold);
        }
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (slots[i].failed) continue;
            slots[i].predicted = unigram_predict(slots[i].score, threshold);
            slots[i].record = json{{"K", opt.k},
                                   {"claim_id", entries[i].claim.id},
                                   {"method", "selfck-1gm"},
                                   {"predicted", slots[i].predicted},
                                   {"score", slots[i].score},
                                   {"threshold", threshold}};
        }
    }

    std::vector<std::size_t> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return entries[a].claim.id < entries[b].claim.id; });

    DetectRun run;
    for (std::size_t i : order) {
        run.records.push_back(slots[i].record);
        if (!slots[i].failed) run.predictions[entries[i].claim.id] = slots[i].predicted;
    }
    return run;
}

// ---------------------------------------------------------------------------
// Loading persisted detection output back for evaluation / ablation
// ---------------------------------------------------------------------------

inline std::map<std::string, bool> load_predictions(const std::string& path) {
    std::map<std::string, bool> out;
    for (const auto& j : read_jsonl(path)) {
        if (!j.contains("predicted")) continue;  // failed entries carry no prediction
        out[j.at("claim_id").get<std::string>()] = j.at("predicted").get<bool>();
    }
    return out;
}

inline std::vector<OutcomeRow> load_outcome_rows(const std::string& detect_path,
                                                 const std::map<std::string, bool>& gold) {
    std::vector<OutcomeRow> rows;
    for (const auto& j : read_jsonl(detect_path)) {
        if (!j.contains("verdict_bits")) continue;
        OutcomeRow row;
        row.claim_id = j.at("claim_id").get<std::string>();
        row.verdict_bits = j.at("verdict_bits").get<std::string>();
        auto it = gold.find(row.claim_id);
        if (it == gold.end()) continue;
        row.gold_hallucination = it->second;
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::map<std::string, bool> gold_from_entries(const std::vector<DatasetEntry>& entries) {
    std::map<std::string, bool> gold;
    for (const auto& e : entries) gold[e.claim.id] = e.is_hallucination;
    return gold;
}

}  // namespace autohall
