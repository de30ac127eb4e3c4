// autohall — dataset construction and hallucination detection CLI.
//
// Subcommands: generate, detect, eval, ablate, sweep.
// Exit codes: 0 success, 2 usage error, 3 input error, 4 backend error,
// 5 internal invariant violation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>

#include <CLI11.hpp>

#include "autohall/backend_http.hpp"
#include "autohall/ingest.hpp"
#include "autohall/runner.hpp"

namespace fs = std::filesystem;
using namespace autohall;

namespace {

constexpr const char* kVersion = "autohall 0.1.0";

struct CommonFlags {
    std::string config_path;
    std::string backend_kind = "scripted";
    std::string endpoint;
    std::string model_id = "default";
    std::string script_path;
    std::string cache_dir;
    std::uint32_t max_concurrency = 4;
    std::uint32_t retry_attempts = 4;
    std::uint32_t retry_backoff_ms = 250;
    std::string template_overrides;
    std::uint64_t seed = 0;

    json config;  // loaded config file, flags win

    void add_to(CLI::App& app) {
        app.add_option("--config", config_path, "JSON config file; flags override its values");
        app.add_option("--backend", backend_kind, "Backend kind: http or scripted")
            ->check(CLI::IsMember({"http", "scripted"}));
        app.add_option("--endpoint", endpoint, "Chat-completions endpoint URL (http backend)");
        app.add_option("--model", model_id, "Model identifier");
        app.add_option("--script", script_path, "Scripted backend reply file");
        app.add_option("--cache-dir", cache_dir, "Replay cache directory");
        app.add_option("--max-concurrency", max_concurrency, "Max in-flight backend requests")
            ->check(CLI::PositiveNumber);
        app.add_option("--retry-attempts", retry_attempts)->check(CLI::PositiveNumber);
        app.add_option("--retry-backoff-ms", retry_backoff_ms);
        app.add_option("--template-overrides", template_overrides, "Template override file");
        app.add_option("--seed", seed, "Seed for all sampling randomness");
    }

    void load_config(const CLI::App& app) {
        if (config_path.empty()) return;
        config = json::parse(read_file(config_path));
        auto take = [&](const char* flag, const char* key, auto& target) {
            if (app.count(flag) == 0 && config.contains(key)) target = config[key];
        };
        take("--backend", "backend", backend_kind);
        take("--endpoint", "endpoint", endpoint);
        take("--model", "model_id", model_id);
        take("--script", "script", script_path);
        take("--cache-dir", "cache_dir", cache_dir);
        take("--max-concurrency", "max_concurrency", max_concurrency);
        take("--template-overrides", "template_overrides_path", template_overrides);
        take("--seed", "seed", seed);
    }

    BackendConfig backend_config() const {
        BackendConfig cfg;
        cfg.kind = backend_kind == "http" ? BackendKind::Http : BackendKind::Scripted;
        cfg.endpoint = endpoint;
        cfg.model_id = model_id;
        cfg.max_concurrency = max_concurrency;
        cfg.retry = {retry_attempts, retry_backoff_ms};
        cfg.cache_dir = cache_dir;
        cfg.script_path = script_path;
        return cfg;
    }

    PromptRegistry registry() const {
        PromptRegistry prompts;
        if (!template_overrides.empty()) prompts.apply_overrides(template_overrides);
        return prompts;
    }

    json snapshot() const {
        return json{{"backend", backend_kind}, {"endpoint", endpoint},
                    {"model_id", model_id},   {"cache_dir", cache_dir},
                    {"script", script_path},  {"max_concurrency", max_concurrency},
                    {"seed", seed}};
    }
};

void require_input(const std::string& path, const std::string& role) {
    if (!fs::exists(path)) throw IoError("missing " + role + " file: " + path);
}

int cmd_generate(CommonFlags& common, const std::string& dataset_name, const std::string& in_path,
                 const std::string& out_dir, double temperature,
                 const std::string& expected_counts, bool allow_unbalanced,
                 const std::string& refusal_patterns_path) {
    require_input(in_path, "corpus");
    CorpusManifest manifest;
    manifest.dataset = dataset_from_string(dataset_name);
    manifest.path = in_path;
    if (!expected_counts.empty()) {
        auto comma = expected_counts.find(',');
        if (comma == std::string::npos)
            throw ConfigError("--expected-counts wants 'factual,nonfactual'");
        manifest.expected_counts = {{BinaryVerdict::Factual,
                                     std::stoul(expected_counts.substr(0, comma))},
                                    {BinaryVerdict::NonFactual,
                                     std::stoul(expected_counts.substr(comma + 1))}};
    }
    LoadReport report;
    auto corpus = load_corpus(manifest, &report);
    if (report.unmappable || report.malformed)
        std::cerr << "warning: dropped " << report.unmappable << " unmappable and "
                  << report.malformed << " malformed records\n";

    auto backend = make_backend(common.backend_config());
    PromptRegistry prompts = common.registry();

    PipelineConfig pipeline;
    pipeline.temperature = temperature;
    pipeline.seed = common.seed;
    pipeline.allow_unbalanced = allow_unbalanced;
    pipeline.out_dir = out_dir;
    if (!refusal_patterns_path.empty())
        pipeline.refusal_patterns = load_refusal_patterns(refusal_patterns_path);

    BalancedDataset dataset = run_autohall(corpus, pipeline, prompts, *backend);

    json snapshot = common.snapshot();
    snapshot["dataset"] = dataset_name;
    snapshot["temperature"] = temperature;
    write_run_manifest((fs::path(out_dir) / "run_manifest.json").string(), snapshot, in_path,
                       prompts, common.seed, &dataset.stats);

    char rate[16];
    std::snprintf(rate, sizeof(rate), "%.2f", dataset.stats.hallucination_rate);
    std::cout << "N=" << dataset.stats.total_claims
              << ", invalid=" << dataset.stats.invalid_references
              << ", H=" << dataset.stats.hallucination_count << ", H%=" << rate << "\n";
    return 0;
}

int cmd_detect(CommonFlags& common, const std::string& in_path, const std::string& out_path,
               const std::string& method, std::uint32_t k, std::uint32_t threshold,
               double temperature, bool include_original, const std::string& agg,
               double unigram_threshold, const std::string& exemplars_path) {
    require_input(in_path, "balanced dataset");
    auto entries = load_dataset_entries(in_path);
    auto backend = make_backend(common.backend_config());
    PromptRegistry prompts = common.registry();

    DetectOptions opt;
    opt.method = detect_method_from_string(method);
    opt.k = k;
    opt.threshold = threshold;
    opt.sampling_temperature = temperature;
    opt.unigram_include_original = include_original;
    opt.unigram_agg = agg == "max" ? UnigramAgg::Max : UnigramAgg::Mean;
    opt.unigram_threshold = unigram_threshold;
    if (opt.method == DetectMethod::FewSelfCheck) {
        std::string path = exemplars_path.empty() ? "data/exemplars.jsonl" : exemplars_path;
        require_input(path, "exemplar");
        opt.exemplars = load_exemplars(path);
        validate_exemplars(opt.exemplars);
    }

    DetectRun run = detect_dataset(entries, opt, prompts, *backend);
    write_jsonl(out_path, run.records);
    std::cout << "detected " << run.predictions.size() << " of " << entries.size()
              << " entries -> " << out_path << "\n";
    return 0;
}

int cmd_eval(CommonFlags& common, const std::string& pred_path, const std::string& gold_path,
             const std::string& out_dir, bool with_topics,
             const std::vector<std::string>& topic_vocab) {
    require_input(pred_path, "prediction");
    require_input(gold_path, "gold dataset");
    auto entries = load_dataset_entries(gold_path);
    auto gold = gold_from_entries(entries);
    auto predictions = load_predictions(pred_path);

    ReportInputs inputs;
    inputs.matrix = confusion(predictions, gold);

    auto rows = load_outcome_rows(pred_path, gold);
    if (!rows.empty()) {
        std::size_t k_max = 0;
        for (const auto& r : rows) k_max = std::max(k_max, r.verdict_bits.size());
        inputs.conflicts = conflict_stats(rows, static_cast<std::uint32_t>(k_max));
    }

    if (with_topics) {
        auto backend = make_backend(common.backend_config());
        PromptRegistry prompts = common.registry();
        BalancedDataset dataset;
        dataset.entries = entries;
        auto vocab = topic_vocab.empty() ? default_topic_vocabulary() : topic_vocab;
        inputs.topics = topic_distribution(dataset, vocab, prompts, *backend);
    }

    emit_report(inputs, out_dir);
    std::cout << "report -> " << out_dir << "\n";
    return 0;
}

int cmd_ablate(const std::string& pred_path, const std::string& gold_path,
               const std::string& out_dir, std::uint32_t k_max, std::uint32_t threshold) {
    require_input(pred_path, "prediction");
    require_input(gold_path, "gold dataset");
    auto gold = gold_from_entries(load_dataset_entries(gold_path));
    auto rows = load_outcome_rows(pred_path, gold);
    if (rows.empty()) throw IoError("no outcomes with stored verdicts in " + pred_path);

    ReportInputs inputs;
    inputs.ablation = ablate_k(rows, k_max, threshold);
    emit_report(inputs, out_dir);
    std::cout << "ablation curve (" << inputs.ablation.size() << " rows) -> " << out_dir << "\n";
    return 0;
}

int cmd_sweep(CommonFlags& common, const std::string& in_path, const std::string& out_dir) {
    require_input(in_path, "labeled pair");
    auto entries = load_dataset_entries(in_path);
    std::vector<LabeledPair> pairs;
    for (const auto& e : entries)
        pairs.push_back({e.claim, e.reference,
                         e.claim.gold == BinaryVerdict::Factual ? Category::T : Category::F});

    auto backend = make_backend(common.backend_config());
    PromptRegistry prompts = common.registry();

    ReportInputs inputs;
    inputs.sweep = prompt_sweep(pairs, prompts, *backend);
    emit_report(inputs, out_dir);
    for (const auto& row : inputs.sweep) {
        char pct[16];
        std::snprintf(pct, sizeof(pct), "%.1f", row.accuracy_percent);
        std::cout << row.template_id << " accuracy " << pct << " (" << row.evaluated
                  << " pairs)\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AutoHall hallucination dataset construction and detection"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonFlags common;

    // generate
    auto* generate = app.add_subcommand("generate", "Build a balanced hallucination dataset");
    common.add_to(*generate);
    std::string gen_dataset = "generic", gen_in, gen_out = "out";
    double gen_temp = 0.1;
    std::string gen_expected, gen_refusals;
    bool gen_allow_unbalanced = false;
    generate->add_option("--dataset", gen_dataset, "Corpus adapter")
        ->check(CLI::IsMember({"climate-fever", "pubhealth", "wice", "generic"}));
    generate->add_option("--in", gen_in, "Corpus file")->required();
    generate->add_option("--out-dir", gen_out, "Artifact directory");
    generate->add_option("--temp", gen_temp, "Generation temperature")
        ->check(CLI::Range(0.0, 1.0));
    generate->add_option("--expected-counts", gen_expected, "factual,nonfactual count assertion");
    generate->add_flag("--allow-unbalanced", gen_allow_unbalanced,
                       "Keep all factual entries when hallucinatory ones outnumber them");
    generate->add_option("--refusal-patterns", gen_refusals, "Refusal pattern file");

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "Run a detection method over a dataset");
    common.add_to(*detect_cmd);
    std::string det_in, det_out = "out.detect", det_method = "ours", det_agg = "mean",
                det_exemplars;
    std::uint32_t det_k = 13, det_threshold = 1;
    double det_temp = 0.1;
    double det_unigram_threshold = std::numeric_limits<double>::quiet_NaN();
    bool det_include_original = true;
    detect_cmd->add_option("--in", det_in, "Balanced dataset file")->required();
    detect_cmd->add_option("--out", det_out, "Detection output file");
    detect_cmd->add_option("--method", det_method, "ours | zero-selfck | few-selfck | selfck-1gm")
        ->check(CLI::IsMember({"ours", "zero-selfck", "few-selfck", "selfck-1gm"}));
    detect_cmd->add_option("--k", det_k, "Number of sampled references")->check(CLI::PositiveNumber);
    detect_cmd->add_option("--threshold", det_threshold, "Conflict-count decision threshold")
        ->check(CLI::PositiveNumber);
    detect_cmd->add_option("--temp", det_temp, "Sampling temperature")->check(CLI::Range(0.0, 1.0));
    detect_cmd->add_option("--include-original", det_include_original,
                           "Include the original reference in the unigram corpus");
    detect_cmd->add_option("--agg", det_agg, "Unigram aggregation: mean | max")
        ->check(CLI::IsMember({"mean", "max"}));
    detect_cmd->add_option("--unigram-threshold", det_unigram_threshold,
                           "Fixed unigram threshold (default: calibrate on the labeled split)");
    detect_cmd->add_option("--exemplars", det_exemplars, "Few-shot exemplar file");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Metrics and report from detection output");
    common.add_to(*eval_cmd);
    std::string eval_pred, eval_gold, eval_out = "reports";
    bool eval_topics = false;
    std::vector<std::string> eval_vocab;
    eval_cmd->add_option("--pred", eval_pred, "Detection output file")->required();
    eval_cmd->add_option("--gold", eval_gold, "Balanced dataset file")->required();
    eval_cmd->add_option("--out-dir", eval_out, "Report directory");
    eval_cmd->add_flag("--topics", eval_topics, "Also emit the hallucination topic distribution");
    eval_cmd->add_option("--topic-vocab", eval_vocab, "Topic vocabulary override");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "K-ablation from stored verdicts");
    std::string abl_pred, abl_gold, abl_out = "reports";
    std::uint32_t abl_kmax = 13, abl_threshold = 1;
    ablate_cmd->add_option("--pred", abl_pred, "Detection output with verdict bits")->required();
    ablate_cmd->add_option("--gold", abl_gold, "Balanced dataset file")->required();
    ablate_cmd->add_option("--out-dir", abl_out, "Report directory");
    ablate_cmd->add_option("--kmax", abl_kmax)->check(CLI::PositiveNumber);
    ablate_cmd->add_option("--threshold", abl_threshold)->check(CLI::PositiveNumber);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Classification accuracy across P0..P5");
    common.add_to(*sweep_cmd);
    std::string sweep_in, sweep_out = "reports";
    sweep_cmd->add_option("--in", sweep_in, "Balanced dataset file")->required();
    sweep_cmd->add_option("--out-dir", sweep_out, "Report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        for (auto* sub : {generate, detect_cmd, eval_cmd, sweep_cmd})
            if (sub->parsed()) common.load_config(*sub);

        if (generate->parsed())
            return cmd_generate(common, gen_dataset, gen_in, gen_out, gen_temp, gen_expected,
                                gen_allow_unbalanced, gen_refusals);
        if (detect_cmd->parsed())
            return cmd_detect(common, det_in, det_out, det_method, det_k, det_threshold, det_temp,
                              det_include_original, det_agg, det_unigram_threshold, det_exemplars);
        if (eval_cmd->parsed())
            return cmd_eval(common, eval_pred, eval_gold, eval_out, eval_topics, eval_vocab);
        if (ablate_cmd->parsed())
            return cmd_ablate(abl_pred, abl_gold, abl_out, abl_kmax, abl_threshold);
        if (sweep_cmd->parsed()) return cmd_sweep(common, sweep_in, sweep_out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const TransportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const RateLimited& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const ScriptMiss& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Malformed& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const CountMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DuplicateId& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const KeyMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 5;
    }
    return 2;
}
