#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "autohall/backend.hpp"
#include "autohall/core_types.hpp"
#include "autohall/prompts.hpp"

namespace autohall {

struct DivisionByZero : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Refusal filtering (Step 1)
// ---------------------------------------------------------------------------

struct RefusalPattern {
    enum class Kind { Substring, Prefix, SingleParagraph } kind = Kind::Substring;
    std::string text;  // matched case-insensitively
};

/// Shipped defaults; overridable via a pattern file (one pattern per line,
/// optional "prefix:" / "solo:" markers, '#' comments). "solo:" patterns only
/// match responses that are a single paragraph, so a knowledge-cutoff
/// disclaimer followed by actual content still counts as concrete.
inline std::vector<RefusalPattern> default_refusal_patterns() {
    using K = RefusalPattern::Kind;
    return {
        {K::Substring, "i can not provide a specific reference"},
        {K::Substring, "i cannot provide a specific reference"},
        {K::Substring, "i can't provide a specific reference"},
        {K::Substring, "i can not provide"},
        {K::Substring, "i cannot provide"},
        {K::Substring, "i can't assist"},
        {K::Substring, "i cannot assist"},
        {K::Substring, "i'm sorry, but i can't"},
        {K::Substring, "i couldn't find any credible reference"},
        {K::Substring, "i could not find any credible reference"},
        {K::SingleParagraph, "as of my knowledge cutoff"},
        {K::SingleParagraph, "as of my last update"},
    };
}

inline std::vector<RefusalPattern> load_refusal_patterns(const std::string& path) {
    std::vector<RefusalPattern> patterns;
    for_each_line(read_file(path), [&](std::size_t, std::string_view line) {
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') return;
        RefusalPattern p;
        if (s.rfind("prefix:", 0) == 0) {
            p.kind = RefusalPattern::Kind::Prefix;
            s = trim(s.substr(7));
        } else if (s.rfind("solo:", 0) == 0) {
            p.kind = RefusalPattern::Kind::SingleParagraph;
            s = trim(s.substr(5));
        }
        p.text = to_lower(s);
        patterns.push_back(std::move(p));
    });
    if (patterns.empty()) throw ConfigError("refusal pattern file is empty: " + path);
    return patterns;
}

/// False iff the text matches the refusal pattern list (or is blank).
inline bool is_concrete(std::string_view text,
                        const std::vector<RefusalPattern>& patterns = default_refusal_patterns()) {
    const std::string lowered = to_lower(text);
    if (trim(lowered).empty()) return false;
    const bool single_paragraph = lowered.find("\n\n") == std::string::npos;
    for (const auto& p : patterns) {
        switch (p.kind) {
            case RefusalPattern::Kind::Substring:
                if (lowered.find(p.text) != std::string::npos) return false;
                break;
            case RefusalPattern::Kind::Prefix:
                if (lowered.rfind(p.text, 0) == 0) return false;
                break;
            case RefusalPattern::Kind::SingleParagraph:
                if (single_paragraph && lowered.find(p.text) != std::string::npos) return false;
                break;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Step 1: reference generation
// ---------------------------------------------------------------------------

inline Reference generate_reference(const ClaimRecord& claim, const GenerationParams& params,
                                    const PromptRegistry& prompts, Backend& backend,
                                    const std::vector<RefusalPattern>& refusals =
                                        default_refusal_patterns()) {
    ChatRequest req;
    req.prompt = prompts.render(params.prompt_template_id, {{"claim", claim.text}});
    req.params = params;
    req.purpose = Purpose::Generation;
    req.claim_id = claim.id;
    Reference ref;
    ref.claim_id = claim.id;
    ref.text = backend.complete(req);
    ref.params = params;
    ref.validity = is_concrete(ref.text, refusals) ? Validity::Concrete : Validity::Refusal;
    return ref;
}

// ---------------------------------------------------------------------------
// Step 2: claim classification
// ---------------------------------------------------------------------------

/// Output grammar: optional whitespace, optional "Category:" or "Answer:",
/// then a true/T or false/F token; the remainder after an optional
/// "Reason(s):" marker is kept as the free-text reason.
inline std::pair<Category, std::optional<std::string>> parse_classification(const std::string& raw) {
    std::string s = trim(raw);
    std::string low = to_lower(s);
    std::size_t pos = 0;
    for (const char* marker : {"category:", "answer:"}) {
        if (low.rfind(marker, pos) == pos) {
            pos += std::string(marker).size();
            break;
        }
    }
    while (pos < low.size() && std::isspace(static_cast<unsigned char>(low[pos]))) ++pos;
    std::size_t tok_end = pos;
    while (tok_end < low.size() && std::isalpha(static_cast<unsigned char>(low[tok_end]))) ++tok_end;
    const std::string token = low.substr(pos, tok_end - pos);

    Category category;
    if (token == "true" || token == "t") category = Category::T;
    else if (token == "false" || token == "f") category = Category::F;
    else throw Unparseable(raw);

    std::optional<std::string> reason;
    for (const char* marker : {"reasons:", "reason:"}) {
        std::size_t r = low.find(marker, tok_end);
        if (r != std::string::npos) {
            std::string rest = trim(s.substr(r + std::string(marker).size()));
            if (!rest.empty()) reason = rest;
            break;
        }
    }
    return {category, reason};
}

/// Classifies a (claim, reference) pair, retrying the backend with the
/// identical prompt (cache bypassed on retries) when the reply fails to parse.
inline ClassificationResult classify_claim(const ClaimRecord& claim, const Reference& reference,
                                           const std::string& template_id,
                                           const PromptRegistry& prompts, Backend& backend) {
    if (reference.validity != Validity::Concrete)
        throw Error("classify_claim requires a concrete reference");
    ChatRequest req;
    req.prompt = prompts.render(template_id,
                                {{"claim", claim.text}, {"reference", reference.text}});
    req.params.model_id = backend.config().model_id;
    req.params.temperature = 0.1;  // stability for judgment queries
    req.params.prompt_template_id = template_id;
    req.params.sample_index = 0;
    req.purpose = Purpose::Classification;
    req.claim_id = claim.id;

    const std::uint32_t attempts = backend.config().retry.max_attempts;
    std::string raw;
    for (std::uint32_t attempt = 0; attempt < attempts; ++attempt) {
        raw = backend.complete(req, /*use_cache=*/attempt == 0);
        try {
            auto [category, reason] = parse_classification(raw);
            return ClassificationResult{claim.id, category, reason, raw};
        } catch (const Unparseable&) {
            // retry with the identical prompt
        }
    }
    throw Unparseable(raw);
}

// ---------------------------------------------------------------------------
// Step 3: hallucination labeling and balancing
// ---------------------------------------------------------------------------

/// Hallucination iff the classified category disagrees with the gold verdict.
inline bool label_hallucination(Category category, BinaryVerdict gold) {
    return (category == Category::T) != (gold == BinaryVerdict::Factual);
}

inline bool label_hallucination(const ClassificationResult& result, BinaryVerdict gold) {
    return label_hallucination(result.category, gold);
}

namespace detail {

/// Deterministic cross-platform subsample: Fisher-Yates over indices driven by
/// mt19937_64, keep the first `count`, restore original relative order.
inline std::vector<std::size_t> seeded_subsample(std::size_t n, std::size_t count,
                                                 std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace detail

/// All hallucinatory entries plus an equally sized seeded uniform subsample of
/// the factual ones; hallucinatory first, then factual, each in input order.
inline BalancedDataset balance(const std::vector<DatasetEntry>& entries, std::uint64_t seed,
                               bool allow_unbalanced = false) {
    std::vector<DatasetEntry> halluc, factual;
    for (const auto& e : entries) (e.is_hallucination ? halluc : factual).push_back(e);

    BalancedDataset out;
    out.seed = seed;
    if (!allow_unbalanced && factual.size() < halluc.size())
        throw InsufficientFactual(halluc.size(), factual.size());

    out.entries = halluc;
    if (allow_unbalanced && factual.size() < halluc.size()) {
        out.entries.insert(out.entries.end(), factual.begin(), factual.end());
    } else {
        for (std::size_t i : detail::seeded_subsample(factual.size(), halluc.size(), seed))
            out.entries.push_back(factual[i]);
    }
    return out;
}

/// H% = 100 * #H / #N, half-up to two decimals for display.
inline double hallucination_rate(std::size_t hallucination_count, std::size_t total_claims) {
    if (total_claims == 0) throw DivisionByZero("hallucination_rate with zero claims");
    double pct = 100.0 * static_cast<double>(hallucination_count) / static_cast<double>(total_claims);
    return std::floor(pct * 100.0 + 0.5) / 100.0;
}

inline double hallucination_rate(const GenerationStats& stats) {
    return hallucination_rate(stats.hallucination_count, stats.total_claims);
}

// ---------------------------------------------------------------------------
// The full AutoHall run
// ---------------------------------------------------------------------------

struct PipelineConfig {
    double temperature = 0.1;
    std::uint64_t seed = 0;
    std::string generation_template = "gen.v1";
    std::string classification_template = "classify.p0";
    bool allow_unbalanced = false;
    double max_failure_fraction = 0.5;  // abort when exceeded
    std::string out_dir;                // empty disables artifact persistence
    std::vector<RefusalPattern> refusal_patterns = default_refusal_patterns();
    std::uint32_t worker_threads = 0;   // 0 = backend max_concurrency
};

namespace detail {

struct ClaimOutcome {
    Reference reference;                             // always present once generated
    std::optional<ClassificationResult> classification;
    std::optional<bool> is_hallucination;
    bool unparseable = false;
    bool transport_failed = false;
    std::string failure;
};

inline void persist_artifacts(const std::string& out_dir,
                              const std::vector<std::pair<ClaimRecord, ClaimOutcome>>& outcomes,
                              const BalancedDataset& dataset) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<json> refs, classifications, labels, balanced;
    for (const auto& [claim, oc] : outcomes) {
        if (oc.transport_failed) continue;
        refs.emplace_back(oc.reference);
        if (oc.unparseable) {
            classifications.push_back(json{{"claim_id", claim.id},
                                           {"raw_output", oc.failure},
                                           {"unparseable", true}});
            continue;
        }
        if (!oc.classification) continue;  // refusal
        classifications.emplace_back(*oc.classification);
        labels.push_back(json{{"category", to_string(oc.classification->category)},
                              {"claim_id", claim.id},
                              {"gold", to_string(claim.gold)},
                              {"is_hallucination", *oc.is_hallucination}});
    }
    for (const auto& e : dataset.entries) balanced.emplace_back(e);
    write_jsonl((fs::path(out_dir) / "references.gen").string(), refs);
    write_jsonl((fs::path(out_dir) / "classifications").string(), classifications);
    write_jsonl((fs::path(out_dir) / "labels").string(), labels);
    write_jsonl((fs::path(out_dir) / "dataset.balanced").string(), balanced);
}

}  // namespace detail

/// Steps 1-3 over a corpus: generate, filter refusals, classify, compare to
/// gold, balance. Per-claim work items run concurrently under the backend's
/// bound; results are keyed by claim id and sorted by id before persistence.
inline BalancedDataset run_autohall(const std::vector<ClaimRecord>& corpus,
                                    const PipelineConfig& config, const PromptRegistry& prompts,
                                    Backend& backend) {
    if (corpus.empty()) throw Error("run_autohall requires a non-empty corpus");

    GenerationParams gen_params;
    gen_params.model_id = backend.config().model_id;
    gen_params.temperature = config.temperature;
    gen_params.prompt_template_id = config.generation_template;
    gen_params.sample_index = 0;

    std::vector<detail::ClaimOutcome> outcomes(corpus.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= corpus.size()) break;
            const ClaimRecord& claim = corpus[i];
            detail::ClaimOutcome& oc = outcomes[i];
            try {
                oc.reference = generate_reference(claim, gen_params, prompts, backend,
                                                  config.refusal_patterns);
            } catch (const Error& e) {
                oc.transport_failed = true;
                oc.failure = e.what();
                continue;
            }
            if (oc.reference.validity == Validity::Refusal) continue;
            try {
                oc.classification = classify_claim(claim, oc.reference,
                                                   config.classification_template, prompts, backend);
                oc.is_hallucination = label_hallucination(*oc.classification, claim.gold);
            } catch (const Unparseable& e) {
                oc.unparseable = true;
                oc.failure = e.raw;
            } catch (const Error& e) {
                oc.transport_failed = true;
                oc.failure = e.what();
            }
        }
    };

    std::uint32_t n_workers = config.worker_threads ? config.worker_threads
                                                    : backend.config().max_concurrency;
    n_workers = std::min<std::uint32_t>(n_workers, static_cast<std::uint32_t>(corpus.size()));
    if (n_workers <= 1) {
        work();
    } else {
        std::vector<std::thread> threads;
        for (std::uint32_t t = 0; t < n_workers; ++t) threads.emplace_back(work);
        for (auto& t : threads) t.join();
    }

    std::vector<std::pair<ClaimRecord, detail::ClaimOutcome>> keyed;
    keyed.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) keyed.emplace_back(corpus[i], std::move(outcomes[i]));
    std::sort(keyed.begin(), keyed.end(),
              [](const auto& a, const auto& b) { return a.first.id < b.first.id; });

    GenerationStats stats;
    stats.total_claims = corpus.size();
    std::vector<DatasetEntry> entries;
    for (const auto& [claim, oc] : keyed) {
        if (oc.transport_failed) {
            ++stats.transport_failed;
        } else if (oc.reference.validity == Validity::Refusal) {
            ++stats.invalid_references;
        } else if (oc.unparseable) {
            ++stats.unparseable;
        } else {
            ++stats.classified;
            entries.push_back(DatasetEntry{claim, oc.reference, *oc.is_hallucination});
            if (*oc.is_hallucination) ++stats.hallucination_count;
        }
    }

    const std::size_t failures = stats.transport_failed + stats.unparseable;
    if (static_cast<double>(failures) > config.max_failure_fraction * static_cast<double>(corpus.size()))
        throw Error("aborting: " + std::to_string(failures) + " of " + std::to_string(corpus.size()) +
                    " claims failed");

    stats.hallucination_rate = hallucination_rate(stats.hallucination_count, stats.total_claims);

    BalancedDataset dataset = balance(entries, config.seed, config.allow_unbalanced);
    dataset.stats = stats;

    if (!config.out_dir.empty()) detail::persist_artifacts(config.out_dir, keyed, dataset);
    return dataset;
}

// ---------------------------------------------------------------------------
// Dataset persistence helpers
// ---------------------------------------------------------------------------

inline void save_dataset(const std::string& path, const BalancedDataset& dataset) {
    std::vector<json> rows;
    rows.reserve(dataset.entries.size());
    for (const auto& e : dataset.entries) rows.emplace_back(e);
    write_jsonl(path, rows);
}

inline std::vector<DatasetEntry> load_dataset_entries(const std::string& path) {
    std::vector<DatasetEntry> entries;
    for (const auto& j : read_jsonl(path)) entries.push_back(j.get<DatasetEntry>());
    return entries;
}

}  // namespace autohall
