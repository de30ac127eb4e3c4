#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autohall/backend.hpp"
#include "autohall/core_types.hpp"
#include "autohall/pipeline.hpp"
#include "autohall/prompts.hpp"

namespace autohall {

struct AllVerdictsMissing : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// K-sample generation
// ---------------------------------------------------------------------------

/// K additional references for the claim, one independent backend call each,
/// cycling the shipped sampling prompt variants. A sample whose call fails
/// after retries is recorded as missing (shrinking effective K downstream).
inline std::vector<std::optional<Reference>> sample_alternatives(
    const ClaimRecord& claim, std::uint32_t k_samples, const GenerationParams& base_params,
    const PromptRegistry& prompts, Backend& backend) {
    if (k_samples < 1) throw Error("sample_alternatives requires K >= 1");
    std::vector<std::optional<Reference>> samples;
    samples.reserve(k_samples);
    for (std::uint32_t k = 1; k <= k_samples; ++k) {
        GenerationParams params = base_params;
        params.prompt_template_id = PromptRegistry::sampling_variant(k);
        params.sample_index = k;
        ChatRequest req;
        req.prompt = prompts.render(params.prompt_template_id, {{"claim", claim.text}});
        req.params = params;
        req.purpose = Purpose::Sampling;
        req.claim_id = claim.id;
        try {
            Reference ref;
            ref.claim_id = claim.id;
            ref.text = backend.complete(req);
            ref.validity = Validity::Concrete;
            ref.params = params;
            samples.emplace_back(std::move(ref));
        } catch (const Error&) {
            samples.emplace_back(std::nullopt);
        }
    }
    return samples;
}

// ---------------------------------------------------------------------------
// Pairwise contradiction judgment
// ---------------------------------------------------------------------------

/// First yes/contradictory vs no/consistent token decides the verdict.
inline bool parse_contradiction(const std::string& raw) {
    for (const auto& tok : tokenize(raw)) {
        if (tok == "yes" || tok == "contradictory") return true;
        if (tok == "no" || tok == "consistent") return false;
    }
    throw Unparseable(raw);
}

inline ContradictionVerdict check_contradiction(const ClaimRecord& claim, const Reference& original,
                                                const Reference& sample, std::uint32_t pair_index,
                                                const PromptRegistry& prompts, Backend& backend,
                                                const std::string& template_id = "contradict.v1") {
    if (original.validity != Validity::Concrete || sample.validity != Validity::Concrete)
        throw Error("check_contradiction requires concrete references");
    ChatRequest req;
    req.prompt = prompts.render(template_id, {{"claim", claim.text},
                                              {"reference", original.text},
                                              {"reference2", sample.text}});
    req.params.model_id = backend.config().model_id;
    req.params.temperature = 0.1;
    req.params.prompt_template_id = template_id;
    req.params.sample_index = pair_index;
    req.purpose = Purpose::Contradiction;
    req.claim_id = claim.id;

    const std::uint32_t attempts = backend.config().retry.max_attempts;
    std::string raw;
    for (std::uint32_t attempt = 0; attempt < attempts; ++attempt) {
        raw = backend.complete(req, /*use_cache=*/attempt == 0);
        try {
            return ContradictionVerdict{pair_index, parse_contradiction(raw), raw};
        } catch (const Unparseable&) {
        }
    }
    throw Unparseable(raw);
}

// ---------------------------------------------------------------------------
// The detector: existence of a conflicting pair
// ---------------------------------------------------------------------------

/// Prediction rule over an (ordered) verdict vector; missing verdicts never
/// count toward conflicts.
inline DetectionOutcome assemble_outcome(const std::string& claim_id, Reference original,
                                         std::vector<Reference> samples,
                                         std::vector<std::optional<ContradictionVerdict>> verdicts,
                                         std::uint32_t threshold) {
    DetectionOutcome out;
    out.claim_id = claim_id;
    out.original = std::move(original);
    out.samples = std::move(samples);
    out.verdicts = std::move(verdicts);
    out.threshold = threshold;
    if (out.effective_k() == 0) throw AllVerdictsMissing("no parseable verdict for " + out.claim_id);
    out.conflict_count = 0;
    for (const auto& v : out.verdicts)
        if (v && v->contradicts) ++out.conflict_count;
    out.predicted_hallucination = out.conflict_count >= threshold;
    return out;
}

inline DetectionOutcome detect(const ClaimRecord& claim, const Reference& original,
                               std::uint32_t k_samples, std::uint32_t threshold,
                               const PromptRegistry& prompts, Backend& backend,
                               double sampling_temperature,
                               const std::string& contradiction_template = "contradict.v1") {
    if (original.validity != Validity::Concrete) throw Error("detect requires a concrete original");
    if (threshold < 1) throw Error("detect requires threshold >= 1");

    GenerationParams base;
    base.model_id = backend.config().model_id;
    base.temperature = sampling_temperature;
    auto maybe_samples = sample_alternatives(claim, k_samples, base, prompts, backend);

    std::vector<Reference> samples;
    std::vector<std::optional<ContradictionVerdict>> verdicts;
    for (std::uint32_t k = 1; k <= k_samples; ++k) {
        const auto& s = maybe_samples[k - 1];
        if (!s) {
            verdicts.emplace_back(std::nullopt);
            continue;
        }
        samples.push_back(*s);
        try {
            verdicts.emplace_back(
                check_contradiction(claim, original, *s, k, prompts, backend, contradiction_template));
        } catch (const Unparseable&) {
            verdicts.emplace_back(std::nullopt);
        }
    }
    return assemble_outcome(claim.id, original, std::move(samples), std::move(verdicts), threshold);
}

// ---------------------------------------------------------------------------
// CoT self-check baselines
// ---------------------------------------------------------------------------

/// Final-answer token: the last yes/no in the reply decides.
inline bool parse_selfcheck(const std::string& raw) {
    std::optional<bool> verdict;
    for (const auto& tok : tokenize(raw)) {
        if (tok == "yes") verdict = true;
        else if (tok == "no") verdict = false;
    }
    if (!verdict) throw Unparseable(raw);
    return *verdict;
}

namespace detail {

inline bool selfcheck_call(const ClaimRecord& claim, const std::string& prompt,
                           const std::string& template_id, Backend& backend) {
    ChatRequest req;
    req.prompt = prompt;
    req.params.model_id = backend.config().model_id;
    req.params.temperature = 0.1;
    req.params.prompt_template_id = template_id;
    req.params.sample_index = 0;
    req.purpose = Purpose::Baseline;
    req.claim_id = claim.id;
    const std::uint32_t attempts = backend.config().retry.max_attempts;
    std::string raw;
    for (std::uint32_t attempt = 0; attempt < attempts; ++attempt) {
        raw = backend.complete(req, attempt == 0);
        try {
            return parse_selfcheck(raw);
        } catch (const Unparseable&) {
        }
    }
    throw Unparseable(raw);
}

}  // namespace detail

inline bool zero_shot_selfcheck(const ClaimRecord& claim, const Reference& original,
                                const PromptRegistry& prompts, Backend& backend) {
    return detail::selfcheck_call(
        claim,
        prompts.render("baseline.zeroshot", {{"claim", claim.text}, {"reference", original.text}}),
        "baseline.zeroshot", backend);
}

struct Exemplar {
    std::string claim;
    std::string reference;
    bool hallucinatory = false;
    std::string rationale;
};

inline void to_json(json& j, const Exemplar& e) {
    j = json{{"claim", e.claim},
             {"hallucinatory", e.hallucinatory},
             {"rationale", e.rationale},
             {"reference", e.reference}};
}

inline void from_json(const json& j, Exemplar& e) {
    e.claim = j.at("claim").get<std::string>();
    e.reference = j.at("reference").get<std::string>();
    e.hallucinatory = j.at("hallucinatory").get<bool>();
    e.rationale = j.value("rationale", "");
}

inline std::vector<Exemplar> load_exemplars(const std::string& path) {
    std::vector<Exemplar> out;
    for (const auto& j : read_jsonl(path)) out.push_back(j.get<Exemplar>());
    return out;
}

inline void validate_exemplars(const std::vector<Exemplar>& exemplars) {
    if (exemplars.size() != 3)
        throw ConfigError("few-shot baseline needs exactly 3 exemplars, got " +
                          std::to_string(exemplars.size()));
    bool any_h = false, any_f = false;
    for (const auto& e : exemplars) (e.hallucinatory ? any_h : any_f) = true;
    if (!any_h || !any_f)
        throw ConfigError("few-shot exemplars must cover both hallucinatory and factual cases");
}

inline std::string render_exemplars(const std::vector<Exemplar>& exemplars) {
    std::string out;
    for (const auto& e : exemplars) {
        out += "Claim: " + e.claim + " Reference: " + e.reference + "\n";
        if (!e.rationale.empty()) out += e.rationale + " ";
        out += std::string("Answer: ") + (e.hallucinatory ? "Yes" : "No") + "\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

inline bool few_shot_selfcheck(const ClaimRecord& claim, const Reference& original,
                               const std::vector<Exemplar>& exemplars,
                               const PromptRegistry& prompts, Backend& backend) {
    validate_exemplars(exemplars);
    return detail::selfcheck_call(
        claim,
        prompts.render("baseline.fewshot", {{"claim", claim.text},
                                            {"reference", original.text},
                                            {"exemplars", render_exemplars(exemplars)}}),
        "baseline.fewshot", backend);
}

// ---------------------------------------------------------------------------
// Unigram consistency baseline
// ---------------------------------------------------------------------------

enum class UnigramAgg { Mean, Max };

/// Mean (or max) negative log probability of the original's tokens under an
/// add-one-smoothed unigram table built from the sampled texts (plus the
/// original itself unless include_original=false). Higher = more likely
/// hallucinatory.
inline double unigram_score(const std::string& original, const std::vector<std::string>& samples,
                            bool include_original = true, UnigramAgg agg = UnigramAgg::Mean) {
    if (samples.empty()) throw Error("unigram_score requires at least one sample");
    const auto orig_tokens = tokenize(original);
    if (orig_tokens.empty()) throw EmptyText("original reference has no tokens");

    std::map<std::string, std::size_t> counts;
    std::size_t total = 0;
    auto add_text = [&](const std::string& text) {
        for (const auto& tok : tokenize(text)) {
            ++counts[tok];
            ++total;
        }
    };
    for (const auto& s : samples) add_text(s);
    if (include_original) add_text(original);
    if (total == 0) throw EmptyText("sample corpus has no tokens");

    // observed vocabulary plus one unknown bucket
    const double vocab = static_cast<double>(counts.size()) + 1.0;
    const double denom = static_cast<double>(total) + vocab;

    double sum = 0.0, worst = 0.0;
    for (const auto& tok : orig_tokens) {
        auto it = counts.find(tok);
        const double count = it == counts.end() ? 0.0 : static_cast<double>(it->second);
        const double nll = -std::log((count + 1.0) / denom);
        sum += nll;
        worst = std::max(worst, nll);
    }
    return agg == UnigramAgg::Mean ? sum / static_cast<double>(orig_tokens.size()) : worst;
}

inline double unigram_score(const Reference& original, const std::vector<Reference>& samples,
                            bool include_original = true, UnigramAgg agg = UnigramAgg::Mean) {
    std::vector<std::string> texts;
    texts.reserve(samples.size());
    for (const auto& s : samples) texts.push_back(s.text);
    return unigram_score(original.text, texts, include_original, agg);
}

/// Strictly-greater thresholding: score > threshold predicts hallucination.
inline bool unigram_predict(double score, double threshold) {
    if (!std::isfinite(threshold)) throw Error("unigram threshold must be finite");
    return score > threshold;
}

/// Brute-force F1-maximizing threshold over the observed scores on a labeled
/// split; ties break toward the lower threshold.
inline double calibrate_unigram_threshold(const std::vector<double>& scores,
                                          const std::vector<bool>& gold) {
    if (scores.size() != gold.size() || scores.empty())
        throw Error("calibrate needs matching non-empty scores and labels");
    std::vector<double> candidates = scores;
    double lowest = *std::min_element(scores.begin(), scores.end());
    candidates.push_back(lowest - 1.0);  // "predict everything" endpoint
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    double best_threshold = candidates.front();
    double best_f1 = -1.0;
    for (double t : candidates) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool pred = scores[i] > t;
            if (pred && gold[i]) ++tp;
            else if (pred && !gold[i]) ++fp;
            else if (!pred && gold[i]) ++fn;
        }
        const double f1 = (tp == 0 && fp == 0 && fn == 0)
                              ? 1.0
                              : (tp == 0 ? 0.0
                                         : 2.0 * static_cast<double>(tp) /
                                               static_cast<double>(2 * tp + fp + fn));
        if (f1 > best_f1) {
            best_f1 = f1;
            best_threshold = t;
        }
    }
    return best_threshold;
}

// ---------------------------------------------------------------------------
// Detection output records
// ---------------------------------------------------------------------------

/// '1'/'0' per verdict, '?' where a pair was unparseable or its sample missing.
inline std::string verdict_bits(const DetectionOutcome& outcome) {
    std::string bits;
    bits.reserve(outcome.verdicts.size());
    for (const auto& v : outcome.verdicts) bits += !v ? '?' : (v->contradicts ? '1' : '0');
    return bits;
}

inline json outcome_record(const DetectionOutcome& outcome, const std::string& method) {
    json per_call = json::array();
    for (const auto& v : outcome.verdicts)
        per_call.push_back(v ? fnv1a64_hex(v->raw_output) : "");
    return json{{"K", outcome.verdicts.size()},
                {"claim_id", outcome.claim_id},
                {"conflict_count", outcome.conflict_count},
                {"method", method},
                {"per_call_raw_refs", per_call},
                {"predicted", outcome.predicted_hallucination},
                {"threshold", outcome.threshold},
                {"verdict_bits", verdict_bits(outcome)}};
}

}  // namespace autohall
