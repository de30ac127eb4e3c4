#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "autohall/common.hpp"

namespace autohall {

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class BinaryVerdict { Factual, NonFactual };

enum class Dataset { ClimateFever, PubHealth, Wice, Generic };

enum class Validity { Concrete, Refusal };

enum class Category { T, F };

enum class Purpose { Generation, Classification, Sampling, Contradiction, Baseline, Topic };

inline std::string to_string(BinaryVerdict v) {
    return v == BinaryVerdict::Factual ? "factual" : "non-factual";
}

inline BinaryVerdict verdict_from_string(const std::string& s) {
    if (s == "factual") return BinaryVerdict::Factual;
    if (s == "non-factual") return BinaryVerdict::NonFactual;
    throw Error("bad verdict string: " + s);
}

inline std::string to_string(Dataset d) {
    switch (d) {
        case Dataset::ClimateFever: return "climate-fever";
        case Dataset::PubHealth: return "pubhealth";
        case Dataset::Wice: return "wice";
        case Dataset::Generic: return "generic";
    }
    throw Error("bad dataset enum");
}

inline Dataset dataset_from_string(const std::string& s) {
    if (s == "climate-fever") return Dataset::ClimateFever;
    if (s == "pubhealth") return Dataset::PubHealth;
    if (s == "wice") return Dataset::Wice;
    if (s == "generic") return Dataset::Generic;
    throw Error("bad dataset string: " + s);
}

inline std::string to_string(Validity v) {
    return v == Validity::Concrete ? "concrete" : "refusal";
}

inline Validity validity_from_string(const std::string& s) {
    if (s == "concrete") return Validity::Concrete;
    if (s == "refusal") return Validity::Refusal;
    throw Error("bad validity string: " + s);
}

inline std::string to_string(Category c) { return c == Category::T ? "T" : "F"; }

inline Category category_from_string(const std::string& s) {
    if (s == "T") return Category::T;
    if (s == "F") return Category::F;
    throw Error("bad category string: " + s);
}

inline std::string to_string(Purpose p) {
    switch (p) {
        case Purpose::Generation: return "generation";
        case Purpose::Classification: return "classification";
        case Purpose::Sampling: return "sampling";
        case Purpose::Contradiction: return "contradiction";
        case Purpose::Baseline: return "baseline";
        case Purpose::Topic: return "topic";
    }
    throw Error("bad purpose enum");
}

inline Purpose purpose_from_string(const std::string& s) {
    if (s == "generation") return Purpose::Generation;
    if (s == "classification") return Purpose::Classification;
    if (s == "sampling") return Purpose::Sampling;
    if (s == "contradiction") return Purpose::Contradiction;
    if (s == "baseline") return Purpose::Baseline;
    if (s == "topic") return Purpose::Topic;
    throw Error("bad purpose string: " + s);
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// A fact-checking claim with its normalized binary gold verdict.
struct ClaimRecord {
    std::string id;
    std::string text;
    BinaryVerdict gold = BinaryVerdict::Factual;
    std::string raw_label;
    Dataset dataset = Dataset::Generic;
    std::optional<std::string> evidence;
    std::optional<std::string> topic;

    bool operator==(const ClaimRecord&) const = default;
};

struct GenerationParams {
    std::string model_id;
    double temperature = 0.1;
    std::string prompt_template_id;
    std::uint32_t sample_index = 0;

    bool operator==(const GenerationParams&) const = default;
};

/// One model-generated reference for a claim.
struct Reference {
    std::string claim_id;
    std::string text;
    Validity validity = Validity::Concrete;
    GenerationParams params;

    bool operator==(const Reference&) const = default;
};

struct ClassificationResult {
    std::string claim_id;
    Category category = Category::T;
    std::optional<std::string> reason;
    std::string raw_output;

    bool operator==(const ClassificationResult&) const = default;
};

struct DatasetEntry {
    ClaimRecord claim;
    Reference reference;
    bool is_hallucination = false;

    bool operator==(const DatasetEntry&) const = default;
};

struct GenerationStats {
    std::size_t total_claims = 0;      // #N
    std::size_t invalid_references = 0;
    std::size_t hallucination_count = 0;  // #H
    double hallucination_rate = 0.0;      // H%, two decimals
    // accounting detail: total = classified + refusals + unparseable + failed
    std::size_t classified = 0;
    std::size_t unparseable = 0;
    std::size_t transport_failed = 0;

    bool operator==(const GenerationStats&) const = default;
};

struct BalancedDataset {
    std::vector<DatasetEntry> entries;
    std::uint64_t seed = 0;
    GenerationStats stats;

    bool operator==(const BalancedDataset&) const = default;
};

struct ContradictionVerdict {
    std::uint32_t pair_index = 0;  // k in [1, K]
    bool contradicts = false;
    std::string raw_output;

    bool operator==(const ContradictionVerdict&) const = default;
};

/// Result of the K-sample pairwise contradiction check for one entry.
/// Missing (unparseable) verdicts shrink effective K and never count as conflicts.
struct DetectionOutcome {
    std::string claim_id;
    Reference original;
    std::vector<Reference> samples;
    std::vector<std::optional<ContradictionVerdict>> verdicts;
    std::size_t conflict_count = 0;
    bool predicted_hallucination = false;
    std::uint32_t threshold = 1;

    std::size_t effective_k() const {
        std::size_t n = 0;
        for (const auto& v : verdicts)
            if (v.has_value()) ++n;
        return n;
    }

    bool operator==(const DetectionOutcome&) const = default;
};

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }

    bool operator==(const ConfusionMatrix&) const = default;
};

// ---------------------------------------------------------------------------
// Serialization (line-record object syntax shared by all artifact files)
// ---------------------------------------------------------------------------

inline void to_json(json& j, const ClaimRecord& c) {
    j = json{{"id", c.id},
             {"text", c.text},
             {"gold", to_string(c.gold)},
             {"raw_label", c.raw_label},
             {"dataset", to_string(c.dataset)}};
    if (c.evidence) j["evidence"] = *c.evidence;
    if (c.topic) j["topic"] = *c.topic;
}

inline void from_json(const json& j, ClaimRecord& c) {
    c.id = j.at("id").get<std::string>();
    c.text = j.at("text").get<std::string>();
    c.gold = verdict_from_string(j.at("gold").get<std::string>());
    c.raw_label = j.at("raw_label").get<std::string>();
    c.dataset = dataset_from_string(j.at("dataset").get<std::string>());
    c.evidence = j.contains("evidence") ? std::optional(j["evidence"].get<std::string>()) : std::nullopt;
    c.topic = j.contains("topic") ? std::optional(j["topic"].get<std::string>()) : std::nullopt;
}

inline void to_json(json& j, const GenerationParams& p) {
    j = json{{"model_id", p.model_id},
             {"temperature", p.temperature},
             {"prompt_template_id", p.prompt_template_id},
             {"sample_index", p.sample_index}};
}

inline void from_json(const json& j, GenerationParams& p) {
    p.model_id = j.at("model_id").get<std::string>();
    p.temperature = j.at("temperature").get<double>();
    p.prompt_template_id = j.at("prompt_template_id").get<std::string>();
    p.sample_index = j.at("sample_index").get<std::uint32_t>();
}

inline void to_json(json& j, const Reference& r) {
    j = json{{"claim_id", r.claim_id},
             {"text", r.text},
             {"validity", to_string(r.validity)},
             {"params", r.params}};
}

inline void from_json(const json& j, Reference& r) {
    r.claim_id = j.at("claim_id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.validity = validity_from_string(j.at("validity").get<std::string>());
    r.params = j.at("params").get<GenerationParams>();
}

inline void to_json(json& j, const ClassificationResult& c) {
    j = json{{"claim_id", c.claim_id},
             {"category", to_string(c.category)},
             {"raw_output", c.raw_output}};
    if (c.reason) j["reason"] = *c.reason;
}

inline void from_json(const json& j, ClassificationResult& c) {
    c.claim_id = j.at("claim_id").get<std::string>();
    c.category = category_from_string(j.at("category").get<std::string>());
    c.raw_output = j.at("raw_output").get<std::string>();
    c.reason = j.contains("reason") ? std::optional(j["reason"].get<std::string>()) : std::nullopt;
}

inline void to_json(json& j, const DatasetEntry& e) {
    j = json{{"claim", e.claim},
             {"is_hallucination", e.is_hallucination},
             {"reference", e.reference}};
}

inline void from_json(const json& j, DatasetEntry& e) {
    e.claim = j.at("claim").get<ClaimRecord>();
    e.reference = j.at("reference").get<Reference>();
    e.is_hallucination = j.at("is_hallucination").get<bool>();
}

inline void to_json(json& j, const GenerationStats& s) {
    j = json{{"total_claims", s.total_claims},
             {"invalid_references", s.invalid_references},
             {"hallucination_count", s.hallucination_count},
             {"hallucination_rate", s.hallucination_rate},
             {"classified", s.classified},
             {"unparseable", s.unparseable},
             {"transport_failed", s.transport_failed}};
}

inline void from_json(const json& j, GenerationStats& s) {
    s.total_claims = j.at("total_claims").get<std::size_t>();
    s.invalid_references = j.at("invalid_references").get<std::size_t>();
    s.hallucination_count = j.at("hallucination_count").get<std::size_t>();
    s.hallucination_rate = j.at("hallucination_rate").get<double>();
    s.classified = j.at("classified").get<std::size_t>();
    s.unparseable = j.at("unparseable").get<std::size_t>();
    s.transport_failed = j.at("transport_failed").get<std::size_t>();
}

inline void to_json(json& j, const ContradictionVerdict& v) {
    j = json{{"pair_index", v.pair_index},
             {"contradicts", v.contradicts},
             {"raw_output", v.raw_output}};
}

inline void from_json(const json& j, ContradictionVerdict& v) {
    v.pair_index = j.at("pair_index").get<std::uint32_t>();
    v.contradicts = j.at("contradicts").get<bool>();
    v.raw_output = j.at("raw_output").get<std::string>();
}

inline void to_json(json& j, const ConfusionMatrix& m) {
    j = json{{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}};
}

inline void from_json(const json& j, ConfusionMatrix& m) {
    m.tp = j.at("tp").get<std::size_t>();
    m.fp = j.at("fp").get<std::size_t>();
    m.fn = j.at("fn").get<std::size_t>();
    m.tn = j.at("tn").get<std::size_t>();
}

}  // namespace autohall
