#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "autohall/common.hpp"

namespace autohall {

// Placeholder markers use mathematical angle brackets: ⟨claim⟩, ⟨reference⟩,
// ⟨reference2⟩, ⟨list⟩, ⟨exemplars⟩.
inline constexpr const char* kPlaceholderOpen = "⟨";
inline constexpr const char* kPlaceholderClose = "⟩";

struct PromptTemplate {
    std::string id;
    std::string body;
    std::set<std::string> required_placeholders;
};

namespace detail {

inline std::string marker(const std::string& name) {
    return std::string(kPlaceholderOpen) + name + kPlaceholderClose;
}

}  // namespace detail

/// Immutable after construction; shipped bodies are the appendix texts verbatim.
class PromptRegistry {
public:
    PromptRegistry() { register_builtin(); }

    /// Applies a template override file: a JSON object of template_id -> body,
    /// same placeholder syntax. Overridden bodies keep the id's placeholder set
    /// recomputed from the new body.
    void apply_overrides(const std::string& path) {
        json j = json::parse(read_file(path), nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ConfigError("template override file must be a JSON object: " + path);
        for (auto& [id, body] : j.items()) {
            if (!body.is_string()) throw ConfigError("override body for '" + id + "' must be a string");
            add(id, body.get<std::string>());
        }
    }

    const PromptTemplate& get(const std::string& id) const {
        auto it = templates_.find(id);
        if (it == templates_.end()) throw UnknownTemplate(id);
        return it->second;
    }

    bool has(const std::string& id) const { return templates_.count(id) != 0; }

    /// Substitutes every placeholder in one left-to-right pass over the template
    /// body; substituted text is never rescanned, so binding values containing
    /// marker syntax cannot inject placeholders.
    std::string render(const std::string& template_id,
                       const std::map<std::string, std::string>& bindings) const {
        const PromptTemplate& tpl = get(template_id);
        for (const auto& name : tpl.required_placeholders)
            if (!bindings.count(name)) throw MissingBinding(name);

        const std::string open(kPlaceholderOpen);
        const std::string close(kPlaceholderClose);
        std::string out;
        std::size_t pos = 0;
        while (pos < tpl.body.size()) {
            std::size_t o = tpl.body.find(open, pos);
            if (o == std::string::npos) {
                out.append(tpl.body, pos, std::string::npos);
                break;
            }
            std::size_t c = tpl.body.find(close, o + open.size());
            if (c == std::string::npos) {
                out.append(tpl.body, pos, std::string::npos);
                break;
            }
            out.append(tpl.body, pos, o - pos);
            const std::string name = tpl.body.substr(o + open.size(), c - o - open.size());
            auto it = bindings.find(name);
            if (it == bindings.end()) throw UnboundPlaceholderRemains(name);
            out += it->second;
            pos = c + close.size();
        }
        return out;
    }

    /// Variant id for the k-th sampling query, cycling the seven shipped
    /// sampling prompts: variant ((k-1) mod 7) + 1.
    static std::string sampling_variant(std::uint32_t k) {
        if (k < 1) throw Error("sampling_variant requires k >= 1");
        return "sample.v" + std::to_string((k - 1) % 7 + 1);
    }

    /// P0..P5, in order.
    static std::vector<std::string> list_classification_variants() {
        return {"classify.p0", "classify.p1", "classify.p2",
                "classify.p3", "classify.p4", "classify.p5"};
    }

    /// FNV-1a digest of a shipped body, for run manifests and freeze tests.
    std::string checksum(const std::string& id) const { return fnv1a64_hex(get(id).body); }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& [id, _] : templates_) out.push_back(id);
        return out;
    }

private:
    void add(const std::string& id, const std::string& body) {
        PromptTemplate tpl{id, body, {}};
        const std::string open(kPlaceholderOpen);
        const std::string close(kPlaceholderClose);
        std::size_t pos = 0;
        while (true) {
            std::size_t o = body.find(open, pos);
            if (o == std::string::npos) break;
            std::size_t c = body.find(close, o + open.size());
            if (c == std::string::npos) break;
            tpl.required_placeholders.insert(body.substr(o + open.size(), c - o - open.size()));
            pos = c + close.size();
        }
        templates_[id] = std::move(tpl);
    }

    void register_builtin() {
        const std::string claim = detail::marker("claim");
        const std::string ref = detail::marker("reference");
        const std::string ref2 = detail::marker("reference2");

        // Reference generation (Step 1).
        add("gen.v1",
            "Given one claim whose authenticity is unknown, you should provide one reference "
            "about it and summarize the reference in a paragraph. Claim: " + claim);

        // Claim classification (Step 2); P0 is the main-experiment prompt.
        add("classify.p0",
            "Given the claim and the reference, you should answer whether the claim is true or "
            "false. Claim: " + claim + " Reference: " + ref);

        add("classify.p1",
            "Assume you are an excellent classifier. Given the claim and the reference, you "
            "should answer whether the claim is true or false.\n"
            "Please note that your classification result must follow such format:\n"
            "\"Answer: True if the given claim is factual, False otherwise.\"\n"
            "Claim: " + claim + " Reference: " + ref);

        add("classify.p2",
            "Assume you are an excellent classifier. Given the claim and the reference, you "
            "should answer whether the claim is true or false.\n"
            "The reference is some information relevant to the claim, which can be used to "
            "judge the authenticity of the claim.\n"
            "Please note that your classification result must follow such format:\n"
            "\"Answer: True if the given claim is factual, False otherwise.\"\n"
            "Claim: " + claim + " Reference: " + ref);

        add("classify.p3",
            "Assume you are an excellent classifier.\n"
            "Your task is to identify whether there are any factual errors within the claim "
            "based on the provided reference and classify the claim to the label \"True\" if "
            "it is factual, \"False\" otherwise.\n"
            "Given the claim and the reference, you should answer whether the claim is factual "
            "or not (Boolean - True or False).\n"
            "Please note that your classification results must follow such format:\n"
            "\"Answer: True if the given claim is factual, False otherwise.\"\n"
            "Claim: " + claim + " Reference: " + ref);

        add("classify.p4",
            "Assume you are an excellent classifier.\n"
            "Your task is to identify whether there are any factual errors within the claim "
            "based on the provided reference and classify the claim to the label \"True\" if "
            "it is factual, \"False\" otherwise.\n"
            "Given the claim and the reference, you should answer whether the claim is factual "
            "or not (Boolean - True or False).\n"
            "Please note that your classification results must follow such format:\n"
            "\"Answer: True if the given claim is factual, False otherwise.\n"
            "Reasons: Why is the given claim true or false? You must provide some evidences "
            "from the given reference.\"\n"
            "Claim: " + claim + " Reference: " + ref);

        add("classify.p5",
            "Assume you are an excellent classifier.\n"
            "Your task is to identify whether there are any factual errors within the claim "
            "based on the provided reference and classify the claim to the label \"True\" if "
            "it is factual, \"False\" otherwise.\n"
            "When you are judging the authenticity of the given claim, you must find some "
            "evidences from the provided helpful reference to support your conclusion.\n"
            "Given the claim and the reference, you should answer whether the claim is factual "
            "or not (Boolean - True or False).\n"
            "Please note that your classification results must follow such format:\n"
            "\"Answer: True if the given claim is factual, False otherwise.\n"
            "Reasons: Why is the given claim true or false? You must provide some evidences "
            "from the given reference.\"\n"
            "Claim: " + claim + " Reference: " + ref);

        // The seven sampling prompts for the K detection queries.
        add("sample.v1",
            "Given one claim whose truthfulness is uncertain, you should provide one reference "
            "about it. This reference should be summarized as one paragraph. Claim: " + claim);
        add("sample.v2",
            "Please provide one reference on this claim whose authenticity is unknown and give "
            "a brief summary of it in one paragraph. Claim: " + claim);
        add("sample.v3",
            "Please provide a reference for a claim whose truthfulness is uncertain and "
            "summarize the content of the reference in one paragraph. Claim: " + claim);
        add("sample.v4",
            "Given one claim whose authenticity is uncertain, you should provide one reference "
            "about it and write a summary paragraph. Claim: " + claim);
        add("sample.v5",
            "There is a claim whose authenticity is unknown, please provide one corresponding "
            "reference and condense the reference in a paragraph. Claim: " + claim);
        add("sample.v6",
            "There is a claim whose authenticity is unknown, please provide one reference that "
            "is relevant to this claim and summarize it in one paragraph. Claim: " + claim);
        add("sample.v7",
            "You are expected to provide a reference for a claim whose truthfulness is "
            "uncertain. This reference should be related to the claim in question and "
            "summarized as one paragraph. Claim: " + claim);

        // Pairwise contradiction judgment (detection Step 2).
        add("contradict.v1",
            "Given the claim and two references about it, answer whether the two references "
            "contradict each other. Answer: Yes or No. Claim: " + claim +
            " Reference 1: " + ref + " Reference 2: " + ref2);

        // Zero-shot CoT self-check baseline.
        add("baseline.zeroshot",
            "Given the claim and the reference, answer whether the reference contains "
            "hallucinatory content about the claim. Answer: Yes or No. Claim: " + claim +
            " Reference: " + ref + " Let's think step by step.");

        // Few-shot CoT self-check baseline; exemplars rendered by the caller.
        add("baseline.fewshot",
            "Given the claim and the reference, answer whether the reference contains "
            "hallucinatory content about the claim. Answer: Yes or No. Here are some "
            "examples:\n" + detail::marker("exemplars") +
            "\nClaim: " + claim + " Reference: " + ref + " Let's think step by step.");

        // Topic tagging for the hallucination topic histogram.
        add("topic.v1",
            "Assign exactly one topic from this list to the claim: " + detail::marker("list") +
            ". Claim: " + claim);
    }

    std::map<std::string, PromptTemplate> templates_;
};

/// Default topic vocabulary for the topic histogram.
inline std::vector<std::string> default_topic_vocabulary() {
    return {"history", "technology", "culture", "geography", "business",
            "politics", "sports", "health", "climate", "law", "art"};
}

}  // namespace autohall
