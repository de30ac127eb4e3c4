#include <doctest.h>

#include <random>

#include "autohall/detect.hpp"
#include "test_util.hpp"

using namespace autohall;
using testutil::TempDir;

namespace {

std::string script_line(json match, const std::string& reply) {
    return json{{"match", match}, {"reply", reply}}.dump() + "\n";
}

ScriptedBackend scripted(const TempDir& dir, const std::string& script,
                         const std::string& name = "script.jsonl") {
    BackendConfig cfg;
    cfg.kind = BackendKind::Scripted;
    cfg.script_path = dir.write(name, script);
    return ScriptedBackend(cfg);
}

ClaimRecord claim(const std::string& id = "c1") {
    ClaimRecord c;
    c.id = id;
    c.text = "claim text for " + id;
    c.gold = BinaryVerdict::Factual;
    c.raw_label = "supports";
    c.dataset = Dataset::Generic;
    return c;
}

Reference concrete(const std::string& text, const std::string& claim_id = "c1") {
    return Reference{claim_id, text, Validity::Concrete, {"m", 0.5, "gen.v1", 0}};
}

/// Independent restatement of the prediction rule: does any subset of the
/// verdicts of size >= threshold consist of conflicts? Equivalent to counting.
bool oracle_predict(const std::vector<bool>& verdicts, std::uint32_t threshold) {
    std::size_t conflicts = 0;
    for (bool v : verdicts) conflicts += v;
    // existence form: there are >= threshold pairwise conflicts
    return conflicts >= threshold;
}

DetectionOutcome outcome_from_bits(const std::vector<bool>& bits, std::uint32_t threshold) {
    std::vector<std::optional<ContradictionVerdict>> verdicts;
    std::vector<Reference> samples;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        verdicts.emplace_back(ContradictionVerdict{static_cast<std::uint32_t>(i + 1), bits[i],
                                                   bits[i] ? "Yes" : "No"});
        samples.push_back(concrete("sample " + std::to_string(i)));
    }
    return assemble_outcome("c1", concrete("orig"), samples, verdicts, threshold);
}

}  // namespace

TEST_CASE("sample_alternatives issues K calls cycling the prompt variants") {
    TempDir dir;
    std::string script;
    for (int k = 1; k <= 13; ++k)
        script += script_line({{"purpose", "sampling"}, {"sample_index", k}},
                              "alternative reference " + std::to_string(k));
    auto backend = scripted(dir, script);
    PromptRegistry prompts;
    GenerationParams base{"m", 0.5, "gen.v1", 0};

    auto samples = sample_alternatives(claim(), 13, base, prompts, backend);
    REQUIRE(samples.size() == 13);
    for (int k = 1; k <= 13; ++k) {
        REQUIRE(samples[k - 1].has_value());
        CHECK(samples[k - 1]->text == "alternative reference " + std::to_string(k));
        CHECK(samples[k - 1]->params.prompt_template_id == PromptRegistry::sampling_variant(k));
        CHECK(samples[k - 1]->params.sample_index == static_cast<std::uint32_t>(k));
        CHECK(samples[k - 1]->params.temperature == 0.5);
    }
    CHECK(samples[12]->params.prompt_template_id == "sample.v6");
    CHECK(backend.transport_calls() == 13);

    CHECK_THROWS_AS(sample_alternatives(claim(), 0, base, prompts, backend), Error);
}

TEST_CASE("a failed sample becomes a missing slot, not an exception") {
    TempDir dir;
    // only samples 1 and 3 are scripted; sample 2 misses
    auto backend = scripted(dir, script_line({{"sample_index", 1}}, "ref one") +
                                     script_line({{"sample_index", 3}}, "ref three"));
    PromptRegistry prompts;
    auto samples = sample_alternatives(claim(), 3, {"m", 0.5, "gen.v1", 0}, prompts, backend);
    REQUIRE(samples.size() == 3);
    CHECK(samples[0].has_value());
    CHECK_FALSE(samples[1].has_value());
    CHECK(samples[2].has_value());
}

TEST_CASE("contradiction parse grammar") {
    CHECK(parse_contradiction("Yes, the two references contradict each other."));
    CHECK(parse_contradiction("  YES."));
    CHECK(parse_contradiction("The references are contradictory."));
    CHECK_FALSE(parse_contradiction("No."));
    CHECK_FALSE(parse_contradiction("no, they are consistent"));
    CHECK_FALSE(parse_contradiction("They are consistent with each other."));
    CHECK_THROWS_AS(parse_contradiction("Both references discuss the claim."), Unparseable);
    CHECK_THROWS_AS(parse_contradiction(""), Unparseable);
}

TEST_CASE("check_contradiction renders both references into the judgment prompt") {
    TempDir dir;
    auto backend = scripted(dir, script_line({{"prompt_contains", "REF-A"}}, "Yes"));
    PromptRegistry prompts;
    auto v = check_contradiction(claim(), concrete("original with REF-A"),
                                 concrete("sample text"), 1, prompts, backend);
    CHECK(v.contradicts);
    CHECK(v.pair_index == 1);
    CHECK(v.raw_output == "Yes");

    Reference refusal = concrete("x");
    refusal.validity = Validity::Refusal;
    CHECK_THROWS_AS(check_contradiction(claim(), refusal, concrete("y"), 1, prompts, backend),
                    Error);
}

TEST_CASE("detect: all-consistent samples predict factual") {
    TempDir dir;
    auto backend = scripted(dir, script_line({{"purpose", "sampling"}}, "same story each time") +
                                     script_line({{"purpose", "contradiction"}}, "No"));
    PromptRegistry prompts;
    auto out = detect(claim(), concrete("the original story"), 13, 1, prompts, backend, 0.5);
    CHECK_FALSE(out.predicted_hallucination);
    CHECK(out.conflict_count == 0);
    CHECK(out.effective_k() == 13);
    CHECK(verdict_bits(out) == std::string(13, '0'));
}

TEST_CASE("detect: a single conflicting pair suffices at the default threshold") {
    TempDir dir;
    std::string script = script_line({{"purpose", "sampling"}, {"sample_index", 7}}, "divergent") +
                         script_line({{"purpose", "sampling"}}, "agreeing") +
                         script_line({{"purpose", "contradiction"}, {"sample_index", 7}}, "Yes") +
                         script_line({{"purpose", "contradiction"}}, "No");
    auto backend = scripted(dir, script);
    PromptRegistry prompts;

    auto out = detect(claim(), concrete("orig"), 13, 1, prompts, backend, 0.5);
    CHECK(out.predicted_hallucination);
    CHECK(out.conflict_count == 1);
    CHECK(verdict_bits(out) == "0000001000000");

    // the same evidence under threshold=2 is not enough
    auto strict = detect(claim(), concrete("orig"), 13, 2, prompts, backend, 0.5);
    CHECK_FALSE(strict.predicted_hallucination);
    CHECK(strict.conflict_count == 1);
}

TEST_CASE("detect compares samples to the original only") {
    TempDir dir;
    std::string script;
    for (int k = 1; k <= 4; ++k)
        script += script_line({{"purpose", "sampling"}, {"sample_index", k}},
                              "sample " + std::to_string(k));
    script += script_line({{"purpose", "contradiction"}, {"prompt_contains", "THE-ORIGINAL"}}, "No");
    // any contradiction prompt lacking the original would miss the script
    auto backend = scripted(dir, script);
    PromptRegistry prompts;
    auto out = detect(claim(), concrete("text of THE-ORIGINAL"), 4, 1, prompts, backend, 0.5);
    CHECK(out.effective_k() == 4);
    // K sampling calls + K contradiction calls, no sample-vs-sample pairs
    CHECK(backend.transport_calls() == 8);
}

TEST_CASE("unparseable contradiction verdicts shrink effective K") {
    TempDir dir;
    std::string script = script_line({{"purpose", "sampling"}}, "sampled") +
                         script_line({{"purpose", "contradiction"}, {"sample_index", 2}},
                                     "cannot tell") +
                         script_line({{"purpose", "contradiction"}}, "No");
    auto backend = scripted(dir, script);
    PromptRegistry prompts;
    auto out = detect(claim(), concrete("orig"), 3, 1, prompts, backend, 0.5);
    CHECK(out.effective_k() == 2);
    CHECK(verdict_bits(out) == "0?0");
    CHECK_FALSE(out.predicted_hallucination);
}

TEST_CASE("assemble_outcome rejects an all-missing verdict vector") {
    std::vector<std::optional<ContradictionVerdict>> verdicts{std::nullopt, std::nullopt};
    CHECK_THROWS_AS(assemble_outcome("c1", concrete("o"), {}, verdicts, 1), AllVerdictsMissing);
}

TEST_CASE("prediction matches the existence-form oracle over all verdict vectors, K <= 4") {
    for (std::uint32_t k = 1; k <= 4; ++k) {
        for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
            std::vector<bool> bits;
            for (std::uint32_t i = 0; i < k; ++i) bits.push_back((mask >> i) & 1);
            for (std::uint32_t threshold = 1; threshold <= k; ++threshold) {
                auto out = outcome_from_bits(bits, threshold);
                CHECK(out.predicted_hallucination == oracle_predict(bits, threshold));
            }
        }
    }
}

TEST_CASE("adding samples never flips a hallucination prediction back to factual") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::uint32_t k = 1 + rng() % 12;
        std::vector<bool> bits;
        for (std::uint32_t i = 0; i < k; ++i) bits.push_back(rng() % 2);
        auto small = outcome_from_bits(bits, 1);
        bits.push_back(rng() % 2);
        auto grown = outcome_from_bits(bits, 1);
        if (small.predicted_hallucination) CHECK(grown.predicted_hallucination);
        CHECK(grown.conflict_count >= small.conflict_count);
    }
}

TEST_CASE("self-check parsing takes the final yes/no as the answer") {
    CHECK(parse_selfcheck("Let's see. No clear source exists, so the claim is fabricated. Yes."));
    CHECK_FALSE(parse_selfcheck("Yes, the claim sounds odd, but the reference backs it. No."));
    CHECK_FALSE(parse_selfcheck("No hallucination found."));
    CHECK_THROWS_AS(parse_selfcheck("The claim is uncertain."), Unparseable);
}

TEST_CASE("zero-shot self-check runs one call per claim") {
    TempDir dir;
    auto backend = scripted(dir, script_line({{"purpose", "baseline"}},
                                             "Step by step: the reference disagrees. Yes."));
    PromptRegistry prompts;
    CHECK(zero_shot_selfcheck(claim(), concrete("ref"), prompts, backend));
    CHECK(backend.transport_calls() == 1);
}

TEST_CASE("few-shot exemplar validation") {
    std::vector<Exemplar> two{{"a", "ra", true, ""}, {"b", "rb", false, ""}};
    CHECK_THROWS_AS(validate_exemplars(two), ConfigError);
    std::vector<Exemplar> one_sided{{"a", "ra", true, ""}, {"b", "rb", true, ""}, {"c", "rc", true, ""}};
    CHECK_THROWS_AS(validate_exemplars(one_sided), ConfigError);

    auto shipped = load_exemplars("data/exemplars.jsonl");
    REQUIRE(shipped.size() == 3);
    CHECK_NOTHROW(validate_exemplars(shipped));
    bool any_h = false, any_f = false;
    for (const auto& e : shipped) (e.hallucinatory ? any_h : any_f) = true;
    CHECK(any_h);
    CHECK(any_f);
}

TEST_CASE("few-shot self-check interpolates the exemplars") {
    TempDir dir;
    auto backend = scripted(dir, script_line({{"prompt_contains", "Answer: Yes"}}, "No"));
    PromptRegistry prompts;
    auto shipped = load_exemplars("data/exemplars.jsonl");
    CHECK_FALSE(few_shot_selfcheck(claim(), concrete("ref"), shipped, prompts, backend));
}

TEST_CASE("unigram score reproduces the worked fixture") {
    // samples {"a a b"}, original "a", include_original:
    // counts a=3(+orig), b=1; total=4; vocab=2+1; p(a)=(3+1)/(4+3)=4/7
    double score = unigram_score("a", {"a a b"}, /*include_original=*/true);
    CHECK(score == doctest::Approx(-std::log(4.0 / 7.0)).epsilon(1e-9));
    CHECK(score == doctest::Approx(0.5596).epsilon(1e-4));

    // excluding the original: p(a)=(2+1)/(3+3)=1/2
    double excl = unigram_score("a", {"a a b"}, /*include_original=*/false);
    CHECK(excl == doctest::Approx(-std::log(0.5)).epsilon(1e-9));

    // max aggregation over "a z" (original included: a=3,b=1,z=1; total=5;
    // vocab=3+1): p(z)=(1+1)/9 dominates p(a)=(3+1)/9
    double mx = unigram_score("a z", {"a a b"}, true, UnigramAgg::Max);
    CHECK(mx == doctest::Approx(-std::log(2.0 / 9.0)).epsilon(1e-9));
}

TEST_CASE("unigram score is invariant under sample permutation") {
    std::mt19937_64 rng(11);
    const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "epsilon"};
    for (int trial = 0; trial < 100; ++trial) {
        auto sentence = [&] {
            std::string s;
            int n = 1 + rng() % 8;
            for (int i = 0; i < n; ++i) s += words[rng() % words.size()] + " ";
            return s;
        };
        std::string original = sentence();
        std::vector<std::string> samples;
        int count = 1 + rng() % 6;
        for (int i = 0; i < count; ++i) samples.push_back(sentence());
        double base = unigram_score(original, samples);
        std::shuffle(samples.begin(), samples.end(), rng);
        CHECK(unigram_score(original, samples) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("identical samples score lower than divergent ones") {
    const std::string original = "the tower opened in 1889 in paris";
    double consistent = unigram_score(original, {original, original, original});
    double divergent =
        unigram_score(original, {"completely unrelated words here", "other different content",
                                 "nothing in common at all"});
    CHECK(consistent < divergent);
}

TEST_CASE("unigram edge cases") {
    CHECK_THROWS_AS(unigram_score("...", {"a b"}), EmptyText);  // no alnum tokens
    CHECK_THROWS_AS(unigram_score("a", std::vector<std::string>{}), Error);
    CHECK_THROWS_AS(unigram_score("a", {"..."}, /*include_original=*/false), EmptyText);
}

TEST_CASE("unigram_predict uses a strict inequality") {
    CHECK_FALSE(unigram_predict(0.5, 0.5));
    CHECK(unigram_predict(0.5000001, 0.5));
    CHECK_THROWS_AS(unigram_predict(0.5, std::numeric_limits<double>::quiet_NaN()), Error);
}

TEST_CASE("threshold calibration matches a brute-force oracle") {
    std::mt19937_64 rng(23);
    auto f1_at = [](const std::vector<double>& scores, const std::vector<bool>& gold, double t) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            bool pred = scores[i] > t;
            tp += pred && gold[i];
            fp += pred && !gold[i];
            fn += !pred && gold[i];
        }
        if (tp + fp + fn == 0) return 1.0;
        if (tp == 0) return 0.0;
        return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    };
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 2 + rng() % 20;
        std::vector<double> scores;
        std::vector<bool> gold;
        for (std::size_t i = 0; i < n; ++i) {
            scores.push_back(static_cast<double>(rng() % 10) / 4.0);
            gold.push_back(rng() % 2);
        }
        double chosen = calibrate_unigram_threshold(scores, gold);
        double chosen_f1 = f1_at(scores, gold, chosen);
        // no candidate achieves a strictly better F1, and equal-F1 candidates
        // never sit below the chosen threshold
        std::vector<double> candidates = scores;
        candidates.push_back(*std::min_element(scores.begin(), scores.end()) - 1.0);
        for (double t : candidates) {
            double f1 = f1_at(scores, gold, t);
            CHECK(f1 <= chosen_f1 + 1e-12);
            if (std::abs(f1 - chosen_f1) < 1e-12) CHECK(chosen <= t + 1e-12);
        }
    }
    CHECK_THROWS_AS(calibrate_unigram_threshold({}, {}), Error);
    CHECK_THROWS_AS(calibrate_unigram_threshold({1.0}, {true, false}), Error);
}

TEST_CASE("outcome records carry replayable hashes of the raw judgments") {
    auto out = outcome_from_bits({true, false, true}, 1);
    auto rec = outcome_record(out, "ours");
    CHECK(rec.at("K") == 3);
    CHECK(rec.at("verdict_bits") == "101");
    CHECK(rec.at("predicted") == true);
    CHECK(rec.at("conflict_count") == 2);
    auto refs = rec.at("per_call_raw_refs");
    REQUIRE(refs.size() == 3);
    CHECK(refs[0] == fnv1a64_hex("Yes"));
    CHECK(refs[1] == fnv1a64_hex("No"));
}
