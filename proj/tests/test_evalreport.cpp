#include <doctest.h>

#include <random>

#include "autohall/evalreport.hpp"
#include "test_util.hpp"

using namespace autohall;
using testutil::TempDir;

namespace {

std::string script_line(json match, const std::string& reply) {
    return json{{"match", match}, {"reply", reply}}.dump() + "\n";
}

ScriptedBackend scripted(const TempDir& dir, const std::string& script) {
    BackendConfig cfg;
    cfg.kind = BackendKind::Scripted;
    cfg.script_path = dir.write("script.jsonl", script);
    return ScriptedBackend(cfg);
}

ClaimRecord claim(const std::string& id) {
    ClaimRecord c;
    c.id = id;
    c.text = "claim " + id;
    c.gold = BinaryVerdict::Factual;
    c.raw_label = "supports";
    c.dataset = Dataset::Generic;
    return c;
}

Reference concrete(const std::string& claim_id) {
    return Reference{claim_id, "reference for " + claim_id, Validity::Concrete,
                     {"m", 0.1, "gen.v1", 0}};
}

OutcomeRow row(const std::string& id, const std::string& bits, bool gold) {
    return OutcomeRow{id, bits, gold};
}

}  // namespace

TEST_CASE("confusion matrix on aligned prediction and gold maps") {
    std::map<std::string, bool> pred, gold;
    for (int i = 0; i < 10; ++i) {
        std::string id = "c" + std::to_string(i);
        gold[id] = i < 6;  // six positives
        pred[id] = gold[id];
    }
    auto m = confusion(pred, gold);
    CHECK(m.tp == 6);
    CHECK(m.tn == 4);
    CHECK(m.fp == 0);
    CHECK(m.fn == 0);
    CHECK(accuracy(m) == 1.0);
    CHECK(f1(m) == 1.0);

    for (auto& [id, p] : pred) p = !p;  // fully inverted predictor
    auto inv = confusion(pred, gold);
    CHECK(inv.tp == 0);
    CHECK(inv.fp == 4);
    CHECK(inv.fn == 6);
    CHECK(accuracy(inv) == 0.0);
    CHECK(f1(inv) == 0.0);
}

TEST_CASE("confusion rejects mismatched key sets and names the difference") {
    std::map<std::string, bool> pred{{"a", true}, {"b", false}};
    std::map<std::string, bool> gold{{"a", true}, {"c", false}};
    try {
        confusion(pred, gold);
        FAIL("expected KeyMismatch");
    } catch (const KeyMismatch& e) {
        CHECK(e.difference.size() == 2);
    }
}

TEST_CASE("metric spot values") {
    ConfusionMatrix m{3, 1, 2, 4};
    CHECK(accuracy(m) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(f1(m) == doctest::Approx(6.0 / 9.0).epsilon(1e-12));
    CHECK(recall(m) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK_THROWS_AS(accuracy(ConfusionMatrix{}), EmptyMatrix);
}

TEST_CASE("degenerate f1 conventions") {
    CHECK(f1(ConfusionMatrix{0, 0, 0, 5}) == 1.0);  // nothing positive anywhere
    CHECK(f1(ConfusionMatrix{0, 2, 0, 5}) == 0.0);
    CHECK(f1(ConfusionMatrix{0, 0, 3, 5}) == 0.0);
    CHECK(recall(ConfusionMatrix{0, 1, 0, 5}) == 1.0);  // no actual positives
}

TEST_CASE("metrics agree with a naive recount over random matrices") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        ConfusionMatrix m{rng() % 50, rng() % 50, rng() % 50, rng() % 50};
        if (m.total() == 0) continue;
        double acc = static_cast<double>(m.tp + m.tn) /
                     static_cast<double>(m.tp + m.fp + m.fn + m.tn);
        CHECK(accuracy(m) == doctest::Approx(acc).epsilon(1e-12));
        double precision_den = static_cast<double>(m.tp + m.fp);
        double recall_den = static_cast<double>(m.tp + m.fn);
        if (m.tp > 0) {
            double p = m.tp / precision_den, r = m.tp / recall_den;
            CHECK(f1(m) == doctest::Approx(2.0 * p * r / (p + r)).epsilon(1e-12));
            CHECK(recall(m) == doctest::Approx(r).epsilon(1e-12));
        }
    }
}

TEST_CASE("ablate_k reuses stored verdicts: all-false rows stay flat") {
    std::vector<OutcomeRow> rows;
    for (int i = 0; i < 8; ++i)
        rows.push_back(row("c" + std::to_string(i), "0000000000000", i % 2 == 0));
    auto curve = ablate_k(rows, 13);
    REQUIRE(curve.size() == 13);
    for (const auto& p : curve) {
        CHECK(p.accuracy == 0.5);  // the gold-hallucinatory half is always missed
        CHECK(p.f1 == 0.0);
        CHECK(p.recall == 0.0);
    }
}

TEST_CASE("ablate_k shows the metric rising as later conflicts come into view") {
    // the only conflict for the gold-hallucinatory row sits at position 5
    std::vector<OutcomeRow> rows{row("h", "0000100", true), row("f", "0000000", false)};
    auto curve = ablate_k(rows, 7);
    for (std::uint32_t k = 1; k <= 4; ++k) {
        CHECK(curve[k - 1].recall == 0.0);
        CHECK(curve[k - 1].accuracy == 0.5);
    }
    for (std::uint32_t k = 5; k <= 7; ++k) {
        CHECK(curve[k - 1].recall == 1.0);
        CHECK(curve[k - 1].accuracy == 1.0);
        CHECK(curve[k - 1].f1 == 1.0);
    }
}

TEST_CASE("ablation at K_max reproduces the full-run confusion metrics") {
    std::mt19937_64 rng(17);
    std::vector<OutcomeRow> rows;
    std::map<std::string, bool> pred, gold;
    for (int i = 0; i < 40; ++i) {
        std::string id = "c" + std::to_string(i);
        std::string bits;
        for (int k = 0; k < 13; ++k) bits += (rng() % 4 == 0) ? '1' : '0';
        bool g = rng() % 2;
        rows.push_back(row(id, bits, g));
        gold[id] = g;
        pred[id] = predict_from_bits(bits, 13, 1);
    }
    auto curve = ablate_k(rows, 13);
    auto m = confusion(pred, gold);
    CHECK(curve.back().accuracy == doctest::Approx(accuracy(m)).epsilon(1e-12));
    CHECK(curve.back().f1 == doctest::Approx(f1(m)).epsilon(1e-12));
    CHECK(curve.back().recall == doctest::Approx(recall(m)).epsilon(1e-12));
}

TEST_CASE("recall is nondecreasing in K at threshold 1") {
    std::mt19937_64 rng(29);
    std::vector<OutcomeRow> rows;
    for (int i = 0; i < 60; ++i) {
        std::string bits;
        for (int k = 0; k < 13; ++k) bits += (rng() % 3 == 0) ? '1' : '0';
        rows.push_back(row("c" + std::to_string(i), bits, rng() % 2));
    }
    auto curve = ablate_k(rows, 13);
    for (std::size_t i = 1; i < curve.size(); ++i)
        CHECK(curve[i].recall >= curve[i - 1].recall);
}

TEST_CASE("ablate_k refuses rows with fewer stored verdicts than K_max") {
    std::vector<OutcomeRow> rows{row("c1", "010", true)};
    CHECK_THROWS_AS(ablate_k(rows, 5), InsufficientVerdicts);
    CHECK_NOTHROW(ablate_k(rows, 3));
}

TEST_CASE("predict_from_bits ignores missing verdicts") {
    CHECK(predict_from_bits("?1?", 3, 1));
    CHECK_FALSE(predict_from_bits("?0?", 3, 1));
    CHECK_FALSE(predict_from_bits("11111", 2, 3));  // truncation before counting
}

TEST_CASE("conflict statistics: means and histograms per class") {
    std::vector<OutcomeRow> rows{
        row("h1", "1100", true),   // 2 conflicts
        row("h2", "1111", true),   // 4
        row("f1", "0000", false),  // 0
        row("f2", "1100", false),  // 2
    };
    auto stats = conflict_stats(rows, 4);
    REQUIRE(stats.mean_conflicts_hallucinatory.has_value());
    REQUIRE(stats.mean_conflicts_factual.has_value());
    CHECK(*stats.mean_conflicts_hallucinatory == 3.0);
    CHECK(*stats.mean_conflicts_factual == 1.0);
    REQUIRE(stats.histogram_hallucinatory.size() == 5);
    CHECK(stats.histogram_hallucinatory[2] == 1);
    CHECK(stats.histogram_hallucinatory[4] == 1);
    CHECK(stats.histogram_factual[0] == 1);
    CHECK(stats.histogram_factual[2] == 1);
}

TEST_CASE("conflict statistics omit the mean for an absent class") {
    std::vector<OutcomeRow> rows{row("f1", "00", false)};
    auto stats = conflict_stats(rows, 2);
    CHECK_FALSE(stats.mean_conflicts_hallucinatory.has_value());
    CHECK(stats.mean_conflicts_factual == 0.0);
}

TEST_CASE("conflict statistics match a manual recount and histograms sum to class sizes") {
    std::mt19937_64 rng(31);
    std::vector<OutcomeRow> rows;
    std::size_t sum_h = 0, n_h = 0, sum_f = 0, n_f = 0;
    for (int i = 0; i < 10; ++i) {
        std::string bits;
        std::size_t conflicts = 0;
        for (int k = 0; k < 13; ++k) {
            bool c = rng() % 3 == 0;
            bits += c ? '1' : '0';
            conflicts += c;
        }
        bool g = rng() % 2;
        rows.push_back(row("c" + std::to_string(i), bits, g));
        (g ? sum_h : sum_f) += conflicts;
        ++(g ? n_h : n_f);
    }
    auto stats = conflict_stats(rows, 13);
    if (n_h) CHECK(*stats.mean_conflicts_hallucinatory ==
                   doctest::Approx(static_cast<double>(sum_h) / n_h).epsilon(1e-12));
    if (n_f) CHECK(*stats.mean_conflicts_factual ==
                   doctest::Approx(static_cast<double>(sum_f) / n_f).epsilon(1e-12));
    std::size_t hist_h = 0, hist_f = 0;
    for (auto v : stats.histogram_hallucinatory) hist_h += v;
    for (auto v : stats.histogram_factual) hist_f += v;
    CHECK(hist_h == n_h);
    CHECK(hist_f == n_f);
}

TEST_CASE("prompt sweep: a perfectly scripted judge scores 100 on all six variants") {
    TempDir dir;
    auto backend = scripted(dir, script_line({{"purpose", "classification"}}, "Category: True"));
    PromptRegistry prompts;
    std::vector<LabeledPair> pairs;
    for (int i = 0; i < 5; ++i)
        pairs.push_back({claim("c" + std::to_string(i)), concrete("c" + std::to_string(i)),
                         Category::T});
    auto table = prompt_sweep(pairs, prompts, backend);
    REQUIRE(table.size() == 6);
    for (std::size_t v = 0; v < 6; ++v) {
        CHECK(table[v].template_id == "classify.p" + std::to_string(v));
        CHECK(table[v].accuracy_percent == 100.0);
        CHECK(table[v].evaluated == 5);
    }
}

TEST_CASE("prompt sweep: 94 correct of 100 rounds to 94.0") {
    TempDir dir;
    // claims c00..c93 judged True (gold True); c94..c99 judged False (wrong)
    std::string script;
    for (int i = 94; i < 100; ++i)
        script += script_line({{"purpose", "classification"}, {"claim_id", "c" + std::to_string(i)}},
                              "Category: False");
    script += script_line({{"purpose", "classification"}}, "Category: True");
    auto backend = scripted(dir, script);
    PromptRegistry prompts;
    std::vector<LabeledPair> pairs;
    for (int i = 0; i < 100; ++i) {
        char id[8];
        std::snprintf(id, sizeof(id), "c%02d", i);
        pairs.push_back({claim(id), concrete(id), Category::T});
    }
    auto table = prompt_sweep(pairs, prompts, backend);
    REQUIRE(table.size() == 6);
    for (const auto& row : table) {
        CHECK(row.accuracy_percent == 94.0);
        CHECK(row.evaluated == 100);
    }
}

TEST_CASE("a pair failing under one variant is excluded from every variant") {
    TempDir dir;
    // c1 parses everywhere; c2 replies gibberish only under classify.p2
    std::string script =
        script_line({{"claim_id", "c2"},
                     {"prompt_contains", "The reference is some information relevant to the claim"}},
                    "completely unusable") +
        script_line({{"purpose", "classification"}}, "Category: True");
    auto backend = scripted(dir, script);
    PromptRegistry prompts;
    // confirm the discriminating phrase belongs to classify.p2 alone
    REQUIRE(prompts.get("classify.p2").body.find(
                "The reference is some information relevant to the claim") != std::string::npos);
    REQUIRE(prompts.get("classify.p3").body.find(
                "The reference is some information relevant to the claim") == std::string::npos);
    std::vector<LabeledPair> pairs{{claim("c1"), concrete("c1"), Category::T},
                                   {claim("c2"), concrete("c2"), Category::T}};
    auto table = prompt_sweep(pairs, prompts, backend);
    for (const auto& row : table) {
        CHECK(row.evaluated == 1);
        CHECK(row.accuracy_percent == 100.0);
    }
}

TEST_CASE("topic distribution uses pre-existing tags without backend calls") {
    TempDir dir;
    auto backend = scripted(dir, script_line({{"claim_id", "never"}}, "x"));
    PromptRegistry prompts;
    BalancedDataset ds;
    for (int i = 0; i < 3; ++i) {
        DatasetEntry e{claim("c" + std::to_string(i)), concrete("c" + std::to_string(i)), true};
        e.claim.topic = "health";
        ds.entries.push_back(e);
    }
    auto ranked = topic_distribution(ds, default_topic_vocabulary(), prompts, backend);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].topic == "health");
    CHECK(ranked[0].count == 3);
    CHECK(backend.transport_calls() == 0);
}

TEST_CASE("topic distribution queries untagged claims and ranks by count") {
    TempDir dir;
    std::string script;
    for (const char* id : {"a", "b", "c"})
        script += script_line({{"purpose", "topic"}, {"claim_id", id}}, "History");
    script += script_line({{"purpose", "topic"}, {"claim_id", "d"}}, "Sports, most likely.");
    script += script_line({{"purpose", "topic"}, {"claim_id", "e"}}, "underwater basket weaving");
    auto backend = scripted(dir, script);
    PromptRegistry prompts;
    BalancedDataset ds;
    for (const char* id : {"a", "b", "c", "d", "e"})
        ds.entries.push_back({claim(id), concrete(id), true});
    ds.entries.push_back({claim("f"), concrete("f"), false});  // factual: skipped

    auto ranked = topic_distribution(ds, default_topic_vocabulary(), prompts, backend);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].topic == "history");
    CHECK(ranked[0].count == 3);
    CHECK(ranked[1].topic == "other");  // ties broken alphabetically
    CHECK(ranked[1].count == 1);
    CHECK(ranked[2].topic == "sports");
    CHECK(backend.transport_calls() == 5);

    CHECK_THROWS_AS(topic_distribution(ds, {}, prompts, backend), ConfigError);
}

TEST_CASE("emit_report writes the expected tables deterministically") {
    TempDir dir;
    ReportInputs in;
    in.matrix = ConfusionMatrix{30, 5, 10, 55};
    in.stats = GenerationStats{};
    in.stats->total_claims = 907;
    in.stats->invalid_references = 12;
    in.stats->classified = 895;
    in.stats->hallucination_count = 181;
    in.stats->hallucination_rate = 19.96;
    in.conflicts = conflict_stats({row("h", "1100", true), row("f", "0000", false)}, 4);
    in.ablation = ablate_k({row("h", "0100", true), row("f", "0000", false)}, 4);
    in.sweep = {{"classify.p0", 94.0, 100}, {"classify.p1", 91.5, 100}};
    in.topics = {{"history", 7}, {"sports", 3}};

    emit_report(in, dir.file("r1"));
    for (const char* name : {"metrics.csv", "generation.csv", "conflicts.csv", "ablation.csv",
                             "sweep.csv", "topics.csv", "summary.md", "ablation.svg",
                             "topics.svg", "conflicts_hallucinatory.svg", "conflicts_factual.svg"})
        CHECK(std::filesystem::exists(dir.file(std::string("r1/") + name)));

    auto metrics = read_file(dir.file("r1/metrics.csv"));
    CHECK(metrics == "method,tp,fp,fn,tn,accuracy,f1\nours,30,5,10,55,0.8500,0.8000\n");
    // 100*181/895 = 20.2234... -> 20.22 over the classified denominator
    CHECK(read_file(dir.file("r1/generation.csv")) ==
          "total_claims,invalid_references,classified,hallucination_count,hallucination_rate,"
          "hallucination_rate_classified\n"
          "907,12,895,181,19.96,20.22\n");
    auto sweep = read_file(dir.file("r1/sweep.csv"));
    CHECK(sweep.find("classify.p0,94.0,100") != std::string::npos);
    auto conflicts = read_file(dir.file("r1/conflicts.csv"));
    CHECK(conflicts.find("hallucinatory,2.0000") != std::string::npos);
    CHECK(conflicts.find("factual,0.0000") != std::string::npos);

    emit_report(in, dir.file("r2"));
    for (const char* name : {"metrics.csv", "summary.md", "ablation.svg", "topics.svg"})
        CHECK(read_file(dir.file(std::string("r1/") + name)) ==
              read_file(dir.file(std::string("r2/") + name)));
}

TEST_CASE("SVG bar heights are exactly proportional to the plotted counts") {
    TempDir dir;
    ReportInputs in;
    in.topics = {{"history", 8}, {"sports", 4}, {"health", 1}};
    emit_report(in, dir.file("r"));
    auto svg = read_file(dir.file("r/topics.svg"));

    std::vector<double> heights;
    std::size_t pos = 0;
    while ((pos = svg.find("height=\"", pos)) != std::string::npos) {
        pos += 8;
        std::size_t end = svg.find('"', pos);
        std::string value = svg.substr(pos, end - pos);
        if (value != "280") heights.push_back(std::stod(value));
    }
    REQUIRE(heights.size() == 3);
    CHECK(heights[0] / heights[1] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(heights[0] / heights[2] == doctest::Approx(8.0).epsilon(1e-6));
}
