#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autohall/core_types.hpp"
#include "autohall/detect.hpp"
#include "autohall/pipeline.hpp"
#include "autohall/prompts.hpp"

namespace autohall {

struct EmptyMatrix : Error {
    using Error::Error;
};

struct InsufficientVerdicts : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Confusion matrix and metrics (hallucination = positive class)
// ---------------------------------------------------------------------------

inline ConfusionMatrix confusion(const std::map<std::string, bool>& predictions,
                                 const std::map<std::string, bool>& gold) {
    std::vector<std::string> diff;
    for (const auto& [id, _] : predictions)
        if (!gold.count(id)) diff.push_back(id);
    for (const auto& [id, _] : gold)
        if (!predictions.count(id)) diff.push_back(id);
    if (!diff.empty()) throw KeyMismatch(std::move(diff));

    ConfusionMatrix m;
    for (const auto& [id, pred] : predictions) {
        const bool g = gold.at(id);
        if (pred && g) ++m.tp;
        else if (pred && !g) ++m.fp;
        else if (!pred && g) ++m.fn;
        else ++m.tn;
    }
    return m;
}

inline double accuracy(const ConfusionMatrix& m) {
    if (m.total() == 0) throw EmptyMatrix("accuracy of an empty matrix");
    return static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
}

/// f1 = 2tp / (2tp + fp + fn); degenerate conventions: all-empty -> 1,
/// tp = 0 with errors present -> 0.
inline double f1(const ConfusionMatrix& m) {
    if (m.tp == 0 && m.fp == 0 && m.fn == 0) return 1.0;
    if (m.tp == 0) return 0.0;
    return 2.0 * static_cast<double>(m.tp) / static_cast<double>(2 * m.tp + m.fp + m.fn);
}

inline double recall(const ConfusionMatrix& m) {
    if (m.tp + m.fn == 0) return 1.0;
    return static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
}

// ---------------------------------------------------------------------------
// K ablation: prefix truncation of stored verdicts, zero new backend calls
// ---------------------------------------------------------------------------

/// A stored outcome reduced to what ablation and conflict statistics need.
struct OutcomeRow {
    std::string claim_id;
    std::string verdict_bits;  // '1'/'0'/'?' per pair, in sampling order
    bool gold_hallucination = false;
};

struct AblationPoint {
    std::uint32_t k = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double recall = 0.0;
};

inline bool predict_from_bits(std::string_view bits, std::uint32_t k, std::uint32_t threshold = 1) {
    std::uint32_t conflicts = 0;
    for (std::uint32_t i = 0; i < k && i < bits.size(); ++i)
        if (bits[i] == '1') ++conflicts;
    return conflicts >= threshold;
}

inline std::vector<AblationPoint> ablate_k(const std::vector<OutcomeRow>& rows,
                                           std::uint32_t k_max, std::uint32_t threshold = 1) {
    for (const auto& r : rows)
        if (r.verdict_bits.size() < k_max)
            throw InsufficientVerdicts("outcome " + r.claim_id + " stores only " +
                                       std::to_string(r.verdict_bits.size()) + " verdicts");
    std::vector<AblationPoint> curve;
    for (std::uint32_t k = 1; k <= k_max; ++k) {
        ConfusionMatrix m;
        for (const auto& r : rows) {
            const bool pred = predict_from_bits(r.verdict_bits, k, threshold);
            if (pred && r.gold_hallucination) ++m.tp;
            else if (pred && !r.gold_hallucination) ++m.fp;
            else if (!pred && r.gold_hallucination) ++m.fn;
            else ++m.tn;
        }
        curve.push_back({k, accuracy(m), f1(m), recall(m)});
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Conflict statistics per class
// ---------------------------------------------------------------------------

struct ConflictStats {
    std::optional<double> mean_conflicts_hallucinatory;
    std::optional<double> mean_conflicts_factual;
    std::vector<std::size_t> histogram_hallucinatory;  // buckets 0..K
    std::vector<std::size_t> histogram_factual;
};

inline ConflictStats conflict_stats(const std::vector<OutcomeRow>& rows, std::uint32_t k_max) {
    ConflictStats stats;
    stats.histogram_hallucinatory.assign(k_max + 1, 0);
    stats.histogram_factual.assign(k_max + 1, 0);
    std::size_t sum_h = 0, n_h = 0, sum_f = 0, n_f = 0;
    for (const auto& r : rows) {
        std::size_t conflicts = static_cast<std::size_t>(
            std::count(r.verdict_bits.begin(), r.verdict_bits.end(), '1'));
        conflicts = std::min<std::size_t>(conflicts, k_max);
        if (r.gold_hallucination) {
            ++stats.histogram_hallucinatory[conflicts];
            sum_h += conflicts;
            ++n_h;
        } else {
            ++stats.histogram_factual[conflicts];
            sum_f += conflicts;
            ++n_f;
        }
    }
    if (n_h) stats.mean_conflicts_hallucinatory = static_cast<double>(sum_h) / static_cast<double>(n_h);
    if (n_f) stats.mean_conflicts_factual = static_cast<double>(sum_f) / static_cast<double>(n_f);
    return stats;
}

// ---------------------------------------------------------------------------
// Prompt-sensitivity sweep over the classification variants
// ---------------------------------------------------------------------------

struct LabeledPair {
    ClaimRecord claim;
    Reference reference;
    Category gold_category = Category::T;
};

struct SweepRow {
    std::string template_id;
    double accuracy_percent = 0.0;
    std::size_t evaluated = 0;
};

/// Classifies every pair under every P0..P5 variant at temperature 0.1.
/// A pair that fails under any variant is excluded from all variants, keeping
/// the per-variant accuracies comparable.
inline std::vector<SweepRow> prompt_sweep(const std::vector<LabeledPair>& pairs,
                                          const PromptRegistry& prompts, Backend& backend) {
    const auto variants = PromptRegistry::list_classification_variants();
    std::vector<std::vector<std::optional<Category>>> results(
        variants.size(), std::vector<std::optional<Category>>(pairs.size()));
    std::vector<bool> excluded(pairs.size(), false);

    for (std::size_t v = 0; v < variants.size(); ++v) {
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (excluded[i]) continue;
            try {
                results[v][i] =
                    classify_claim(pairs[i].claim, pairs[i].reference, variants[v], prompts, backend)
                        .category;
            } catch (const Error&) {
                excluded[i] = true;
            }
        }
    }

    std::vector<SweepRow> table;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        std::size_t correct = 0, n = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (excluded[i] || !results[v][i]) continue;
            ++n;
            if (*results[v][i] == pairs[i].gold_category) ++correct;
        }
        double pct = n == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(n);
        pct = std::floor(pct * 10.0 + 0.5) / 10.0;
        table.push_back({variants[v], pct, n});
    }
    return table;
}

// ---------------------------------------------------------------------------
// Topic distribution over hallucinatory entries
// ---------------------------------------------------------------------------

struct TopicCount {
    std::string topic;
    std::size_t count = 0;
};

/// One topic per hallucinatory entry; claims carrying a pre-existing topic tag
/// skip the backend call. Replies outside the vocabulary land in "other".
/// Counts sorted descending, ties broken alphabetically.
inline std::vector<TopicCount> topic_distribution(const BalancedDataset& dataset,
                                                  const std::vector<std::string>& vocabulary,
                                                  const PromptRegistry& prompts, Backend& backend) {
    if (vocabulary.empty()) throw ConfigError("topic vocabulary must be non-empty");
    std::string list;
    for (const auto& t : vocabulary) {
        if (!list.empty()) list += ", ";
        list += t;
    }
    std::map<std::string, std::size_t> counts;
    auto assign = [&](const std::string& reply) {
        const std::string lowered = to_lower(reply);
        for (const auto& t : vocabulary)
            if (lowered.find(to_lower(t)) != std::string::npos) return t;
        return std::string("other");
    };
    for (const auto& entry : dataset.entries) {
        if (!entry.is_hallucination) continue;
        std::string topic;
        if (entry.claim.topic) {
            topic = assign(*entry.claim.topic);
        } else {
            ChatRequest req;
            req.prompt = prompts.render("topic.v1", {{"claim", entry.claim.text}, {"list", list}});
            req.params.model_id = backend.config().model_id;
            req.params.temperature = 0.1;
            req.params.prompt_template_id = "topic.v1";
            req.purpose = Purpose::Topic;
            req.claim_id = entry.claim.id;
            try {
                topic = assign(backend.complete(req));
            } catch (const Error&) {
                topic = "other";
            }
        }
        ++counts[topic];
    }
    std::vector<TopicCount> ranked;
    for (const auto& [topic, count] : counts) ranked.push_back({topic, count});
    std::sort(ranked.begin(), ranked.end(), [](const TopicCount& a, const TopicCount& b) {
        return a.count != b.count ? a.count > b.count : a.topic < b.topic;
    });
    return ranked;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

struct ReportInputs {
    std::optional<ConfusionMatrix> matrix;
    std::optional<GenerationStats> stats;
    std::optional<ConflictStats> conflicts;
    std::vector<AblationPoint> ablation;
    std::vector<SweepRow> sweep;
    std::vector<TopicCount> topics;
    std::string method = "ours";
};

namespace detail {

inline std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

/// Vertical bar chart; bar heights are exactly proportional to values.
inline std::string svg_bars(const std::string& title, const std::vector<std::string>& labels,
                            const std::vector<double>& values) {
    const double bar_w = 40.0, gap = 12.0, plot_h = 200.0, margin = 30.0;
    double max_v = 0.0;
    for (double v : values) max_v = std::max(max_v, v);
    if (max_v <= 0.0) max_v = 1.0;
    const double width = margin * 2 + labels.size() * (bar_w + gap);
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width, 0) +
                      "\" height=\"280\">\n";
    svg += "<text x=\"" + fmt(width / 2, 0) + "\" y=\"18\" text-anchor=\"middle\">" + title +
           "</text>\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double h = plot_h * values[i] / max_v;
        const double x = margin + static_cast<double>(i) * (bar_w + gap);
        const double y = margin + plot_h - h;
        svg += "<rect x=\"" + fmt(x, 2) + "\" y=\"" + fmt(y, 2) + "\" width=\"" + fmt(bar_w, 0) +
               "\" height=\"" + fmt(h, 4) + "\" fill=\"#4682b4\"/>\n";
        svg += "<text x=\"" + fmt(x + bar_w / 2, 2) + "\" y=\"" + fmt(margin + plot_h + 16, 0) +
               "\" text-anchor=\"middle\" font-size=\"10\">" + labels[i] + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace detail

/// Writes the report directory: CSV tables, SVG charts and a markdown summary.
/// Byte output is deterministic for identical inputs.
inline void emit_report(const ReportInputs& in, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
    std::string summary = "# Run report\n";

    if (in.matrix) {
        const ConfusionMatrix& m = *in.matrix;
        std::string csv = "method,tp,fp,fn,tn,accuracy,f1\n";
        csv += in.method + "," + std::to_string(m.tp) + "," + std::to_string(m.fp) + "," +
               std::to_string(m.fn) + "," + std::to_string(m.tn) + "," +
               detail::fmt(accuracy(m), 4) + "," + detail::fmt(f1(m), 4) + "\n";
        write_file(path("metrics.csv"), csv);
        summary += "\n## Detection metrics (" + in.method + ")\n";
        summary += "- Accuracy: " + detail::fmt(accuracy(m), 4) + "\n";
        summary += "- F1: " + detail::fmt(f1(m), 4) + "\n";
        summary += "- tp=" + std::to_string(m.tp) + " fp=" + std::to_string(m.fp) +
                   " fn=" + std::to_string(m.fn) + " tn=" + std::to_string(m.tn) + "\n";
    }

    if (in.stats) {
        const GenerationStats& s = *in.stats;
        // primary rate is over all claims; the classified-only rate is reported
        // alongside because invalid references shrink the usable denominator
        const std::string valid_rate =
            s.classified ? detail::fmt(hallucination_rate(s.hallucination_count, s.classified), 2)
                         : "absent";
        std::string csv =
            "total_claims,invalid_references,classified,hallucination_count,hallucination_rate,"
            "hallucination_rate_classified\n";
        csv += std::to_string(s.total_claims) + "," + std::to_string(s.invalid_references) + "," +
               std::to_string(s.classified) + "," + std::to_string(s.hallucination_count) + "," +
               detail::fmt(s.hallucination_rate, 2) + "," + valid_rate + "\n";
        write_file(path("generation.csv"), csv);
        summary += "\n## Generation\n- N=" + std::to_string(s.total_claims) +
                   ", invalid=" + std::to_string(s.invalid_references) +
                   ", H=" + std::to_string(s.hallucination_count) +
                   ", H%=" + detail::fmt(s.hallucination_rate, 2) + "\n";
    }

    if (in.conflicts) {
        const ConflictStats& c = *in.conflicts;
        std::string csv = "class,mean_conflicts\n";
        csv += std::string("hallucinatory,") +
               (c.mean_conflicts_hallucinatory ? detail::fmt(*c.mean_conflicts_hallucinatory, 4)
                                               : "absent") + "\n";
        csv += std::string("factual,") +
               (c.mean_conflicts_factual ? detail::fmt(*c.mean_conflicts_factual, 4) : "absent") +
               "\n";
        write_file(path("conflicts.csv"), csv);

        std::vector<std::string> labels;
        std::vector<double> h_vals, f_vals;
        for (std::size_t i = 0; i < c.histogram_hallucinatory.size(); ++i) {
            labels.push_back(std::to_string(i));
            h_vals.push_back(static_cast<double>(c.histogram_hallucinatory[i]));
            f_vals.push_back(static_cast<double>(c.histogram_factual[i]));
        }
        write_file(path("conflicts_hallucinatory.svg"),
                   detail::svg_bars("Conflicts per entry (hallucinatory)", labels, h_vals));
        write_file(path("conflicts_factual.svg"),
                   detail::svg_bars("Conflicts per entry (factual)", labels, f_vals));
        summary += "\n## Conflicts\n- mean conflicts, hallucinatory: " +
                   (c.mean_conflicts_hallucinatory ? detail::fmt(*c.mean_conflicts_hallucinatory, 4)
                                                   : "absent") + "\n";
        summary += "- mean conflicts, factual: " +
                   (c.mean_conflicts_factual ? detail::fmt(*c.mean_conflicts_factual, 4) : "absent") +
                   "\n";
    }

    if (!in.ablation.empty()) {
        std::string csv = "K,accuracy,f1,recall\n";
        std::vector<std::string> labels;
        std::vector<double> f1_vals;
        for (const auto& p : in.ablation) {
            csv += std::to_string(p.k) + "," + detail::fmt(p.accuracy, 4) + "," +
                   detail::fmt(p.f1, 4) + "," + detail::fmt(p.recall, 4) + "\n";
            labels.push_back(std::to_string(p.k));
            f1_vals.push_back(p.f1);
        }
        write_file(path("ablation.csv"), csv);
        write_file(path("ablation.svg"), detail::svg_bars("F1 vs K", labels, f1_vals));
        summary += "\n## K ablation\n- rows: " + std::to_string(in.ablation.size()) + "\n";
    }

    if (!in.sweep.empty()) {
        std::string csv = "template,accuracy_percent,evaluated\n";
        for (const auto& row : in.sweep)
            csv += row.template_id + "," + detail::fmt(row.accuracy_percent, 1) + "," +
                   std::to_string(row.evaluated) + "\n";
        write_file(path("sweep.csv"), csv);
        summary += "\n## Prompt sweep\n- variants: " + std::to_string(in.sweep.size()) + "\n";
    }

    if (!in.topics.empty()) {
        std::string csv = "topic,count\n";
        std::vector<std::string> labels;
        std::vector<double> values;
        for (const auto& t : in.topics) csv += t.topic + "," + std::to_string(t.count) + "\n";
        const std::size_t top = std::min<std::size_t>(in.topics.size(), 10);
        for (std::size_t i = 0; i < top; ++i) {
            labels.push_back(in.topics[i].topic);
            values.push_back(static_cast<double>(in.topics[i].count));
        }
        write_file(path("topics.csv"), csv);
        write_file(path("topics.svg"), detail::svg_bars("Top hallucination topics", labels, values));
        summary += "\n## Topics\n- distinct topics: " + std::to_string(in.topics.size()) + "\n";
    }

    write_file(path("summary.md"), summary);
}

}  // namespace autohall
