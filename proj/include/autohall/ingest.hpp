#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "autohall/core_types.hpp"

namespace autohall {

// ---------------------------------------------------------------------------
// Label normalization (the binary label filter)
// ---------------------------------------------------------------------------
//
// Per-dataset label vocabularies:
//   climate-fever : supports / refutes
//   pubhealth     : true / false
//   wice          : supported / not_supported
//   generic       : any of the six
// Everything else (e.g. "not enough info", "mixture") is unmappable and the
// record is dropped with a counted warning.

inline BinaryVerdict normalize_label(const std::string& raw, Dataset dataset) {
    const std::string label = to_lower(trim(raw));
    auto accept = [&](const char* factual, const char* nonfactual) -> std::optional<BinaryVerdict> {
        if (label == factual) return BinaryVerdict::Factual;
        if (label == nonfactual) return BinaryVerdict::NonFactual;
        return std::nullopt;
    };
    std::optional<BinaryVerdict> v;
    switch (dataset) {
        case Dataset::ClimateFever: v = accept("supports", "refutes"); break;
        case Dataset::PubHealth: v = accept("true", "false"); break;
        case Dataset::Wice: v = accept("supported", "not_supported"); break;
        case Dataset::Generic:
            for (auto [f, n] : {std::pair{"supports", "refutes"},
                                std::pair{"true", "false"},
                                std::pair{"supported", "not_supported"}}) {
                v = accept(f, n);
                if (v) break;
            }
            break;
    }
    if (!v) throw UnmappableLabel(raw);
    return *v;
}

// ---------------------------------------------------------------------------
// Corpus loading
// ---------------------------------------------------------------------------

struct CorpusManifest {
    Dataset dataset = Dataset::Generic;
    std::string path;
    /// When present, loading fails loudly unless observed per-verdict counts match.
    std::optional<std::map<BinaryVerdict, std::size_t>> expected_counts;
};

struct LoadReport {
    std::size_t unmappable = 0;
    std::size_t malformed = 0;
};

namespace detail {

inline std::optional<std::string> opt_str(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    const auto& v = j[key];
    if (v.is_string()) {
        auto s = v.get<std::string>();
        if (s.empty()) return std::nullopt;
        return s;
    }
    return std::nullopt;
}

/// Generic normalized corpus format: one JSON object per line with fields
/// {id, text, raw_label, dataset, evidence?, topic?}.
inline ClaimRecord parse_generic_row(const json& j, std::size_t row) {
    for (const char* key : {"id", "text", "raw_label", "dataset"})
        if (!j.contains(key)) throw Malformed(row, std::string("missing field '") + key + "'");
    ClaimRecord rec;
    rec.id = j["id"].get<std::string>();
    rec.text = j["text"].get<std::string>();
    rec.raw_label = j["raw_label"].get<std::string>();
    rec.dataset = dataset_from_string(j["dataset"].get<std::string>());
    rec.evidence = opt_str(j, "evidence");
    rec.topic = opt_str(j, "topic");
    return rec;
}

/// Climate-fever distribution rows: {claim_id, claim, claim_label, evidences:[{evidence}...]}.
inline ClaimRecord parse_climate_fever_row(const json& j, std::size_t row) {
    if (!j.contains("claim") || !j.contains("claim_label"))
        throw Malformed(row, "missing 'claim' or 'claim_label'");
    ClaimRecord rec;
    rec.dataset = Dataset::ClimateFever;
    rec.id = "climate-fever:" + std::to_string(row);
    rec.text = j["claim"].get<std::string>();
    rec.raw_label = j["claim_label"].get<std::string>();
    if (j.contains("evidences") && j["evidences"].is_array()) {
        std::string ev;
        for (const auto& e : j["evidences"]) {
            if (e.is_object() && e.contains("evidence")) {
                if (!ev.empty()) ev += ' ';
                ev += e["evidence"].get<std::string>();
            }
        }
        if (!ev.empty()) rec.evidence = ev;
    }
    rec.topic = "climate";
    return rec;
}

/// WICE distribution rows: {label, claim, evidence?: [string...], meta?}.
inline ClaimRecord parse_wice_row(const json& j, std::size_t row) {
    if (!j.contains("claim") || !j.contains("label"))
        throw Malformed(row, "missing 'claim' or 'label'");
    ClaimRecord rec;
    rec.dataset = Dataset::Wice;
    rec.id = "wice:" + std::to_string(row);
    rec.text = j["claim"].get<std::string>();
    rec.raw_label = j["label"].get<std::string>();
    if (j.contains("evidence") && j["evidence"].is_array()) {
        std::string ev;
        for (const auto& e : j["evidence"]) {
            if (e.is_string()) {
                if (!ev.empty()) ev += ' ';
                ev += e.get<std::string>();
            }
        }
        if (!ev.empty()) rec.evidence = ev;
    }
    return rec;
}

/// PUBHEALTH ships as TSV with a header row naming at least
/// claim_id, claim, label; explanation and subjects are carried when present.
inline std::vector<std::string> split_tsv(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
        std::size_t tab = line.find('\t', pos);
        if (tab == std::string_view::npos) {
            cells.emplace_back(line.substr(pos));
            break;
        }
        cells.emplace_back(line.substr(pos, tab - pos));
        pos = tab + 1;
    }
    return cells;
}

}  // namespace detail

/// Parses one corpus file into ClaimRecords, applying the binary label filter.
/// Records with unmappable labels are dropped and counted; malformed rows are
/// dropped and counted unless the whole file fails to parse. Surviving record
/// order follows file order; ids are deterministic (dataset tag + row index).
inline std::vector<ClaimRecord> load_corpus(const CorpusManifest& manifest,
                                            LoadReport* report = nullptr) {
    const std::string content = read_file(manifest.path);
    std::vector<ClaimRecord> records;
    LoadReport local;

    auto keep = [&](ClaimRecord rec) {
        try {
            rec.gold = normalize_label(rec.raw_label, rec.dataset);
        } catch (const UnmappableLabel&) {
            ++local.unmappable;
            return;
        }
        records.push_back(std::move(rec));
    };

    if (manifest.dataset == Dataset::PubHealth) {
        std::vector<std::string> header;
        std::map<std::string, std::size_t> col;
        for_each_line(content, [&](std::size_t row, std::string_view line) {
            auto cells = detail::split_tsv(line);
            if (header.empty()) {
                header = cells;
                for (std::size_t i = 0; i < header.size(); ++i) col[to_lower(trim(header[i]))] = i;
                for (const char* need : {"claim", "label"})
                    if (!col.count(need))
                        throw Malformed(row, std::string("pubhealth header lacks '") + need + "' column");
                return;
            }
            auto cell = [&](const char* name) -> std::optional<std::string> {
                auto it = col.find(name);
                if (it == col.end() || it->second >= cells.size()) return std::nullopt;
                auto v = trim(cells[it->second]);
                if (v.empty()) return std::nullopt;
                return v;
            };
            if (cells.size() < col.size() && !cell("claim")) {
                ++local.malformed;
                return;
            }
            ClaimRecord rec;
            rec.dataset = Dataset::PubHealth;
            rec.id = "pubhealth:" + std::to_string(row);
            auto claim = cell("claim");
            auto label = cell("label");
            if (!claim || !label) {
                ++local.malformed;
                return;
            }
            rec.text = *claim;
            rec.raw_label = *label;
            rec.evidence = cell("explanation");
            rec.topic = cell("subjects");
            if (!rec.topic) rec.topic = "health";
            keep(std::move(rec));
        });
    } else {
        for_each_line(content, [&](std::size_t row, std::string_view line) {
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                ++local.malformed;
                return;
            }
            try {
                switch (manifest.dataset) {
                    case Dataset::ClimateFever: keep(detail::parse_climate_fever_row(j, row)); break;
                    case Dataset::Wice: keep(detail::parse_wice_row(j, row)); break;
                    case Dataset::Generic: keep(detail::parse_generic_row(j, row)); break;
                    case Dataset::PubHealth: break;  // handled above
                }
            } catch (const Malformed&) {
                ++local.malformed;
            }
        });
    }

    if (manifest.expected_counts) {
        std::map<BinaryVerdict, std::size_t> observed{{BinaryVerdict::Factual, 0},
                                                      {BinaryVerdict::NonFactual, 0}};
        for (const auto& r : records) ++observed[r.gold];
        for (const auto& [verdict, expected] : *manifest.expected_counts) {
            if (observed[verdict] != expected)
                throw CountMismatch(to_string(verdict), expected, observed[verdict]);
        }
    }

    if (report) *report = local;
    return records;
}

/// Concatenates corpora, rejecting duplicate ids.
inline std::vector<ClaimRecord> merge_corpora(const std::vector<std::vector<ClaimRecord>>& corpora) {
    std::vector<ClaimRecord> merged;
    std::set<std::string> seen;
    for (const auto& corpus : corpora) {
        for (const auto& rec : corpus) {
            if (!seen.insert(rec.id).second) throw DuplicateId(rec.id);
            merged.push_back(rec);
        }
    }
    return merged;
}

inline void save_claims(const std::string& path, const std::vector<ClaimRecord>& records) {
    std::vector<json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.emplace_back(r);
    write_jsonl(path, rows);
}

inline std::vector<ClaimRecord> load_claims(const std::string& path) {
    std::vector<ClaimRecord> records;
    for (const auto& j : read_jsonl(path)) records.push_back(j.get<ClaimRecord>());
    return records;
}

}  // namespace autohall
