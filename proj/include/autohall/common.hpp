#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace autohall {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : Error {
    using Error::Error;
};

struct UnmappableLabel : Error {
    explicit UnmappableLabel(const std::string& label)
        : Error("unmappable label: '" + label + "'"), label(label) {}
    std::string label;
};

struct Malformed : Error {
    Malformed(std::size_t row, const std::string& reason)
        : Error("malformed record at row " + std::to_string(row) + ": " + reason),
          row(row), reason(reason) {}
    std::size_t row;
    std::string reason;
};

struct CountMismatch : Error {
    CountMismatch(const std::string& what_counts, std::size_t expected, std::size_t observed)
        : Error("count mismatch (" + what_counts + "): expected " + std::to_string(expected) +
                ", observed " + std::to_string(observed)),
          expected(expected), observed(observed) {}
    std::size_t expected;
    std::size_t observed;
};

struct DuplicateId : Error {
    explicit DuplicateId(const std::string& id)
        : Error("duplicate claim id: " + id), id(id) {}
    std::string id;
};

struct TransportError : Error {
    using Error::Error;
};

struct RateLimited : Error {
    explicit RateLimited(int retry_after_s)
        : Error("rate limited, retry after " + std::to_string(retry_after_s) + "s"),
          retry_after_s(retry_after_s) {}
    int retry_after_s;
};

struct ScriptMiss : Error {
    explicit ScriptMiss(const std::string& key)
        : Error("scripted backend has no reply for request: " + key), key(key) {}
    std::string key;
};

struct UnknownTemplate : Error {
    explicit UnknownTemplate(const std::string& id)
        : Error("unknown template: " + id), id(id) {}
    std::string id;
};

struct MissingBinding : Error {
    explicit MissingBinding(const std::string& name)
        : Error("missing binding for placeholder: " + name), name(name) {}
    std::string name;
};

struct UnboundPlaceholderRemains : Error {
    explicit UnboundPlaceholderRemains(const std::string& name)
        : Error("unbound placeholder remains after render: " + name), name(name) {}
    std::string name;
};

struct Unparseable : Error {
    explicit Unparseable(const std::string& raw)
        : Error("unparseable model output: " + raw), raw(raw) {}
    std::string raw;
};

struct InsufficientFactual : Error {
    InsufficientFactual(std::size_t needed, std::size_t available)
        : Error("insufficient factual entries to balance: need " + std::to_string(needed) +
                ", have " + std::to_string(available)),
          needed(needed), available(available) {}
    std::size_t needed;
    std::size_t available;
};

struct KeyMismatch : Error {
    explicit KeyMismatch(std::vector<std::string> diff)
        : Error("prediction/gold key sets differ (" + std::to_string(diff.size()) + " ids)"),
          difference(std::move(diff)) {}
    std::vector<std::string> difference;
};

struct EmptyText : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Small string helpers
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Lowercased alphanumeric runs; everything else is a separator.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit digest, used for cache keys and content checksums
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(data);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Line-record (JSONL) IO
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

/// Calls fn(row_index, line) for every non-empty line.
inline void for_each_line(const std::string& content,
                          const std::function<void(std::size_t, std::string_view)>& fn) {
    std::size_t row = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        std::size_t nl = content.find('\n', pos);
        std::string_view line;
        if (nl == std::string::npos) {
            line = std::string_view(content).substr(pos);
            pos = content.size() + 1;
        } else {
            line = std::string_view(content).substr(pos, nl - pos);
            pos = nl + 1;
        }
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!trim(line).empty()) fn(row, line);
        ++row;
    }
}

inline std::vector<json> read_jsonl(const std::string& path) {
    std::vector<json> records;
    for_each_line(read_file(path), [&](std::size_t row, std::string_view line) {
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Malformed(row, "invalid record syntax");
        records.push_back(std::move(j));
    });
    return records;
}

inline void write_jsonl(const std::string& path, const std::vector<json>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    write_file(path, out);
}

}  // namespace autohall
