#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dmap/bundle.hpp"
#include "dmap/detail/parallel.hpp"
#include "dmap/doc_model.hpp"
#include "dmap/error.hpp"
#include "dmap/text.hpp"

namespace dmap {

/// Row-major token embeddings, one unit-norm row per token.
class TokenMatrix {
public:
    TokenMatrix() = default;

    /// Validates that every row is finite and unit-norm within `tolerance`.
    TokenMatrix(std::size_t dim, std::vector<double> data, double tolerance = 1e-6)
        : dim_(dim), data_(std::move(data)) {
        if (dim_ == 0 || data_.empty() || data_.size() % dim_ != 0)
            throw Error("token matrix needs at least one row of positive dimension");
        for (std::size_t r = 0; r < rows(); ++r) {
            double norm = 0;
            for (double v : row(r)) {
                if (!std::isfinite(v)) throw Error("token matrix has a non-finite value");
                norm += v * v;
            }
            if (std::abs(std::sqrt(norm) - 1.0) > tolerance)
                throw Error("token matrix row " + std::to_string(r) + " is not unit norm");
        }
    }

    /// Normalizes each row; rows of zero norm are rejected.
    static TokenMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty() || rows.front().empty()) throw Error("token matrix needs at least one row");
        const std::size_t dim = rows.front().size();
        std::vector<double> data;
        data.reserve(rows.size() * dim);
        for (const auto& r : rows) {
            if (r.size() != dim) throw Error("token matrix rows differ in dimension");
            double norm = 0;
            for (double v : r) norm += v * v;
            norm = std::sqrt(norm);
            if (!(norm > 0) || !std::isfinite(norm)) throw Error("token matrix row has zero or non-finite norm");
            for (double v : r) data.push_back(v / norm);
        }
        return TokenMatrix(dim, std::move(data));
    }

    std::size_t rows() const { return dim_ ? data_.size() / dim_ : 0; }
    std::size_t dim() const { return dim_; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
    const std::vector<double>& data() const { return data_; }

    bool operator==(const TokenMatrix&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

/// Late-interaction score: for every query row, the best dot product against
/// any document row, summed over query rows.
inline double maxsim(const TokenMatrix& q, const TokenMatrix& d) {
    if (q.dim() != d.dim())
        throw Error("maxsim: dimension mismatch " + std::to_string(q.dim()) + " vs " + std::to_string(d.dim()));
    double total = 0;
    for (std::size_t i = 0; i < q.rows(); ++i) {
        auto qi = q.row(i);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d.rows(); ++j) {
            auto dj = d.row(j);
            double dot = 0;
            for (std::size_t k = 0; k < qi.size(); ++k) dot += qi[k] * dj[k];
            best = std::max(best, dot);
        }
        total += best;
    }
    return total;
}

enum class Modality { text, visual };

inline std::string_view to_string(Modality m) { return m == Modality::text ? "text" : "visual"; }

inline Modality parse_modality(std::string_view s) {
    if (s == "text") return Modality::text;
    if (s == "visual") return Modality::visual;
    throw Error("unknown modality: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Embedding backends

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<TokenMatrix> embed_texts(const std::vector<std::string>& texts) = 0;
    virtual std::vector<TokenMatrix> embed_images(const std::vector<fs::path>& images) = 0;
    /// Query encoder; visual backends map text queries into their image space.
    virtual std::vector<TokenMatrix> embed_queries(const std::vector<std::string>& queries) {
        return embed_texts(queries);
    }
    virtual std::size_t dim() const = 0;
    virtual std::string name() const = 0;
};

namespace hashing {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// `dim` values in [-1, 1) expanded from a 64-bit key.
inline std::vector<double> expand(std::uint64_t key, std::size_t dim) {
    std::vector<double> row(dim);
    std::uint64_t state = key;
    for (auto& v : row) v = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
    return row;
}

}  // namespace hashing

/// Lowercases ASCII and trims leading/trailing non-alphanumeric ASCII.
inline std::string normalize_token(std::string_view tok) {
    auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || (static_cast<unsigned char>(c) & 0x80); };
    while (!tok.empty() && !alnum(tok.front())) tok.remove_prefix(1);
    while (!tok.empty() && !alnum(tok.back())) tok.remove_suffix(1);
    return text::to_lower(tok);
}

/// Deterministic hash embedder. A text becomes one row per whitespace token
/// (normalized by normalize_token), each row a seeded hash of the token
/// expanded to `dim` values and L2-normalized. An image becomes one row hashed
/// from its file bytes. Output depends only on (input, seed, dim).
class MockEmbedder : public EmbeddingBackend {
public:
    MockEmbedder(std::uint64_t seed, std::size_t dim, std::string name = "mock")
        : seed_(seed), dim_(dim), name_(std::move(name)) {
        if (dim_ == 0) throw Error("mock embedder dim must be positive");
    }

    TokenMatrix embed_text(std::string_view s) const {
        std::vector<std::vector<double>> rows;
        for (auto tok : text::split_whitespace(s)) {
            auto norm = normalize_token(tok);
            if (norm.empty()) continue;
            rows.push_back(hashing::expand(hashing::fnv1a(norm, hashing::fnv1a_u64(seed_)), dim_));
        }
        if (rows.empty()) rows.push_back(hashing::expand(hashing::fnv1a_u64(seed_), dim_));
        return TokenMatrix::from_rows(rows);
    }

    TokenMatrix embed_image(const fs::path& p) const {
        auto bytes = read_file(p);
        auto key = hashing::fnv1a(bytes, hashing::fnv1a("image", hashing::fnv1a_u64(seed_)));
        return TokenMatrix::from_rows({hashing::expand(key, dim_)});
    }

    std::vector<TokenMatrix> embed_texts(const std::vector<std::string>& texts) override {
        std::vector<TokenMatrix> out;
        for (const auto& t : texts) out.push_back(embed_text(t));
        return out;
    }

    std::vector<TokenMatrix> embed_images(const std::vector<fs::path>& images) override {
        std::vector<TokenMatrix> out;
        for (const auto& p : images) out.push_back(embed_image(p));
        return out;
    }

    std::size_t dim() const override { return dim_; }
    std::string name() const override { return name_; }

private:
    std::uint64_t seed_;
    std::size_t dim_;
    std::string name_;
};

// ---------------------------------------------------------------------------
// Index

struct IndexRecord {
    std::string element_id;
    Modality modality = Modality::text;
    TokenMatrix matrix;

    bool operator==(const IndexRecord&) const = default;
};

struct Scored {
    std::string element_id;
    double score = 0;
    bool operator==(const Scored&) const = default;
};

/// Flat per-modality record lists scored by exhaustive scan.
class Index {
public:
    Index() = default;

    /// `page_of` maps element ids to page numbers for tie-breaking.
    explicit Index(std::map<std::string, int> page_of) : page_of_(std::move(page_of)) {}

    void add(IndexRecord r) {
        auto& list = records(r.modality);
        if (!list.empty() && list.front().matrix.dim() != r.matrix.dim())
            throw Error("index: inconsistent dimension for " + std::string(to_string(r.modality)) + " records");
        list.push_back(std::move(r));
    }

    const std::vector<IndexRecord>& records(Modality m) const { return m == Modality::text ? text_ : visual_; }
    std::vector<IndexRecord>& records(Modality m) { return m == Modality::text ? text_ : visual_; }

    int page_of(const std::string& id) const {
        auto it = page_of_.find(id);
        return it == page_of_.end() ? std::numeric_limits<int>::max() : it->second;
    }

    bool operator==(const Index& o) const { return text_ == o.text_ && visual_ == o.visual_; }

private:
    std::vector<IndexRecord> text_;
    std::vector<IndexRecord> visual_;
    std::map<std::string, int> page_of_;
};

inline std::map<std::string, int> page_lookup(const DMap& m) {
    std::map<std::string, int> out;
    for (const auto& [id, e] : m.elements) out[id] = e.page_no;
    return out;
}

/// The k best records by maxsim, score descending, ties by (page, id).
inline std::vector<Scored> topk(const Index& index, const TokenMatrix& q, Modality modality, std::size_t k) {
    if (k == 0) throw Error("topk: k must be at least 1");
    const auto& records = index.records(modality);
    struct Row {
        Scored s;
        int page;
    };
    std::vector<Row> scored;
    scored.reserve(records.size());
    for (const auto& r : records) scored.push_back({{r.element_id, maxsim(q, r.matrix)}, index.page_of(r.element_id)});
    auto better = [](const Row& a, const Row& b) {
        if (a.s.score != b.s.score) return a.s.score > b.s.score;
        if (a.page != b.page) return a.page < b.page;
        return a.s.element_id < b.s.element_id;
    };
    const auto n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
    std::vector<Scored> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(scored[i].s);
    return out;
}

struct IndexBuildOptions {
    std::size_t concurrency = 4;
    // Attempts per element before it is skipped.
    int attempts = 2;
    // Largest tolerated fraction of skipped records per modality.
    double max_missing_fraction = 0.10;
};

struct IndexBuildResult {
    Index index;
    std::vector<std::string> warnings;
};

/// Text to embed for an element; page_content carries the full page text.
inline std::string element_text(const DMap& m, const Element& e) {
    if (e.kind == ElementKind::page_content) {
        const Page* p = m.page(e.page_no);
        if (p && !text::trim(p->text).empty()) return p->text;
    }
    return e.text_desc;
}

/// Embeds every element: a text record when it has text, a visual record when
/// it has an image. Elements in document order.
inline IndexBuildResult build_index(const DMap& m, EmbeddingBackend& text_backend, EmbeddingBackend& visual_backend,
                                    const fs::path& bundle_root, const IndexBuildOptions& opts = {}) {
    struct Job {
        std::string id;
        Modality modality;
        std::string text;
        fs::path image;
    };
    std::vector<Job> jobs;
    for (const auto& page : m.pages) {
        for (const auto& id : page.element_ids) {
            const Element* e = m.element(id);
            if (!e) continue;
            auto t = element_text(m, *e);
            if (!text::trim(t).empty()) jobs.push_back({id, Modality::text, t, {}});
        }
    }
    for (const auto& page : m.pages) {
        for (const auto& id : page.element_ids) {
            const Element* e = m.element(id);
            if (e && e->image_ref) jobs.push_back({id, Modality::visual, {}, bundle_root / *e->image_ref});
        }
    }

    std::vector<std::optional<TokenMatrix>> results(jobs.size());
    std::vector<std::string> errors(jobs.size());
    detail::parallel_for(jobs.size(), opts.concurrency, [&](std::size_t i) {
        const auto& job = jobs[i];
        for (int attempt = 0; attempt < std::max(1, opts.attempts); ++attempt) {
            try {
                auto out = job.modality == Modality::text ? text_backend.embed_texts({job.text})
                                                          : visual_backend.embed_images({job.image});
                if (out.size() != 1) throw Error("backend returned " + std::to_string(out.size()) + " matrices");
                results[i] = std::move(out.front());
                return;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    });

    IndexBuildResult r{Index(page_lookup(m)), {}};
    std::map<Modality, std::pair<int, int>> missing;  // modality -> (missing, expected)
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto& counts = missing[jobs[i].modality];
        ++counts.second;
        if (!results[i]) {
            ++counts.first;
            r.warnings.push_back(std::string(to_string(jobs[i].modality)) + " embedding skipped for " + jobs[i].id +
                                 ": " + errors[i]);
            continue;
        }
        r.index.add({jobs[i].id, jobs[i].modality, std::move(*results[i])});
    }
    for (const auto& [modality, counts] : missing) {
        if (counts.second > 0 && static_cast<double>(counts.first) / counts.second > opts.max_missing_fraction) {
            throw Error("index build failed: " + std::to_string(counts.first) + " of " +
                        std::to_string(counts.second) + " " + std::string(to_string(modality)) +
                        " embeddings missing");
        }
    }
    return r;
}

inline std::string index_file_name(Modality m) {
    return m == Modality::text ? "index.text.jsonl" : "index.visual.jsonl";
}

inline std::string serialize_records(const std::vector<IndexRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < r.matrix.rows(); ++i) {
            auto row = r.matrix.row(i);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        nlohmann::json j = {{"element_id", r.element_id}, {"dim", r.matrix.dim()}, {"rows", rows}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline void write_index(const Index& index, const fs::path& dir) {
    for (auto m : {Modality::text, Modality::visual})
        write_file(dir / index_file_name(m), serialize_records(index.records(m)));
}

inline std::vector<IndexRecord> parse_records(std::string_view jsonl, Modality modality) {
    std::vector<IndexRecord> out;
    std::size_t line_no = 0;
    std::size_t offset = 0;
    for (auto line : text::split_lines(jsonl)) {
        ++line_no;
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (text::trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
        auto bad = [&](const std::string& field, const std::string& what) {
            return ParseError(line_offset, "/" + std::to_string(line_no) + "/" + field, what);
        };
        if (j.is_discarded() || !j.is_object()) throw bad("", "line is not a JSON object");
        if (!j.contains("element_id") || !j["element_id"].is_string()) throw bad("element_id", "expected string");
        if (!j.contains("dim") || !j["dim"].is_number_unsigned()) throw bad("dim", "expected positive integer");
        if (!j.contains("rows") || !j["rows"].is_array()) throw bad("rows", "expected array");
        const auto dim = j["dim"].get<std::size_t>();
        std::vector<double> data;
        for (const auto& row : j["rows"]) {
            if (!row.is_array() || row.size() != dim) throw bad("rows", "row length differs from dim");
            for (const auto& v : row) {
                if (!v.is_number()) throw bad("rows", "expected numbers");
                data.push_back(v.get<double>());
            }
        }
        out.push_back({j["element_id"].get<std::string>(), modality, TokenMatrix(dim, std::move(data))});
    }
    return out;
}

inline Index load_index(const fs::path& dir, const DMap& m) {
    Index index(page_lookup(m));
    for (auto modality : {Modality::text, Modality::visual}) {
        auto path = dir / index_file_name(modality);
        if (!fs::exists(path)) throw Error("missing index file " + path.string());
        for (auto& r : parse_records(read_file(path), modality)) index.add(std::move(r));
    }
    return index;
}

}  // namespace dmap
