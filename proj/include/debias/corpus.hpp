// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "debias/labels.hpp"

namespace debias::corpus {

struct Record {
    std::string id;
    std::string text;
    Label label = Label::normal;
    double p_aae = 0.0;
    double p_wae = 0.0;
    Dialect dialect = Dialect::wae;

    friend bool operator==(const Record&, const Record&) = default;
};

/// Majority dialect between the two posteriors; ties go to WAE.
Dialect majority_dialect(double p_aae, double p_wae);

struct Dataset {
    Scheme scheme = Scheme::four_class;
    std::vector<Record> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    /// Unique ids, labels inside the scheme, posteriors in [0,1].
    void validate() const;
};

/// Record counts per (label, dialect) cell of a scheme.
class CellCounts {
public:
    explicit CellCounts(Scheme scheme = Scheme::four_class);

    Scheme scheme() const { return scheme_; }
    std::size_t& at(Label label, Dialect dialect);
    std::size_t at(Label label, Dialect dialect) const;
    std::size_t total(Dialect dialect) const;
    std::size_t total() const;

    friend bool operator==(const CellCounts&, const CellCounts&) = default;

private:
    Scheme scheme_;
    std::vector<std::array<std::size_t, 2>> cells_;
};

CellCounts count_cells(const Dataset& d);
/// {"counts.<label>.<dialect>": n, ...} in class-index then dialect order.
std::string counts_json(const Dataset& d);

struct SamplingSpec {
    CellCounts counts;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

enum class Format { csv, jsonl };

/// Format from the file extension: ".jsonl" / ".json" read as JSONL, anything else as CSV.
Format format_for(const std::filesystem::path& path);

/// Reads the documented CSV or JSONL schema. Dialect is derived from the
/// posteriors when present, otherwise taken from the dialect column (with
/// posteriors recorded as 1/0). Errors name the offending row.
Dataset ingest(const std::filesystem::path& path, std::optional<Format> format = std::nullopt);
Dataset parse_csv(std::string_view contents);
Dataset parse_jsonl(std::string_view contents);

/// Columns id,text,label,p_aae,p_wae,dialect.
std::string export_csv(const Dataset& d);
void save_csv(const Dataset& d, const std::filesystem::path& path);

/// {abusive, hateful} -> abusive, {normal, spam} -> normal.
Dataset collapse_two_class(const Dataset& d);

/// Equal dialect totals; the larger subgroup is scaled down to the smaller
/// total by largest-remainder rounding of its own label mix.
SamplingSpec make_case1_spec(const Dataset& d, std::uint64_t seed = 0);
/// Per-label minimum across dialects, so both subgroups share one label mix.
SamplingSpec make_case2_spec(const Dataset& d, std::uint64_t seed = 0);

/// Uniform sampling without replacement inside each cell, then a seeded
/// shuffle of the result.
Dataset resample(const Dataset& d, const SamplingSpec& spec);
Dataset shuffle(const Dataset& d, std::uint64_t seed);

/// Stratified by cell; each cell sends round(size * test_fraction) records to
/// test. Both halves keep the input order.
std::pair<Dataset, Dataset> split(const Dataset& d, double test_fraction, std::uint64_t seed);

struct SynthSpec {
    CellCounts counts{Scheme::four_class};
    std::size_t class_pool = 30;    // marker tokens per class
    std::size_t dialect_pool = 20;  // marker tokens per dialect
    std::size_t noise_pool = 300;   // shared filler tokens
    std::size_t class_tokens = 3;
    std::size_t dialect_tokens = 3;
    std::size_t noise_tokens = 6;
    /// Chance that each class-marker token comes from the record's own class
    /// pool rather than another class's.
    double class_fidelity = 1.0;
    /// Chance that a record generated as (normal, AAE) is labelled abusive.
    double beta = 0.0;
    /// Chance of a leading @handle and, independently, a trailing URL.
    double decoration_rate = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

Dataset generate_synthetic(const SynthSpec& spec);

}  // namespace debias::corpus
