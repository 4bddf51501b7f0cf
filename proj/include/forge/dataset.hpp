#pragma once

#include "forge/corpus.hpp"
#include "forge/types.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace forge::dataset {

struct CaptionPayload {
    std::vector<std::string> captions;
    bool operator==(const CaptionPayload&) const = default;
};

struct VqaPair {
    std::string question;
    Answer answer = Answer::Yes;
    bool reused_original_answer = false;
    bool operator==(const VqaPair&) const = default;
};

struct VqaPayload {
    std::vector<VqaPair> pairs;
    bool operator==(const VqaPayload&) const = default;
};

struct VePair {
    std::string hypothesis;
    VeLabel label = VeLabel::Entailment;
    bool reused_original_label = false;
    bool operator==(const VePair&) const = default;
};

struct VePayload {
    std::vector<VePair> pairs;
    bool operator==(const VePayload&) const = default;
};

using Payload = std::variant<CaptionPayload, VqaPayload, VePayload>;

struct AnnotatedRecord {
    std::string source_id;
    Style style = Style::RealPhoto;
    Split split = Split::Train;
    Task task = Task::Caption;
    std::string image_ref;
    Payload payload;
    bool operator==(const AnnotatedRecord&) const = default;
};

Task payload_task(const Payload& payload);
/// Captions, questions, or hypotheses carried by the record.
std::size_t unit_count(const AnnotatedRecord& record);

/// Record line:
///   {"source_id","style","split","task","image",
///    "captions": [...] |
///    "pairs": [{"question","answer","reused_original_answer"}] |
///    "pairs": [{"hypothesis","label","reused_original_label"}]}
nlohmann::json to_json(const AnnotatedRecord& record);
/// Throws ValidationError naming the record id and the offending field.
AnnotatedRecord record_from_json(const nlohmann::json& j);

/// The real-photo record for an original item: its labels, all reused.
AnnotatedRecord record_from_source(const SourceItem& item, std::string image_ref);

struct Manifest {
    Task task = Task::Caption;
    std::vector<AnnotatedRecord> records;
    nlohmann::json provenance = nlohmann::json::object();
};

/// Layout under root:
///   {task}/provenance.json
///   {task}/{style}/{split}.jsonl     records sorted by source_id
///   {task}/{style}/images/...        image_ref is relative to {task}/{style}
/// Validates first (see validate) and holds an exclusive lock on the task
/// directory while writing.
void write_manifest(const Manifest& manifest, const std::filesystem::path& root);
Manifest read_manifest(const std::filesystem::path& root, Task task);

/// Reads and validates one {split}.jsonl file; image refs resolve against its
/// directory.
std::vector<AnnotatedRecord> read_manifest_file(const std::filesystem::path& path);

/// (source_id, style) unique, every record of the manifest's task, every
/// image_ref present under task_dir/{style}. An empty task_dir skips the
/// image check.
void validate(const Manifest& manifest, const std::filesystem::path& task_dir);

struct Ratios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

/// Largest-remainder apportionment of n over the ratios. Equal remainders go
/// to the later split.
std::array<std::size_t, 3> apportion(std::size_t n, const Ratios& ratios);

/// Sorts ids, shuffles with a splitmix64 stream seeded by `seed`, then deals
/// the first apportioned share to train, the next to valid, the rest to test.
/// The result does not depend on the input order.
std::map<std::string, Split> split_by_ratio(std::vector<std::string> ids, const Ratios& ratios, std::uint64_t seed);

struct StatsCell {
    std::size_t images = 0;
    std::size_t units = 0;
    std::map<std::string, std::size_t> labels;
    bool operator==(const StatsCell&) const = default;
};

struct StatsReport {
    Task task = Task::Caption;
    /// [style][split] in kAllStyles/kAllSplits order.
    std::array<std::array<StatsCell, 3>, 4> cells{};

    const StatsCell& at(Style style, Split split) const;
    StatsCell& at(Style style, Split split);
    bool operator==(const StatsReport&) const = default;
};

/// "captions", "questions", or "hypotheses".
std::string unit_name(Task task);
/// Label names in histogram order; empty for captioning.
std::vector<std::string> label_names(Task task);

StatsReport compute_stats(const Manifest& manifest);

enum class StatsFormat { Text, Json, Csv };
StatsFormat parse_stats_format(std::string_view text);

nlohmann::json stats_to_json(const StatsReport& report);
StatsReport stats_from_json(const nlohmann::json& j);
std::string render_stats(const StatsReport& report, StatsFormat format);

struct AssembleOptions {
    Task task = Task::Caption;
    std::vector<std::filesystem::path> annotated_dirs;
    std::filesystem::path root;
    bool include_real = true;
    nlohmann::json provenance = nlohmann::json::object();
};

struct AssembleSummary {
    std::size_t records = 0;
    std::map<std::string, std::size_t> per_style;
};

/// Builds the dataset for one task: real-photo records straight from the
/// source corpus plus every annotated.jsonl record for the task, images copied
/// beside the manifests.
AssembleSummary assemble(const std::vector<SourceItem>& sources, const AssembleOptions& options);

}  // namespace forge::dataset
