#pragma once

#include "forge/bytes.hpp"
#include "forge/types.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace forge {

struct VqaSourcePair {
    std::string question;
    Answer answer = Answer::Yes;
};

struct VeSourcePair {
    std::string hypothesis;
    VeLabel label = VeLabel::Entailment;
};

using CaptionSource = std::vector<std::string>;
using SourcePayload = std::variant<CaptionSource, std::vector<VqaSourcePair>, std::vector<VeSourcePair>>;

/// One record of the original corpus.
struct SourceItem {
    std::string id;
    std::filesystem::path image_path;  // absolute once loaded
    Task task = Task::Caption;
    Split split = Split::Train;
    SourcePayload payload;

    Bytes load_image() const { return read_file(image_path); }
};

/// Corpus manifest: JSONL, one item per line, image paths relative to the
/// manifest's directory.
///   {"id": "...", "image": "images/x.png", "task": "cap", "split": "train",
///    "captions": ["..."]}
///   {..., "task": "vqa", "questions": [{"question": "...", "answer": "yes"}]}
///   {..., "task": "ve", "hypotheses": [{"hypothesis": "...", "label": "neutral"}]}
/// Throws ValidationError naming the line and field on any violation.
std::vector<SourceItem> load_corpus(const std::filesystem::path& manifest);

SourceItem source_item_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json to_json(const SourceItem& item, const std::filesystem::path& base_dir);

/// Keeps only the items for `task`.
std::vector<SourceItem> filter_task(std::vector<SourceItem> items, Task task);

}  // namespace forge
