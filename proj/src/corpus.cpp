#include "forge/corpus.hpp"

#include "forge/error.hpp"
#include "forge/jsonl.hpp"

#include <set>

namespace forge {

using nlohmann::json;

namespace {

std::string require_string(const json& j, const char* field, const std::string& who) {
    if (!j.contains(field) || !j[field].is_string())
        throw ValidationError(who + ": field '" + field + "' must be a string");
    return j[field].get<std::string>();
}

const json& require_array(const json& j, const char* field, const std::string& who) {
    if (!j.contains(field) || !j[field].is_array() || j[field].empty())
        throw ValidationError(who + ": field '" + field + "' must be a non-empty array");
    return j[field];
}

}  // namespace

SourceItem source_item_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ValidationError("corpus line is not a JSON object");
    SourceItem item;
    item.id = require_string(j, "id", "corpus item");
    const std::string who = "corpus item " + item.id;
    if (item.id.empty() || item.id.find('/') != std::string::npos)
        throw ValidationError(who + ": field 'id' must be non-empty and contain no '/'");
    std::filesystem::path image = require_string(j, "image", who);
    item.image_path = image.is_absolute() ? image : base_dir / image;
    try {
        item.task = parse_task(require_string(j, "task", who));
        item.split = parse_split(require_string(j, "split", who));
    } catch (const ValidationError& e) {
        throw ValidationError(who + ": " + e.what());
    }

    switch (item.task) {
        case Task::Caption: {
            CaptionSource captions;
            for (const auto& c : require_array(j, "captions", who)) {
                if (!c.is_string() || c.get<std::string>().empty())
                    throw ValidationError(who + ": field 'captions' must hold non-empty strings");
                captions.push_back(c.get<std::string>());
            }
            item.payload = std::move(captions);
            break;
        }
        case Task::Vqa: {
            std::vector<VqaSourcePair> pairs;
            for (const auto& q : require_array(j, "questions", who)) {
                VqaSourcePair p;
                p.question = require_string(q, "question", who);
                if (p.question.empty()) throw ValidationError(who + ": field 'question' is empty");
                try {
                    p.answer = parse_answer_name(require_string(q, "answer", who));
                } catch (const ValidationError&) {
                    throw ValidationError(who + ": field 'answer' must be yes or no");
                }
                pairs.push_back(std::move(p));
            }
            item.payload = std::move(pairs);
            break;
        }
        case Task::Ve: {
            std::vector<VeSourcePair> pairs;
            for (const auto& h : require_array(j, "hypotheses", who)) {
                VeSourcePair p;
                p.hypothesis = require_string(h, "hypothesis", who);
                if (p.hypothesis.empty()) throw ValidationError(who + ": field 'hypothesis' is empty");
                try {
                    p.label = parse_ve_label_name(require_string(h, "label", who));
                } catch (const ValidationError&) {
                    throw ValidationError(who + ": field 'label' must be entailment, neutral, or contradiction");
                }
                pairs.push_back(std::move(p));
            }
            item.payload = std::move(pairs);
            break;
        }
    }
    return item;
}

json to_json(const SourceItem& item, const std::filesystem::path& base_dir) {
    json j = {
        {"id", item.id},
        {"image", std::filesystem::relative(item.image_path, base_dir).generic_string()},
        {"task", to_string(item.task)},
        {"split", to_string(item.split)},
    };
    if (const auto* caps = std::get_if<CaptionSource>(&item.payload)) {
        j["captions"] = *caps;
    } else if (const auto* qs = std::get_if<std::vector<VqaSourcePair>>(&item.payload)) {
        json arr = json::array();
        for (const auto& q : *qs) arr.push_back({{"question", q.question}, {"answer", to_string(q.answer)}});
        j["questions"] = std::move(arr);
    } else {
        json arr = json::array();
        for (const auto& h : std::get<std::vector<VeSourcePair>>(item.payload))
            arr.push_back({{"hypothesis", h.hypothesis}, {"label", to_string(h.label)}});
        j["hypotheses"] = std::move(arr);
    }
    return j;
}

std::vector<SourceItem> load_corpus(const std::filesystem::path& manifest) {
    const auto base = manifest.parent_path();
    std::vector<SourceItem> items;
    std::set<std::string> seen;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(manifest)) {
        ++line;
        SourceItem item;
        try {
            item = source_item_from_json(j, base);
        } catch (const ValidationError& e) {
            throw ValidationError(manifest.string() + " record " + std::to_string(line) + ": " + e.what());
        }
        if (!seen.insert(item.id).second)
            throw ValidationError(manifest.string() + ": duplicate item id '" + item.id + "'");
        if (!std::filesystem::exists(item.image_path))
            throw ValidationError("corpus item " + item.id + ": image " + item.image_path.string() + " does not exist");
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<SourceItem> filter_task(std::vector<SourceItem> items, Task task) {
    std::erase_if(items, [task](const SourceItem& i) { return i.task != task; });
    return items;
}

}  // namespace forge
