#include "forge/types.hpp"

#include "forge/error.hpp"

#include <algorithm>
#include <cctype>
#include <utility>

namespace forge {

namespace {

template <typename Enum, std::size_t N>
Enum lookup(const std::array<std::pair<Enum, std::string_view>, N>& table, std::string_view text,
            std::string_view what) {
    std::string lowered(text);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const auto& [value, name] : table)
        if (lowered == name) return value;
    throw ValidationError("unknown " + std::string(what) + " '" + std::string(text) + "'");
}

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table, Enum value) {
    for (const auto& [v, name] : table)
        if (v == value) return name;
    return "?";
}

constexpr std::array<std::pair<Task, std::string_view>, 3> kTasks{{
    {Task::Caption, "cap"}, {Task::Vqa, "vqa"}, {Task::Ve, "ve"}}};
constexpr std::array<std::pair<Split, std::string_view>, 3> kSplits{{
    {Split::Train, "train"}, {Split::Valid, "valid"}, {Split::Test, "test"}}};
constexpr std::array<std::pair<Style, std::string_view>, 4> kStyles{{
    {Style::RealPhoto, "real"}, {Style::CartoonDrawing, "cartoon"}, {Style::PencilDrawing, "pencil"},
    {Style::OilPainting, "oil"}}};
constexpr std::array<std::pair<Answer, std::string_view>, 2> kAnswers{{{Answer::Yes, "yes"}, {Answer::No, "no"}}};
constexpr std::array<std::pair<VeLabel, std::string_view>, 3> kLabels{{
    {VeLabel::Entailment, "entailment"}, {VeLabel::Neutral, "neutral"}, {VeLabel::Contradiction, "contradiction"}}};

}  // namespace

std::string_view to_string(Task task) { return name_of(kTasks, task); }
std::string_view to_string(Split split) { return name_of(kSplits, split); }
std::string_view to_string(Style style) { return name_of(kStyles, style); }
std::string_view to_string(Answer answer) { return name_of(kAnswers, answer); }
std::string_view to_string(VeLabel label) { return name_of(kLabels, label); }

Task parse_task(std::string_view text) {
    if (text == "caption" || text == "captioning") return Task::Caption;
    return lookup(kTasks, text, "task");
}
Split parse_split(std::string_view text) {
    if (text == "validation" || text == "val") return Split::Valid;
    return lookup(kSplits, text, "split");
}
Style parse_style(std::string_view text) { return lookup(kStyles, text, "style"); }
Answer parse_answer_name(std::string_view text) { return lookup(kAnswers, text, "answer"); }
VeLabel parse_ve_label_name(std::string_view text) { return lookup(kLabels, text, "label"); }

}  // namespace forge
