#pragma once

#include <array>
#include <string>
#include <string_view>

namespace forge {

enum class Task { Caption, Vqa, Ve };
enum class Split { Train, Valid, Test };

/// RealPhoto denotes the original, human-annotated data and is never a
/// stylization target.
enum class Style { RealPhoto, CartoonDrawing, PencilDrawing, OilPainting };

/// VQA answers are restricted to yes/no questions.
enum class Answer { Yes, No };

enum class VeLabel { Entailment, Neutral, Contradiction };

inline constexpr std::array<Split, 3> kAllSplits{Split::Train, Split::Valid, Split::Test};
inline constexpr std::array<Style, 4> kAllStyles{Style::RealPhoto, Style::CartoonDrawing, Style::PencilDrawing,
                                                 Style::OilPainting};
inline constexpr std::array<Style, 3> kTargetStyles{Style::CartoonDrawing, Style::PencilDrawing, Style::OilPainting};
inline constexpr std::array<VeLabel, 3> kAllVeLabels{VeLabel::Entailment, VeLabel::Neutral, VeLabel::Contradiction};

// Short machine names: "cap"/"vqa"/"ve", "train"/"valid"/"test",
// "real"/"cartoon"/"pencil"/"oil", "yes"/"no", "entailment"/"neutral"/"contradiction".
std::string_view to_string(Task task);
std::string_view to_string(Split split);
std::string_view to_string(Style style);
std::string_view to_string(Answer answer);
std::string_view to_string(VeLabel label);

// Parsers throw ValidationError on unknown names.
Task parse_task(std::string_view text);
Split parse_split(std::string_view text);
Style parse_style(std::string_view text);
Answer parse_answer_name(std::string_view text);
VeLabel parse_ve_label_name(std::string_view text);

}  // namespace forge
