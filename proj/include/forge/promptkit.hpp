#pragma once

#include "forge/provider.hpp"
#include "forge/types.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forge::promptkit {

/// ID image decomposition, SI style injection, IV image verification,
/// CP caption paraphrasing, AV/AR answer verification/re-annotation,
/// QP question paraphrasing, LV/LR label verification/re-annotation,
/// HP hypothesis paraphrasing.
enum class TemplateId { ID, SI, IV, CP, AV, AR, QP, LV, LR, HP };

inline constexpr std::array<TemplateId, 10> kAllTemplateIds{TemplateId::ID, TemplateId::SI, TemplateId::IV,
                                                            TemplateId::CP, TemplateId::AV, TemplateId::AR,
                                                            TemplateId::QP, TemplateId::LV, TemplateId::LR,
                                                            TemplateId::HP};

std::string_view to_string(TemplateId id);
TemplateId parse_template_id(std::string_view text);

enum class Slot { Original, Stylized };

struct PromptTemplate {
    TemplateId id = TemplateId::ID;
    std::string version;
    std::string system_text;
    std::string user_template;
    /// Used instead of user_template when the call runs without conversation
    /// history and the step would otherwise refer to an earlier turn.
    std::optional<std::string> fresh_user_template;
    std::vector<Slot> slots;
};

/// The ten templates, loaded from one JSON document per template:
/// {"id", "version", "system_text", "user_template", "attachments": [...],
///  "fresh_user_template"?}
class TemplateSet {
public:
    static TemplateSet load_dir(const std::filesystem::path& dir);
    static PromptTemplate parse(std::string_view json_text);

    const PromptTemplate& get(TemplateId id) const;
    /// Joined versions, e.g. "1" when all templates agree.
    std::string version() const;

private:
    std::map<TemplateId, PromptTemplate> templates_;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

struct Images {
    const Bytes* original = nullptr;
    const Bytes* stylized = nullptr;
};

/// Replaces {name} placeholders. "{{" and "}}" escape literal braces.
/// Throws PreconditionError naming the first unbound placeholder.
std::string substitute(std::string_view text, const Bindings& bindings);

/// Builds a one-turn request: system text, then a user turn holding the
/// rendered text followed by the declared image slots in order.
provider::ChatRequest render(const PromptTemplate& tmpl, const Bindings& bindings, const Images& images,
                             bool fresh_context = false);

/// "cartoon drawing style", "pencil drawing style", "oil painting style".
std::string display_phrase(Style style);

/// {task_name} and {task_artifact} used by the shared system prompts.
Bindings task_bindings(Task task);

/// "five" for 5; digits above twenty.
std::string number_word(std::size_t n);

/// "True", "Undetermined", "False".
std::string_view ve_label_word(VeLabel label);

enum class VerdictKind { ImageVerify, AnswerVerify, LabelVerify };

struct VerificationVerdict {
    VerdictKind kind = VerdictKind::ImageVerify;
    bool value = false;
    std::string raw_response;
};

/// First alphabetic token of the reply, case-folded: "yes" or "no".
VerificationVerdict parse_verdict(std::string_view raw, VerdictKind kind = VerdictKind::ImageVerify);
Answer parse_answer(std::string_view raw);
VeLabel parse_ve_label(std::string_view raw);

/// Text after the first occurrence of `prefix`, trimmed. Falls back to the
/// whole reply when the prefix is absent. Empty results are a ParseError.
std::string parse_prefixed(std::string_view raw, std::string_view prefix);

/// Exactly `expected` lines numbered "1.", "2.", ... in order.
std::vector<std::string> parse_caption_list(std::string_view raw, std::size_t expected);

std::string trim(std::string_view text);

/// A running chat session. Accepted exchanges are appended so later requests
/// see the earlier turns.
class Conversation {
public:
    explicit Conversation(std::string system_prompt) : system_prompt_(std::move(system_prompt)) {}

    /// `single` is a freshly rendered one-turn request; the result carries the
    /// history in front of it.
    provider::ChatRequest extend(const provider::ChatRequest& single) const;
    void commit(const provider::ChatRequest& single, const std::string& reply);
    void commit_user(std::vector<provider::Part> parts, const std::string& reply);

    const std::string& system_prompt() const { return system_prompt_; }
    const std::vector<provider::Turn>& history() const { return history_; }

private:
    std::string system_prompt_;
    std::vector<provider::Turn> history_;
};

}  // namespace forge::promptkit
