#include "forge/promptkit.hpp"

#include "forge/image.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace forge::promptkit {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<TemplateId, std::string_view>, 10> kIdNames{{
    {TemplateId::ID, "ID"}, {TemplateId::SI, "SI"}, {TemplateId::IV, "IV"}, {TemplateId::CP, "CP"},
    {TemplateId::AV, "AV"}, {TemplateId::AR, "AR"}, {TemplateId::QP, "QP"}, {TemplateId::LV, "LV"},
    {TemplateId::LR, "LR"}, {TemplateId::HP, "HP"}}};

std::vector<Slot> required_slots(TemplateId id) {
    switch (id) {
        case TemplateId::ID: return {Slot::Original};
        case TemplateId::IV: return {Slot::Original, Slot::Stylized};
        case TemplateId::CP:
        case TemplateId::AV:
        case TemplateId::AR:
        case TemplateId::LV:
        case TemplateId::LR: return {Slot::Stylized};
        case TemplateId::SI:
        case TemplateId::QP:
        case TemplateId::HP: return {};
    }
    return {};
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string leading_word(std::string_view raw) {
    std::size_t i = 0;
    while (i < raw.size() && !is_alpha(raw[i])) ++i;
    std::string word;
    while (i < raw.size() && is_alpha(raw[i]))
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(raw[i++]))));
    return word;
}

void require_nonempty(std::string_view raw) {
    if (trim(raw).empty()) throw ParseError("empty reply");
}

std::string excerpt(std::string_view raw) {
    std::string out(raw.substr(0, 60));
    if (raw.size() > 60) out += "...";
    return out;
}

}  // namespace

std::string_view to_string(TemplateId id) {
    for (const auto& [v, name] : kIdNames)
        if (v == id) return name;
    return "?";
}

TemplateId parse_template_id(std::string_view text) {
    for (const auto& [v, name] : kIdNames)
        if (text == name) return v;
    throw ValidationError("unknown template id '" + std::string(text) + "'");
}

PromptTemplate TemplateSet::parse(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("template is not valid JSON: ") + e.what());
    }
    PromptTemplate t;
    try {
        t.id = parse_template_id(doc.at("id").get<std::string>());
        t.version = doc.at("version").get<std::string>();
        t.system_text = doc.at("system_text").get<std::string>();
        t.user_template = doc.at("user_template").get<std::string>();
        if (doc.contains("fresh_user_template")) t.fresh_user_template = doc["fresh_user_template"].get<std::string>();
        for (const auto& slot : doc.at("attachments")) {
            const auto name = slot.get<std::string>();
            if (name == "original") {
                t.slots.push_back(Slot::Original);
            } else if (name == "stylized") {
                t.slots.push_back(Slot::Stylized);
            } else {
                throw ValidationError("unknown attachment slot '" + name + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("template document is missing a field: ") + e.what());
    }
    if (t.slots != required_slots(t.id))
        throw ValidationError("template " + std::string(to_string(t.id)) + " declares the wrong attachment slots");
    return t;
}

TemplateSet TemplateSet::load_dir(const std::filesystem::path& dir) {
    TemplateSet set;
    for (auto id : kAllTemplateIds) {
        const auto path = dir / (std::string(to_string(id)) + ".json");
        if (!std::filesystem::exists(path)) throw ConfigError("template file missing: " + path.string());
        auto t = parse(read_text_file(path));
        if (t.id != id) throw ValidationError(path.string() + " declares id " + std::string(to_string(t.id)));
        set.templates_.emplace(id, std::move(t));
    }
    return set;
}

const PromptTemplate& TemplateSet::get(TemplateId id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw ConfigError("template " + std::string(to_string(id)) + " not loaded");
    return it->second;
}

std::string TemplateSet::version() const {
    std::set<std::string> versions;
    for (const auto& [id, t] : templates_) versions.insert(t.version);
    std::string out;
    for (const auto& v : versions) out += (out.empty() ? "" : "+") + v;
    return out;
}

std::string substitute(std::string_view text, const Bindings& bindings) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        const char c = text[i];
        if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
            out.push_back('{');
            i += 2;
        } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
            out.push_back('}');
            i += 2;
        } else if (c == '{') {
            const auto close = text.find('}', i);
            if (close == std::string_view::npos) throw PreconditionError("unterminated placeholder in template");
            const auto name = text.substr(i + 1, close - i - 1);
            auto it = bindings.find(name);
            if (it == bindings.end()) throw PreconditionError("missing binding '" + std::string(name) + "'");
            out += it->second;
            i = close + 1;
        } else {
            out.push_back(c);
            ++i;
        }
    }
    return out;
}

provider::ChatRequest render(const PromptTemplate& tmpl, const Bindings& bindings, const Images& images,
                             bool fresh_context) {
    provider::ChatRequest request;
    request.system_prompt = substitute(tmpl.system_text, bindings);
    const auto& user = fresh_context && tmpl.fresh_user_template ? *tmpl.fresh_user_template : tmpl.user_template;

    provider::Turn turn{provider::Role::User, {}};
    turn.parts.emplace_back(provider::TextPart{substitute(user, bindings)});
    for (auto slot : tmpl.slots) {
        const Bytes* data = slot == Slot::Original ? images.original : images.stylized;
        if (!data || data->empty())
            throw PreconditionError(std::string("template ") + std::string(to_string(tmpl.id)) + " needs the " +
                                    (slot == Slot::Original ? "original" : "stylized") + " image");
        const auto format = image::sniff(*data);
        if (!format) throw PreconditionError("attachment is neither PNG nor JPEG");
        turn.parts.emplace_back(provider::ImagePart{*data, image::media_type(*format)});
    }
    request.turns.push_back(std::move(turn));
    request.tag.step = std::string(to_string(tmpl.id));
    return request;
}

std::string display_phrase(Style style) {
    switch (style) {
        case Style::RealPhoto: return "real photo";
        case Style::CartoonDrawing: return "cartoon drawing style";
        case Style::PencilDrawing: return "pencil drawing style";
        case Style::OilPainting: return "oil painting style";
    }
    return "";
}

Bindings task_bindings(Task task) {
    switch (task) {
        case Task::Caption: return {{"task_name", "image captioning"}, {"task_artifact", "its captions"}};
        case Task::Vqa: return {{"task_name", "visual question answering"}, {"task_artifact", "its questions"}};
        case Task::Ve:
            return {{"task_name", "visual entailment"}, {"task_artifact", "its corresponding hypothesis"}};
    }
    return {};
}

std::string number_word(std::size_t n) {
    static constexpr std::array<std::string_view, 21> kWords{
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
        "twenty"};
    return n < kWords.size() ? std::string(kWords[n]) : std::to_string(n);
}

std::string_view ve_label_word(VeLabel label) {
    switch (label) {
        case VeLabel::Entailment: return "True";
        case VeLabel::Neutral: return "Undetermined";
        case VeLabel::Contradiction: return "False";
    }
    return "";
}

std::string trim(std::string_view text) {
    std::size_t begin = 0, end = text.size();
    while (begin < end && is_space(text[begin])) ++begin;
    while (end > begin && is_space(text[end - 1])) --end;
    return std::string(text.substr(begin, end - begin));
}

VerificationVerdict parse_verdict(std::string_view raw, VerdictKind kind) {
    require_nonempty(raw);
    const auto word = leading_word(raw);
    if (word == "yes") return {kind, true, std::string(raw)};
    if (word == "no") return {kind, false, std::string(raw)};
    throw ParseError("reply does not start with Yes or No: \"" + excerpt(raw) + "\"");
}

Answer parse_answer(std::string_view raw) {
    return parse_verdict(raw, VerdictKind::AnswerVerify).value ? Answer::Yes : Answer::No;
}

VeLabel parse_ve_label(std::string_view raw) {
    require_nonempty(raw);
    const auto word = leading_word(raw);
    if (word == "true") return VeLabel::Entailment;
    if (word == "false") return VeLabel::Contradiction;
    if (word == "undetermined") return VeLabel::Neutral;
    throw ParseError("reply does not start with True, False, or Undetermined: \"" + excerpt(raw) + "\"");
}

std::string parse_prefixed(std::string_view raw, std::string_view prefix) {
    const auto pos = prefix.empty() ? std::string_view::npos : raw.find(prefix);
    auto result = pos == std::string_view::npos ? trim(raw) : trim(raw.substr(pos + prefix.size()));
    if (result.empty()) throw ParseError("reply is empty after '" + std::string(prefix) + "'");
    return result;
}

std::vector<std::string> parse_caption_list(std::string_view raw, std::size_t expected) {
    if (expected == 0) throw PreconditionError("expected caption count must be at least 1");
    std::vector<std::string> captions;
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto end = raw.find('\n', start);
        if (end == std::string_view::npos) end = raw.size();
        const auto line = trim(raw.substr(start, end - start));
        start = end + 1;

        std::size_t i = 0;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
        if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')')) continue;
        const auto ordinal = std::stoul(line.substr(0, i));
        if (ordinal != captions.size() + 1)
            throw ParseError("caption list ordinal " + std::to_string(ordinal) + " out of sequence");
        auto text = trim(std::string_view(line).substr(i + 1));
        if (text.empty()) throw ParseError("caption " + std::to_string(ordinal) + " is empty");
        captions.push_back(std::move(text));
    }
    if (captions.size() != expected)
        throw ParseError("expected " + std::to_string(expected) + " numbered captions, found " +
                         std::to_string(captions.size()));
    return captions;
}

provider::ChatRequest Conversation::extend(const provider::ChatRequest& single) const {
    provider::ChatRequest out = single;
    out.system_prompt = system_prompt_;
    out.turns = history_;
    out.turns.insert(out.turns.end(), single.turns.begin(), single.turns.end());
    return out;
}

void Conversation::commit(const provider::ChatRequest& single, const std::string& reply) {
    history_.insert(history_.end(), single.turns.begin(), single.turns.end());
    history_.push_back(provider::Turn{provider::Role::Assistant, {provider::TextPart{reply}}});
}

void Conversation::commit_user(std::vector<provider::Part> parts, const std::string& reply) {
    history_.push_back(provider::Turn{provider::Role::User, std::move(parts)});
    history_.push_back(provider::Turn{provider::Role::Assistant, {provider::TextPart{reply}}});
}

}  // namespace forge::promptkit
