#include "forge/stylize.hpp"

#include "forge/image.hpp"
#include "forge/jsonl.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace forge::stylize {

using nlohmann::json;
using promptkit::TemplateId;

Stylizer::Stylizer(provider::Provider& provider, const promptkit::TemplateSet& templates, PipelineConfig config)
    : provider_(provider), templates_(templates), config_(std::move(config)) {
    config_.validate();
}

promptkit::Bindings Stylizer::bindings(Style style) const {
    auto b = promptkit::task_bindings(config_.task);
    b["style"] = promptkit::display_phrase(style);
    return b;
}

promptkit::Conversation Stylizer::open_conversation() const {
    return promptkit::Conversation(
        promptkit::substitute(templates_.get(TemplateId::ID).system_text, promptkit::task_bindings(config_.task)));
}

provider::ChatRequest Stylizer::prepare(TemplateId id, const promptkit::Bindings& b, const promptkit::Images& images,
                                        const CallContext& ctx) const {
    auto request = promptkit::render(templates_.get(id), b, images, ctx.conversation == nullptr);
    request.sampling = config_.sampling();
    request.attempt = ctx.attempt;
    request.tag.unit = ctx.unit;
    return request;
}

namespace {

std::string call_text(provider::Provider& provider, const provider::ChatRequest& single, const CallContext& ctx) {
    auto response = provider.chat(ctx.conversation ? ctx.conversation->extend(single) : single);
    return *response.text;
}

void require_decodable(const Bytes& data, const char* what) {
    try {
        image::decode_info(data);
    } catch (const ValidationError& e) {
        throw PreconditionError(std::string(what) + " image does not decode: " + e.what());
    }
}

std::string excerpt(const std::string& text) {
    return text.size() > 120 ? text.substr(0, 120) + "..." : text;
}

}  // namespace

std::string Stylizer::decompose(const Bytes& original, CallContext& ctx) const {
    require_decodable(original, "original");
    const auto single = prepare(TemplateId::ID, bindings(Style::RealPhoto), {&original, nullptr}, ctx);
    auto p_ori = promptkit::trim(call_text(provider_, single, ctx));
    if (p_ori.empty()) throw ParseError("empty reconstruction prompt");
    if (ctx.conversation) ctx.conversation->commit(single, p_ori);
    return p_ori;
}

std::string Stylizer::inject_style(const std::string& p_ori, Style style, CallContext& ctx) const {
    if (style == Style::RealPhoto) throw PreconditionError("cannot inject the real-photo style");
    auto b = bindings(style);
    b["original_prompt"] = p_ori;
    const auto single = prepare(TemplateId::SI, b, {}, ctx);
    auto p_sty = promptkit::trim(call_text(provider_, single, ctx));
    if (p_sty.empty()) throw ParseError("empty stylized prompt");
    if (ctx.conversation) ctx.conversation->commit(single, p_sty);
    return p_sty;
}

Bytes Stylizer::generate(const std::string& p_sty, CallContext& ctx) const {
    provider::ImageGenRequest request;
    request.prompt = p_sty;
    request.width = config_.image_width;
    request.height = config_.image_height;
    request.model_id = config_.image_model;
    request.attempt = ctx.attempt;
    request.tag = {"GEN", ctx.unit};
    auto response = provider_.generate_image(request);
    try {
        return image::to_png(*response.image);
    } catch (const ValidationError& e) {
        throw provider::ProviderError(provider::FailureKind::MalformedResponse,
                                      std::string("generated image does not decode: ") + e.what());
    }
}

promptkit::VerificationVerdict Stylizer::verify_image(const Bytes& original, const Bytes& candidate, Style style,
                                                      CallContext& ctx) const {
    require_decodable(original, "original");
    require_decodable(candidate, "generated");
    const auto single = prepare(TemplateId::IV, bindings(style), {&original, &candidate}, ctx);
    const auto reply = call_text(provider_, single, ctx);
    auto verdict = promptkit::parse_verdict(reply, promptkit::VerdictKind::ImageVerify);
    if (verdict.value && ctx.conversation) ctx.conversation->commit(single, reply);
    return verdict;
}

Outcome Stylizer::stylize_item(const SourceItem& item, const Bytes& original, Style style) const {
    PatienceBudget budget(config_.patience, config_.transport_errors_consume_patience);
    auto conversation = open_conversation();
    CallContext ctx{config_.context == ContextMode::Persistent ? &conversation : nullptr,
                    item.id + "/" + std::string(to_string(style)), 0};
    int generated = 0;
    auto omitted = [&](std::string stage) {
        return Omitted{item.id, style, item.split, item.task, std::move(stage), generated, budget.log()};
    };

    try {
        require_decodable(original, "original");
    } catch (const PreconditionError& e) {
        budget.charge("input", 0, "undecodable", e.what());
        return omitted("input");
    }

    const auto p_ori = budget.retry("ID", [&](std::uint32_t attempt) {
        ctx.attempt = attempt;
        return decompose(original, ctx);
    });
    if (!p_ori) return omitted("decompose");

    const auto p_sty = budget.retry("SI", [&](std::uint32_t attempt) {
        ctx.attempt = attempt;
        return inject_style(*p_ori, style, ctx);
    });
    if (!p_sty) return omitted("inject");

    std::vector<promptkit::VerificationVerdict> verdicts;
    for (std::uint32_t round = 0;; ++round) {
        ctx.attempt = round;
        ++generated;
        Bytes candidate;
        try {
            candidate = generate(*p_sty, ctx);
        } catch (const provider::ProviderError& e) {
            if (!budget.counts(e.kind())) throw;
            if (budget.charge("GEN", round, provider::to_string(e.kind()), e.what())) return omitted("generate");
            continue;
        }

        const auto verdict = budget.retry("IV", [&](std::uint32_t attempt) {
            ctx.attempt = attempt;
            return verify_image(original, candidate, style, ctx);
        });
        if (!verdict) return omitted("verify");
        verdicts.push_back(*verdict);
        if (verdict->value)
            return StylizedImage{item.id, style, item.split, item.task, std::move(candidate),
                                 *p_ori, *p_sty, generated, std::move(verdicts)};
        if (budget.charge("IV", round, "verdict_false", excerpt(verdict->raw_response))) return omitted("verify");
    }
}

promptkit::Conversation replay_conversation(const promptkit::TemplateSet& templates, Task task, Style style,
                                            const Bytes& original, const Bytes& stylized, const std::string& p_ori,
                                            const std::string& p_sty, const std::string& verification_reply) {
    auto b = promptkit::task_bindings(task);
    promptkit::Conversation conversation(promptkit::substitute(templates.get(TemplateId::ID).system_text, b));
    b["style"] = promptkit::display_phrase(Style::RealPhoto);
    conversation.commit(promptkit::render(templates.get(TemplateId::ID), b, {&original, nullptr}), p_ori);
    b["style"] = promptkit::display_phrase(style);
    b["original_prompt"] = p_ori;
    conversation.commit(promptkit::render(templates.get(TemplateId::SI), b, {}), p_sty);
    conversation.commit(promptkit::render(templates.get(TemplateId::IV), b, {&original, &stylized}),
                        verification_reply);
    return conversation;
}

json to_json(const StylizedImage& image, const std::string& image_ref) {
    json verdicts = json::array();
    for (const auto& v : image.verdict_log) verdicts.push_back({{"value", v.value}, {"raw", v.raw_response}});
    return {
        {"source_id", image.source_id},
        {"style", to_string(image.style)},
        {"split", to_string(image.split)},
        {"task", to_string(image.task)},
        {"image", image_ref},
        {"p_ori", image.p_ori},
        {"p_sty", image.p_sty},
        {"attempts", image.attempts},
        {"verdicts", std::move(verdicts)},
    };
}

json to_json(const Omitted& omitted) {
    json log = json::array();
    for (const auto& entry : omitted.log) log.push_back(forge::to_json(entry));
    return {
        {"phase", "stylize"},
        {"source_id", omitted.source_id},
        {"style", to_string(omitted.style)},
        {"split", to_string(omitted.split)},
        {"task", to_string(omitted.task)},
        {"stage", omitted.stage},
        {"attempts", omitted.attempts},
        {"failures", omitted.log.size()},
        {"log", std::move(log)},
    };
}

StylizedEntry stylized_entry_from_json(const json& j) {
    try {
        StylizedEntry e;
        e.source_id = j.at("source_id").get<std::string>();
        e.style = parse_style(j.at("style").get<std::string>());
        e.split = parse_split(j.at("split").get<std::string>());
        e.task = parse_task(j.at("task").get<std::string>());
        e.image_ref = j.at("image").get<std::string>();
        e.p_ori = j.at("p_ori").get<std::string>();
        e.p_sty = j.at("p_sty").get<std::string>();
        e.attempts = j.at("attempts").get<int>();
        const auto& verdicts = j.at("verdicts");
        if (verdicts.empty() || !verdicts.back().at("value").get<bool>())
            throw ValidationError("stylized entry " + e.source_id + " lacks a final passing verdict");
        e.verification_reply = verdicts.back().at("raw").get<std::string>();
        return e;
    } catch (const json::exception& ex) {
        throw ValidationError(std::string("malformed stylized entry: ") + ex.what());
    }
}

std::vector<StylizedEntry> read_stylized(const std::filesystem::path& out_dir) {
    const auto path = out_dir / "stylized.jsonl";
    std::vector<StylizedEntry> out;
    if (!std::filesystem::exists(path)) return out;
    for (const auto& j : read_jsonl(path)) out.push_back(stylized_entry_from_json(j));
    return out;
}

namespace {

std::string padded(long long n) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%012lld", n);
    return buf;
}

}  // namespace

void compact_outputs(const std::filesystem::path& out_dir) {
    auto record_key = [](const json& j) {
        return j.value("style", "") + "\t" + j.value("source_id", "");
    };
    compact_jsonl(out_dir / "stylized.jsonl", record_key);
    compact_jsonl(out_dir / "annotated.jsonl", record_key);
    compact_jsonl(out_dir / "omitted.jsonl", [](const json& j) {
        return j.value("phase", "") + "\t" + j.value("style", "") + "\t" + j.value("source_id", "") + "\t" +
               padded(j.value("pair", -1LL) + 1);
    });
    compact_jsonl(out_dir / "transcript.jsonl", [](const json& j) {
        return j.value("phase", "") + "\t" + unit_key(j.value("unit", "")) + "\t" + padded(j.value("seq", 0LL));
    });
}

RunSummary run(const Stylizer& stylizer, Transcript& transcript, const std::vector<SourceItem>& items,
               const RunOptions& options) {
    const auto& out = options.out_dir;
    std::filesystem::create_directories(out);

    std::set<std::pair<std::string, std::string>> finished;
    for (const auto& e : read_stylized(out)) finished.emplace(e.source_id, std::string(to_string(e.style)));
    if (std::filesystem::exists(out / "omitted.jsonl"))
        for (const auto& j : read_jsonl(out / "omitted.jsonl"))
            if (j.value("phase", "") == "stylize") finished.emplace(j.value("source_id", ""), j.value("style", ""));

    std::vector<const SourceItem*> ordered;
    for (const auto& item : items) ordered.push_back(&item);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });

    RunSummary summary;
    std::vector<std::pair<const SourceItem*, Style>> todo;
    for (const auto* item : ordered) {
        for (auto style : stylizer.config().styles) {
            ++summary.units;
            if (finished.contains({item->id, std::string(to_string(style))})) {
                ++summary.skipped;
            } else {
                todo.emplace_back(item, style);
            }
        }
    }

    JsonlAppender stylized_out(out / "stylized.jsonl");
    JsonlAppender omitted_out(out / "omitted.jsonl");
    JsonlAppender transcript_out(out / "transcript.jsonl");
    std::atomic<std::size_t> emitted{0}, omitted{0};

    const auto processed = run_units(todo.size(), options.work, [&](std::size_t i) {
        const auto& [item, style] = todo[i];
        const auto original = item->load_image();
        auto outcome = stylizer.stylize_item(*item, original, style);
        const auto key = item->id + "/" + std::string(to_string(style));

        long long seq = 0;
        for (const auto& record : transcript.take(key)) {
            auto line = forge::to_json(record);
            line["phase"] = "stylize";
            line["seq"] = seq++;
            transcript_out.append(line);
        }
        if (auto* image = std::get_if<StylizedImage>(&outcome)) {
            const auto rel = std::filesystem::path(to_string(style)) / to_string(item->split) / (item->id + ".png");
            write_file_atomic(out / rel, image->image);
            stylized_out.append(to_json(*image, rel.generic_string()));
            ++emitted;
            if (options.progress) options.progress(key, "emitted attempts=" + std::to_string(image->attempts));
        } else {
            const auto& om = std::get<Omitted>(outcome);
            omitted_out.append(to_json(om));
            ++omitted;
            if (options.progress) options.progress(key, "omitted at " + om.stage);
        }
    });

    summary.emitted = emitted.load();
    summary.omitted = omitted.load();
    summary.interrupted = processed < todo.size();
    if (!summary.interrupted) compact_outputs(out);
    return summary;
}

}  // namespace forge::stylize
