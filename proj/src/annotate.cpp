#include "forge/annotate.hpp"

#include "forge/jsonl.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

namespace forge::annotate {

using nlohmann::json;
using promptkit::TemplateId;
namespace fs = std::filesystem;

namespace {

// Lower-case, trimmed, trailing sentence punctuation removed.
std::string comparable(std::string_view text) {
    auto s = promptkit::trim(text);
    while (!s.empty() && (s.back() == '?' || s.back() == '.' || s.back() == '!')) s.pop_back();
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return promptkit::trim(s);
}

void reject_duplicate(const std::string& paraphrase, const std::string& original) {
    if (comparable(paraphrase) == comparable(original))
        throw ParseError("paraphrase repeats the original: " + paraphrase);
}

}  // namespace

Annotator::Annotator(provider::Provider& provider, const promptkit::TemplateSet& templates, PipelineConfig config)
    : provider_(provider), templates_(templates), config_(std::move(config)) {
    config_.validate();
}

promptkit::Bindings Annotator::bindings(Style style) const {
    auto b = promptkit::task_bindings(config_.task);
    b["style"] = promptkit::display_phrase(style);
    return b;
}

provider::ChatRequest Annotator::prepare(TemplateId id, const promptkit::Bindings& b, const Bytes* stylized,
                                         const CallContext& ctx) const {
    auto request = promptkit::render(templates_.get(id), b, {nullptr, stylized}, ctx.conversation == nullptr);
    request.sampling = config_.sampling();
    request.attempt = ctx.attempt;
    request.tag.unit = ctx.unit;
    return request;
}

std::string Annotator::call(TemplateId id, const promptkit::Bindings& b, const Bytes* stylized, CallContext& ctx,
                            const std::function<void(const std::string&)>& accept) const {
    const auto single = prepare(id, b, stylized, ctx);
    const auto reply = *provider_.chat(ctx.conversation ? ctx.conversation->extend(single) : single).text;
    accept(reply);
    if (ctx.conversation) ctx.conversation->commit(single, reply);
    return reply;
}

std::vector<std::string> Annotator::paraphrase_captions(const Bytes& stylized, const std::vector<std::string>& originals,
                                                        Style style, CallContext& ctx) const {
    if (originals.size() != config_.caption_count)
        throw PreconditionError("expected " + std::to_string(config_.caption_count) + " original captions, got " +
                                std::to_string(originals.size()));
    auto b = bindings(style);
    b["caption_count_word"] = promptkit::number_word(originals.size());
    std::string listed;
    for (std::size_t i = 0; i < originals.size(); ++i)
        listed += (i ? "\n" : "") + std::to_string(i + 1) + ". " + originals[i];
    b["captions"] = listed;

    std::vector<std::string> captions;
    call(TemplateId::CP, b, &stylized, ctx, [&](const std::string& reply) {
        captions = promptkit::parse_caption_list(reply, originals.size());
        for (const auto& c : captions)
            for (const auto& o : originals) reject_duplicate(c, o);
    });
    return captions;
}

promptkit::VerificationVerdict Annotator::verify_answer(const Bytes& stylized, const VqaSourcePair& pair, Style style,
                                                        CallContext& ctx) const {
    if (pair.question.empty()) throw PreconditionError("empty question");
    auto b = bindings(style);
    b["question"] = pair.question;
    b["answer"] = pair.answer == Answer::Yes ? "Yes" : "No";
    promptkit::VerificationVerdict verdict;
    call(TemplateId::AV, b, &stylized, ctx, [&](const std::string& reply) {
        verdict = promptkit::parse_verdict(reply, promptkit::VerdictKind::AnswerVerify);
    });
    return verdict;
}

Answer Annotator::reannotate_answer(const Bytes& stylized, const std::string& question, Style style,
                                    CallContext& ctx) const {
    if (question.empty()) throw PreconditionError("empty question");
    auto b = bindings(style);
    b["question"] = question;
    Answer answer{};
    call(TemplateId::AR, b, &stylized, ctx, [&](const std::string& reply) { answer = promptkit::parse_answer(reply); });
    return answer;
}

std::string Annotator::paraphrase_question(const std::string& question, Style style, CallContext& ctx) const {
    if (question.empty()) throw PreconditionError("empty question");
    auto b = bindings(style);
    b["question"] = question;
    std::string out;
    call(TemplateId::QP, b, nullptr, ctx, [&](const std::string& reply) {
        out = promptkit::parse_prefixed(reply, "Paraphrased Question:");
        if (out.back() != '?') {
            while (!out.empty() && (out.back() == '.' || out.back() == '!')) out.pop_back();
            out = promptkit::trim(out) + "?";
        }
        reject_duplicate(out, question);
    });
    return out;
}

promptkit::VerificationVerdict Annotator::verify_ve_label(const Bytes& stylized, const VeSourcePair& pair,
                                                          Style style, CallContext& ctx) const {
    if (pair.hypothesis.empty()) throw PreconditionError("empty hypothesis");
    auto b = bindings(style);
    b["hypothesis"] = pair.hypothesis;
    b["label"] = std::string(promptkit::ve_label_word(pair.label));
    promptkit::VerificationVerdict verdict;
    call(TemplateId::LV, b, &stylized, ctx, [&](const std::string& reply) {
        verdict = promptkit::parse_verdict(reply, promptkit::VerdictKind::LabelVerify);
    });
    return verdict;
}

VeLabel Annotator::reannotate_ve_label(const Bytes& stylized, const std::string& hypothesis, Style style,
                                       CallContext& ctx) const {
    if (hypothesis.empty()) throw PreconditionError("empty hypothesis");
    auto b = bindings(style);
    b["hypothesis"] = hypothesis;
    VeLabel label{};
    call(TemplateId::LR, b, &stylized, ctx,
         [&](const std::string& reply) { label = promptkit::parse_ve_label(reply); });
    return label;
}

std::string Annotator::paraphrase_hypothesis(const std::string& hypothesis, Style style, CallContext& ctx) const {
    if (hypothesis.empty()) throw PreconditionError("empty hypothesis");
    auto b = bindings(style);
    b["hypothesis"] = hypothesis;
    std::string out;
    call(TemplateId::HP, b, nullptr, ctx, [&](const std::string& reply) {
        out = promptkit::parse_prefixed(reply, "Paraphrased Hypothesis:");
        reject_duplicate(out, hypothesis);
    });
    return out;
}

Annotation Annotator::annotate_caption(const Bytes& stylized, const CaptionSource& originals, Style style,
                                       promptkit::Conversation* session, const std::string& unit) const {
    if (originals.size() != config_.caption_count)
        throw PreconditionError("expected " + std::to_string(config_.caption_count) + " original captions, got " +
                                std::to_string(originals.size()));
    PatienceBudget budget(config_.patience, config_.transport_errors_consume_patience);
    CallContext ctx{session, unit, 0};
    auto captions = budget.retry("CP", [&](std::uint32_t attempt) {
        ctx.attempt = attempt;
        return paraphrase_captions(stylized, originals, style, ctx);
    });
    Annotation out;
    out.log = budget.log();
    if (captions) {
        out.payload = dataset::CaptionPayload{std::move(*captions)};
    } else {
        out.drop_stage = "paraphrase";
    }
    return out;
}

namespace {

std::string pair_unit(const std::string& unit, std::size_t k) { return unit + "/pair" + std::to_string(k); }

}  // namespace

Annotation Annotator::annotate_vqa(const Bytes& stylized, const std::vector<VqaSourcePair>& pairs, Style style,
                                   promptkit::Conversation* session, const std::string& unit) const {
    Annotation out;
    dataset::VqaPayload payload;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& pair = pairs[k];
        PatienceBudget budget(config_.patience, config_.transport_errors_consume_patience);
        CallContext ctx{session, pair_unit(unit, k), 0};
        auto dropped = [&](std::string stage) { out.dropped_pairs.push_back({k, std::move(stage), budget.log()}); };

        const auto verdict = budget.retry("AV", [&](std::uint32_t attempt) {
            ctx.attempt = attempt;
            return verify_answer(stylized, pair, style, ctx);
        });
        if (!verdict) {
            dropped("verify");
            continue;
        }
        auto answer = std::optional<Answer>(pair.answer);
        if (!verdict->value) {
            answer = budget.retry("AR", [&](std::uint32_t attempt) {
                ctx.attempt = attempt;
                return reannotate_answer(stylized, pair.question, style, ctx);
            });
            if (!answer) {
                dropped("reannotate");
                continue;
            }
        }
        const auto question = budget.retry("QP", [&](std::uint32_t attempt) {
            ctx.attempt = attempt;
            return paraphrase_question(pair.question, style, ctx);
        });
        if (!question) {
            dropped("paraphrase");
            continue;
        }
        payload.pairs.push_back({*question, *answer, verdict->value});
    }
    if (payload.pairs.empty()) {
        out.drop_stage = "no_pairs";
    } else {
        out.payload = std::move(payload);
    }
    return out;
}

Annotation Annotator::annotate_ve(const Bytes& stylized, const std::vector<VeSourcePair>& pairs, Style style,
                                  promptkit::Conversation* session, const std::string& unit) const {
    Annotation out;
    dataset::VePayload payload;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& pair = pairs[k];
        PatienceBudget budget(config_.patience, config_.transport_errors_consume_patience);
        CallContext ctx{session, pair_unit(unit, k), 0};
        auto dropped = [&](std::string stage) { out.dropped_pairs.push_back({k, std::move(stage), budget.log()}); };

        const auto verdict = budget.retry("LV", [&](std::uint32_t attempt) {
            ctx.attempt = attempt;
            return verify_ve_label(stylized, pair, style, ctx);
        });
        if (!verdict) {
            dropped("verify");
            continue;
        }
        auto label = std::optional<VeLabel>(pair.label);
        if (!verdict->value) {
            label = budget.retry("LR", [&](std::uint32_t attempt) {
                ctx.attempt = attempt;
                return reannotate_ve_label(stylized, pair.hypothesis, style, ctx);
            });
            if (!label) {
                dropped("reannotate");
                continue;
            }
        }
        const auto hypothesis = budget.retry("HP", [&](std::uint32_t attempt) {
            ctx.attempt = attempt;
            return paraphrase_hypothesis(pair.hypothesis, style, ctx);
        });
        if (!hypothesis) {
            dropped("paraphrase");
            continue;
        }
        payload.pairs.push_back({*hypothesis, *label, verdict->value});
    }
    if (payload.pairs.empty()) {
        out.drop_stage = "no_pairs";
    } else {
        out.payload = std::move(payload);
    }
    return out;
}

Annotation Annotator::annotate(const SourceItem& item, const Bytes& stylized, Style style,
                               promptkit::Conversation* session) const {
    const auto unit = item.id + "/" + std::string(to_string(style));
    if (const auto* caps = std::get_if<CaptionSource>(&item.payload))
        return annotate_caption(stylized, *caps, style, session, unit);
    if (const auto* qs = std::get_if<std::vector<VqaSourcePair>>(&item.payload))
        return annotate_vqa(stylized, *qs, style, session, unit);
    return annotate_ve(stylized, std::get<std::vector<VeSourcePair>>(item.payload), style, session, unit);
}

namespace {

json log_json(const std::vector<AttemptLog>& log) {
    json out = json::array();
    for (const auto& entry : log) out.push_back(to_json(entry));
    return out;
}

json omission(const stylize::StylizedEntry& e, const std::string& stage, const std::vector<AttemptLog>& log) {
    return {
        {"phase", "annotate"},
        {"source_id", e.source_id},
        {"style", to_string(e.style)},
        {"split", to_string(e.split)},
        {"task", to_string(e.task)},
        {"stage", stage},
        {"failures", log.size()},
        {"log", log_json(log)},
    };
}

}  // namespace

RunSummary run(const Annotator& annotator, const promptkit::TemplateSet& templates, Transcript& transcript,
               const std::vector<SourceItem>& items, const RunOptions& options) {
    const auto& cfg = annotator.config();
    const auto& out = options.out_dir;
    fs::create_directories(out);

    std::map<std::string, const SourceItem*> by_id;
    for (const auto& item : items) by_id[item.id] = &item;

    std::set<std::pair<std::string, std::string>> finished;
    if (fs::exists(out / "annotated.jsonl"))
        for (const auto& j : read_jsonl(out / "annotated.jsonl"))
            finished.emplace(j.value("source_id", ""), j.value("style", ""));
    if (fs::exists(out / "omitted.jsonl"))
        for (const auto& j : read_jsonl(out / "omitted.jsonl"))
            if (j.value("phase", "") == "annotate" && !j.contains("pair"))
                finished.emplace(j.value("source_id", ""), j.value("style", ""));

    auto entries = stylize::read_stylized(options.stylized_dir);
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return std::pair(a.source_id, a.style) < std::pair(b.source_id, b.style);
    });

    RunSummary summary;
    std::vector<std::pair<stylize::StylizedEntry, const SourceItem*>> todo;
    for (auto& e : entries) {
        if (e.task != cfg.task) continue;
        if (std::find(cfg.styles.begin(), cfg.styles.end(), e.style) == cfg.styles.end()) continue;
        const auto it = by_id.find(e.source_id);
        if (it == by_id.end())
            throw ValidationError("stylized image " + e.source_id + " has no item in the input corpus");
        ++summary.units;
        if (finished.contains({e.source_id, std::string(to_string(e.style))})) {
            ++summary.skipped;
            continue;
        }
        todo.emplace_back(std::move(e), it->second);
    }

    JsonlAppender annotated_out(out / "annotated.jsonl");
    JsonlAppender omitted_out(out / "omitted.jsonl");
    JsonlAppender transcript_out(out / "transcript.jsonl");
    std::atomic<std::size_t> emitted{0}, dropped_records{0}, dropped_pairs{0};

    const auto processed = run_units(todo.size(), options.work, [&](std::size_t i) {
        const auto& [entry, item] = todo[i];
        const auto key = entry.source_id + "/" + std::string(to_string(entry.style));
        const auto image_path = options.stylized_dir / entry.image_ref;
        const auto stylized = read_file(image_path);

        std::optional<promptkit::Conversation> session;
        if (cfg.context == ContextMode::Persistent)
            session = stylize::replay_conversation(templates, cfg.task, entry.style, item->load_image(), stylized,
                                                   entry.p_ori, entry.p_sty, entry.verification_reply);

        Annotation result;
        try {
            result = annotator.annotate(*item, stylized, entry.style, session ? &*session : nullptr);
        } catch (const PreconditionError& e) {
            result.drop_stage = "input";
            result.log.push_back({"input", 0, "precondition", e.what()});
        }

        long long seq = 0;
        for (const auto& record : transcript.take(key)) {
            auto line = to_json(record);
            line["phase"] = "annotate";
            line["seq"] = seq++;
            transcript_out.append(line);
        }
        for (const auto& drop : result.dropped_pairs) {
            auto line = omission(entry, drop.stage, drop.log);
            line["pair"] = drop.index;
            omitted_out.append(line);
            ++dropped_pairs;
        }
        if (result.payload) {
            dataset::AnnotatedRecord record{entry.source_id, entry.style, entry.split, entry.task,
                                            fs::relative(image_path, out).generic_string(), std::move(*result.payload)};
            annotated_out.append(dataset::to_json(record));
            ++emitted;
            if (options.progress)
                options.progress(key, "annotated units=" + std::to_string(dataset::unit_count(record)));
        } else {
            omitted_out.append(omission(entry, result.drop_stage, result.log));
            ++dropped_records;
            if (options.progress) options.progress(key, "dropped at " + result.drop_stage);
        }
    });

    summary.emitted = emitted.load();
    summary.dropped_records = dropped_records.load();
    summary.dropped_pairs = dropped_pairs.load();
    summary.interrupted = processed < todo.size();
    if (!summary.interrupted) stylize::compact_outputs(out);
    return summary;
}

}  // namespace forge::annotate
