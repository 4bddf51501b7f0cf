#include "doctest.h"

#include "toy.hpp"

#include "forge/annotate.hpp"
#include "forge/jsonl.hpp"

#include <deque>

using namespace forge;
using namespace forge::annotate;
using forge::testing::ScriptedProvider;
using forge::testing::toy_png;
using provider::ChatRequest;
using provider::FailureKind;
using provider::ProviderError;

namespace {

const promptkit::TemplateSet& templates() {
    static const auto set = promptkit::TemplateSet::load_dir(forge::testing::template_dir());
    return set;
}

/// Replies keyed by "<step>" or "<step>@<pair>", consumed in order; the last
/// one repeats.
struct Script {
    std::map<std::string, std::deque<std::string>> replies;
    std::vector<ChatRequest> requests;

    std::string next(const ChatRequest& r) {
        requests.push_back(r);
        auto key = r.tag.step;
        const auto slash = r.tag.unit.rfind("/pair");
        if (slash != std::string::npos) {
            const auto specific = key + "@" + r.tag.unit.substr(slash + 5);
            if (replies.count(specific)) key = specific;
        }
        auto& q = replies.at(key);
        const auto out = q.front();
        if (q.size() > 1) q.pop_front();
        if (out == "!refuse") throw ProviderError(FailureKind::ContentRefusal, "refused");
        return out;
    }

    std::shared_ptr<ScriptedProvider> provider() {
        return std::make_shared<ScriptedProvider>([this](const ChatRequest& r) { return next(r); },
                                                  [](const provider::ImageGenRequest&) { return toy_png(0); });
    }

    std::vector<std::string> steps() const {
        std::vector<std::string> out;
        for (const auto& r : requests) out.push_back(r.tag.step + (r.tag.unit.find("/pair") == std::string::npos
                                                                       ? ""
                                                                       : r.tag.unit.substr(r.tag.unit.rfind('/'))));
        return out;
    }
};

PipelineConfig config(Task task, int patience = 10) {
    PipelineConfig c;
    c.task = task;
    c.patience = patience;
    return c;
}

const std::string kFiveCaptions = "1. one\n2. two\n3. three\n4. four\n5. five";
const CaptionSource kOriginals{"A", "B", "C", "D", "E"};

bool has_image(const ChatRequest& r) {
    for (const auto& t : r.turns)
        for (const auto& p : t.parts)
            if (std::holds_alternative<provider::ImagePart>(p)) return true;
    return false;
}

}  // namespace

TEST_SUITE("annotate") {

TEST_CASE("captions: one call with all originals") {
    Script s;
    s.replies["CP"] = {kFiveCaptions};
    auto p = s.provider();
    Annotator a(*p, templates(), config(Task::Caption));
    const auto out = a.annotate_caption(toy_png(1), kOriginals, Style::CartoonDrawing, nullptr, "x/cartoon");
    REQUIRE(out.payload);
    CHECK(std::get<dataset::CaptionPayload>(*out.payload).captions ==
          std::vector<std::string>{"one", "two", "three", "four", "five"});
    REQUIRE(s.requests.size() == 1);
    const auto& text = std::get<provider::TextPart>(s.requests[0].turns.back().parts[0]).text;
    CHECK(text.find("generate five captions") != std::string::npos);
    CHECK(text.find("1. A\n2. B\n3. C\n4. D\n5. E") != std::string::npos);
    CHECK(has_image(s.requests[0]));
}

TEST_CASE("captions: wrong count and echoed originals cost patience") {
    Script s;
    s.replies["CP"] = {"1. one\n2. two", "1. A\n2. two\n3. three\n4. four\n5. five", kFiveCaptions};
    auto p = s.provider();
    Annotator a(*p, templates(), config(Task::Caption));
    const auto out = a.annotate_caption(toy_png(1), kOriginals, Style::CartoonDrawing, nullptr, "x/cartoon");
    REQUIRE(out.payload);
    REQUIRE(out.log.size() == 2);
    CHECK(out.log[0].outcome == "parse_error");
    CHECK(out.log[1].detail.find("repeats the original") != std::string::npos);
    CHECK(s.requests[2].attempt == 2);
}

TEST_CASE("captions: exhausted patience drops the record") {
    Script s;
    s.replies["CP"] = {"A paragraph."};
    auto p = s.provider();
    Annotator a(*p, templates(), config(Task::Caption, 4));
    const auto out = a.annotate_caption(toy_png(1), kOriginals, Style::CartoonDrawing, nullptr, "x/cartoon");
    CHECK_FALSE(out.payload);
    CHECK(out.drop_stage == "paraphrase");
    CHECK(s.requests.size() == 4);
}

TEST_CASE("captions: wrong number of originals is a precondition failure") {
    Script s;
    s.replies["CP"] = {kFiveCaptions};
    auto p = s.provider();
    Annotator a(*p, templates(), config(Task::Caption));
    CHECK_THROWS_AS(a.annotate_caption(toy_png(1), {"A", "B"}, Style::CartoonDrawing, nullptr, "x/cartoon"),
                    PreconditionError);
    CHECK(s.requests.empty());
}

TEST_CASE("vqa: verified pair keeps its answer, failed pair is re-annotated") {
    Script s;
    s.replies["AV@0"] = {"Yes, correct."};
    s.replies["AV@1"] = {"No, wrong."};
    s.replies["AR"] = {"Yes, it is."};
    s.replies["QP@0"] = {"Paraphrased Question: Is a hat worn by the person?"};
    s.replies["QP@1"] = {"Paraphrased Question: Is it raining outside"};
    auto p = s.provider();
    Annotator a(*p, templates(), config(Task::Vqa));
    const std::vector<VqaSourcePair> pairs{{"Is the person wearing a hat?", Answer::Yes},
                                           {"Is it raining?", Answer::No}};
    const auto out = a.annotate_vqa(toy_png(1), pairs, Style::PencilDrawing, nullptr, "q/pencil");
    REQUIRE(out.payload);
    const auto& got = std::get<dataset::VqaPayload>(*out.payload).pairs;
    REQUIRE(got.size() == 2);
    CHECK(got[0] == dataset::VqaPair{"Is a hat worn by the person?", Answer::Yes, true});
    CHECK(got[1] == dataset::VqaPair{"Is it raining outside?", Answer::Yes, false});
    CHECK(s.steps() == std::vector<std::string>{"AV/pair0", "QP/pair0", "AV/pair1", "AR/pair1", "QP/pair1"});
    for (const auto& r : s.requests) CHECK(has_image(r) == (r.tag.step != "QP"));
    const auto& av = std::get<provider::TextPart>(s.requests[0].turns.back().parts[0]).text;
    CHECK(av.find("Question: Is the person wearing a hat?") != std::string::npos);
    CHECK(av.find("Answer: Yes") != std::string::npos);
}

TEST_CASE("vqa: each pair has its own budget and drop stage") {
    Script s;
    s.replies["AV@0"] = {"Unclear."};
    s.replies["AV@1"] = {"No."};
    s.replies["AR@1"] = {"Maybe."};
    s.replies["AV@2"] = {"Yes."};
    s.replies["QP@2"] = {"Paraphrased Question: Is it sunny?"};
    s.replies["AV@3"] = {"Unclear.", "Yes."};
    s.replies["QP@3"] = {"Paraphrased Question: Is the hour late?"};
    auto p = s.provider();
    Annotator a(*p, templates(), config(Task::Vqa, 3));
    const std::vector<VqaSourcePair> pairs{
        {"Is it red?", Answer::Yes}, {"Is it big?", Answer::No}, {"Is it sunny?", Answer::Yes}, {"Is it late?", Answer::No}};
    const auto out = a.annotate_vqa(toy_png(1), pairs, Style::OilPainting, nullptr, "q/oil");
    REQUIRE(out.dropped_pairs.size() == 3);
    CHECK(out.dropped_pairs[0].index == 0);
    CHECK(out.dropped_pairs[0].stage == "verify");
    CHECK(out.dropped_pairs[0].log.size() == 3);
    CHECK(out.dropped_pairs[1].index == 1);
    CHECK(out.dropped_pairs[1].stage == "reannotate");
    CHECK(out.dropped_pairs[1].log.size() == 3);
    CHECK(out.dropped_pairs[1].log[0].step == "AR");
    CHECK(out.dropped_pairs[1].log[0].outcome == "parse_error");
    CHECK(out.dropped_pairs[2].index == 2);
    CHECK(out.dropped_pairs[2].stage == "paraphrase");
    REQUIRE(out.payload);
    const auto& got = std::get<dataset::VqaPayload>(*out.payload).pairs;
    REQUIRE(got.size() == 1);
    CHECK(got[0].question == "Is the hour late?");
    CHECK(got[0].answer == Answer::No);
}

TEST_CASE("vqa: no surviving pair drops the record") {
    Script s;
    s.replies["AV"] = {"!refuse"};
    auto p = s.provider();
    Annotator a(*p, templates(), config(Task::Vqa, 2));
    const auto out = a.annotate_vqa(toy_png(1), {{"Is it red?", Answer::Yes}}, Style::CartoonDrawing, nullptr, "q/c");
    CHECK_FALSE(out.payload);
    CHECK(out.drop_stage == "no_pairs");
    REQUIRE(out.dropped_pairs.size() == 1);
    CHECK(out.dropped_pairs[0].log[0].outcome == "content_refusal");
}

TEST_CASE("ve: label verification, re-annotation, and hypothesis paraphrase") {
    Script s;
    s.replies["LV@0"] = {"No, not entailed."};
    s.replies["LR@0"] = {"Undetermined. It is unclear."};
    s.replies["LV@1"] = {"Yes."};
    s.replies["HP@0"] = {"Paraphrased Hypothesis: The individual is cooking outdoors."};
    s.replies["HP@1"] = {"Paraphrased Hypothesis: the man is asleep.", "Paraphrased Hypothesis: The man sleeps."};
    auto p = s.provider();
    Annotator a(*p, templates(), config(Task::Ve));
    const std::vector<VeSourcePair> pairs{{"The person is cooking outdoors.", VeLabel::Entailment},
                                          {"The man is asleep.", VeLabel::Contradiction}};
    const auto out = a.annotate_ve(toy_png(1), pairs, Style::CartoonDrawing, nullptr, "v/cartoon");
    REQUIRE(out.payload);
    const auto& got = std::get<dataset::VePayload>(*out.payload).pairs;
    REQUIRE(got.size() == 2);
    CHECK(got[0] == dataset::VePair{"The individual is cooking outdoors.", VeLabel::Neutral, false});
    CHECK(got[1] == dataset::VePair{"The man sleeps.", VeLabel::Contradiction, true});
    const auto& lv = std::get<provider::TextPart>(s.requests[0].turns.back().parts[0]).text;
    CHECK(lv.find("Label: True") != std::string::npos);
    for (const auto& r : s.requests) CHECK(has_image(r) == (r.tag.step != "HP"));
}

TEST_CASE("persistent session: calls extend the stylization conversation") {
    Script s;
    s.replies["AV"] = {"Yes."};
    s.replies["QP"] = {"Paraphrased Question: Is a hat on?"};
    auto p = s.provider();
    Annotator a(*p, templates(), config(Task::Vqa));
    auto session = stylize::replay_conversation(templates(), Task::Vqa, Style::CartoonDrawing, toy_png(1), toy_png(2),
                                                "p_ori", "p_sty", "Yes, it matches.");
    CHECK(session.history().size() == 6);
    SourceItem it;
    it.id = "q7";
    it.task = Task::Vqa;
    it.payload = std::vector<VqaSourcePair>{{"Is a hat worn?", Answer::Yes}};
    const auto out = a.annotate(it, toy_png(2), Style::CartoonDrawing, &session);
    REQUIRE(out.payload);
    REQUIRE(s.requests.size() == 2);
    CHECK(s.requests[0].turns.size() == 7);
    CHECK(s.requests[1].turns.size() == 9);
    CHECK(s.requests[0].system_prompt.find("visual question answering") != std::string::npos);
    CHECK(s.requests[0].tag.unit == "q7/cartoon/pair0");
    CHECK(session.history().size() == 10);
}

TEST_CASE("run: pair drops precede the record; resume skips finished units") {
    forge::testing::TempDir work;
    forge::testing::write_toy_corpus(work.path());
    auto items = filter_task(load_corpus(work / "corpus_vqa.jsonl"), Task::Vqa);
    items.resize(3);

    // Stylize with a trivial script first.
    Script st_script;
    st_script.replies["ID"] = {"Create an image."};
    st_script.replies["SI"] = {"Create a stylized image."};
    st_script.replies["IV"] = {"Yes."};
    auto sp = st_script.provider();
    auto cfg = config(Task::Vqa, 2);
    cfg.image_width = cfg.image_height = 64;
    stylize::Stylizer stylizer(*sp, templates(), cfg);
    Transcript t0;
    stylize::run(stylizer, t0, items, {work / "sty", {}, {}});

    Script s;
    s.replies["AV"] = {"Yes."};
    s.replies["AV@1"] = {"Hmm."};
    s.replies["QP"] = {"Paraphrased Question: Rephrased?"};
    auto p = s.provider();
    Annotator a(*p, templates(), cfg);
    Transcript t1;
    p->add_observer(std::shared_ptr<Transcript>(&t1, [](Transcript*) {}));
    const auto first = run(a, templates(), t1, items, {work / "sty", work / "ann", {1, 2, nullptr}, {}});
    CHECK(first.interrupted);
    CHECK(first.emitted == 2);
    CHECK(first.dropped_pairs == 2);

    Transcript t2;
    const auto second = run(a, templates(), t2, items, {work / "sty", work / "ann", {}, {}});
    CHECK(second.skipped == 2);
    CHECK(second.emitted == 1);

    const auto records = read_jsonl(work / "ann" / "annotated.jsonl");
    REQUIRE(records.size() == 3);
    for (const auto& r : records) {
        const auto rec = dataset::record_from_json(r);
        CHECK(std::filesystem::exists(work / "ann" / rec.image_ref));
        CHECK(rec.style == Style::CartoonDrawing);
    }
    const auto omitted = read_jsonl(work / "ann" / "omitted.jsonl");
    for (const auto& o : omitted) {
        CHECK(o["phase"] == "annotate");
        CHECK(o["pair"] == 1);
        CHECK(o["stage"] == "verify");
    }
    CHECK(omitted.size() == 3);
}

}
