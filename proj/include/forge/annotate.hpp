#pragma once

#include "forge/corpus.hpp"
#include "forge/dataset.hpp"
#include "forge/pipeline.hpp"
#include "forge/promptkit.hpp"
#include "forge/provider.hpp"
#include "forge/stylize.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace forge::annotate {

/// A pair that ran out of patience.
struct PairDrop {
    std::size_t index = 0;
    std::string stage;  // "verify", "reannotate", or "paraphrase"
    std::vector<AttemptLog> log;
};

struct Annotation {
    /// Empty when the record is dropped.
    std::optional<dataset::Payload> payload;
    std::vector<PairDrop> dropped_pairs;
    /// Why the record was dropped: "paraphrase" (captions) or "no_pairs".
    std::string drop_stage;
    std::vector<AttemptLog> log;
};

/// Caption paraphrasing, answer verification/re-annotation with question
/// paraphrasing, and label verification/re-annotation with hypothesis
/// paraphrasing, all against the stylized image.
class Annotator {
public:
    Annotator(provider::Provider& provider, const promptkit::TemplateSet& templates, PipelineConfig config);

    const PipelineConfig& config() const { return config_; }

    // Single model calls; each throws ParseError/ProviderError on failure and
    // commits the accepted exchange when ctx carries a conversation.

    /// All originals in one call. A paraphrase that repeats an original is a
    /// ParseError. Throws PreconditionError unless originals.size() equals
    /// the configured caption count.
    std::vector<std::string> paraphrase_captions(const Bytes& stylized, const std::vector<std::string>& originals,
                                                 Style style, CallContext& ctx) const;
    promptkit::VerificationVerdict verify_answer(const Bytes& stylized, const VqaSourcePair& pair, Style style,
                                                 CallContext& ctx) const;
    Answer reannotate_answer(const Bytes& stylized, const std::string& question, Style style, CallContext& ctx) const;
    /// Appends "?" when the reply lacks one.
    std::string paraphrase_question(const std::string& question, Style style, CallContext& ctx) const;
    promptkit::VerificationVerdict verify_ve_label(const Bytes& stylized, const VeSourcePair& pair, Style style,
                                                   CallContext& ctx) const;
    VeLabel reannotate_ve_label(const Bytes& stylized, const std::string& hypothesis, Style style,
                                CallContext& ctx) const;
    std::string paraphrase_hypothesis(const std::string& hypothesis, Style style, CallContext& ctx) const;

    // Composites. Semantic failures fold into the result; patience is per
    // pair for VQA/VE and per record for captions.

    Annotation annotate_caption(const Bytes& stylized, const CaptionSource& originals, Style style,
                                promptkit::Conversation* session, const std::string& unit) const;
    Annotation annotate_vqa(const Bytes& stylized, const std::vector<VqaSourcePair>& pairs, Style style,
                            promptkit::Conversation* session, const std::string& unit) const;
    Annotation annotate_ve(const Bytes& stylized, const std::vector<VeSourcePair>& pairs, Style style,
                           promptkit::Conversation* session, const std::string& unit) const;

    /// Dispatches on the item's task. `unit` is "<id>/<style>".
    Annotation annotate(const SourceItem& item, const Bytes& stylized, Style style,
                        promptkit::Conversation* session) const;

private:
    promptkit::Bindings bindings(Style style) const;
    provider::ChatRequest prepare(promptkit::TemplateId id, const promptkit::Bindings& b, const Bytes* stylized,
                                  const CallContext& ctx) const;
    std::string call(promptkit::TemplateId id, const promptkit::Bindings& b, const Bytes* stylized,
                     CallContext& ctx, const std::function<void(const std::string&)>& accept) const;

    provider::Provider& provider_;
    const promptkit::TemplateSet& templates_;
    PipelineConfig config_;
};

struct RunOptions {
    std::filesystem::path stylized_dir;
    std::filesystem::path out_dir;
    WorkOptions work;
    std::function<void(const std::string& unit, const std::string& status)> progress;
};

struct RunSummary {
    std::size_t units = 0;
    std::size_t skipped = 0;
    std::size_t emitted = 0;
    std::size_t dropped_records = 0;
    std::size_t dropped_pairs = 0;
    bool interrupted = false;
};

/// Annotates every emitted stylized image of the configured styles and task.
/// Writes into out_dir:
///   annotated.jsonl   one AnnotatedRecord per line, image relative to out_dir
///   omitted.jsonl     dropped pairs and records, "phase": "annotate"
///   transcript.jsonl  provider calls, "phase": "annotate"
/// Resumes like the stylize run: finished (id, style) units are skipped.
RunSummary run(const Annotator& annotator, const promptkit::TemplateSet& templates, Transcript& transcript,
               const std::vector<SourceItem>& items, const RunOptions& options);

}  // namespace forge::annotate
