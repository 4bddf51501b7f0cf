#pragma once

#include "forge/corpus.hpp"
#include "forge/pipeline.hpp"
#include "forge/promptkit.hpp"
#include "forge/provider.hpp"

#include "json.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace forge::stylize {

struct StylizedImage {
    std::string source_id;
    Style style = Style::CartoonDrawing;
    Split split = Split::Train;
    Task task = Task::Caption;
    Bytes image;  // PNG
    std::string p_ori;
    std::string p_sty;
    /// Generated images, accepted one included.
    int attempts = 0;
    /// Last entry is always true for an emitted image.
    std::vector<promptkit::VerificationVerdict> verdict_log;
};

/// Patience ran out. `stage` names the step that spent the last point.
struct Omitted {
    std::string source_id;
    Style style = Style::CartoonDrawing;
    Split split = Split::Train;
    Task task = Task::Caption;
    std::string stage;
    int attempts = 0;
    std::vector<AttemptLog> log;
};

using Outcome = std::variant<StylizedImage, Omitted>;

/// Image decomposition, style injection, generation, and verification with
/// verification-gated regeneration. p_ori and p_sty are computed once per
/// (item, style); a failed verification goes back to image generation only.
class Stylizer {
public:
    Stylizer(provider::Provider& provider, const promptkit::TemplateSet& templates, PipelineConfig config);

    const PipelineConfig& config() const { return config_; }

    /// Single model calls. Each throws ParseError or ProviderError on failure
    /// and, when ctx carries a conversation, commits the accepted exchange.
    std::string decompose(const Bytes& original, CallContext& ctx) const;
    std::string inject_style(const std::string& p_ori, Style style, CallContext& ctx) const;
    Bytes generate(const std::string& p_sty, CallContext& ctx) const;
    promptkit::VerificationVerdict verify_image(const Bytes& original, const Bytes& candidate, Style style,
                                                CallContext& ctx) const;

    /// Never throws for semantic failures; they fold into Omitted. Fatal
    /// provider errors (auth, cache miss, exhausted transport retries unless
    /// configured to count) propagate.
    Outcome stylize_item(const SourceItem& item, const Bytes& original, Style style) const;

    /// Opens the conversation an item's session starts with.
    promptkit::Conversation open_conversation() const;

private:
    promptkit::Bindings bindings(Style style) const;
    provider::ChatRequest prepare(promptkit::TemplateId id, const promptkit::Bindings& b,
                                  const promptkit::Images& images, const CallContext& ctx) const;

    provider::Provider& provider_;
    const promptkit::TemplateSet& templates_;
    PipelineConfig config_;
};

/// Rebuilds the persistent session an emitted image ended with (decomposition,
/// style injection, accepted verification) so annotation can continue it.
promptkit::Conversation replay_conversation(const promptkit::TemplateSet& templates, Task task, Style style,
                                            const Bytes& original, const Bytes& stylized, const std::string& p_ori,
                                            const std::string& p_sty, const std::string& verification_reply);

/// Stylized-image index line written to stylized.jsonl.
nlohmann::json to_json(const StylizedImage& image, const std::string& image_ref);
nlohmann::json to_json(const Omitted& omitted);

/// Parsed stylized.jsonl line. The image stays on disk.
struct StylizedEntry {
    std::string source_id;
    Style style = Style::CartoonDrawing;
    Split split = Split::Train;
    Task task = Task::Caption;
    std::string image_ref;  // relative to the stylize output directory
    std::string p_ori;
    std::string p_sty;
    int attempts = 0;
    std::string verification_reply;
};

StylizedEntry stylized_entry_from_json(const nlohmann::json& j);
std::vector<StylizedEntry> read_stylized(const std::filesystem::path& out_dir);

struct RunOptions {
    std::filesystem::path out_dir;
    WorkOptions work;
    std::function<void(const std::string& unit, const std::string& status)> progress;
};

struct RunSummary {
    std::size_t units = 0;     // items x styles
    std::size_t skipped = 0;   // already finished in an earlier run
    std::size_t emitted = 0;
    std::size_t omitted = 0;
    bool interrupted = false;  // stopped before every unit finished
};

/// Output layout under out_dir:
///   {style}/{split}/{id}.png   accepted images
///   stylized.jsonl             one line per emitted image
///   omitted.jsonl              one line per omitted unit with its attempt log
///   transcript.jsonl           every provider call, grouped by unit
/// Units already recorded in stylized.jsonl or omitted.jsonl are skipped, so
/// a rerun resumes. After a complete run the JSONL files are rewritten in
/// canonical order.
RunSummary run(const Stylizer& stylizer, Transcript& transcript, const std::vector<SourceItem>& items,
               const RunOptions& options);

/// Canonical ordering used when compacting stylize/annotate outputs.
void compact_outputs(const std::filesystem::path& out_dir);

}  // namespace forge::stylize
