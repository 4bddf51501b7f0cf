#include "forge/cli.hpp"

#include "forge/annotate.hpp"
#include "forge/corpus.hpp"
#include "forge/dataset.hpp"
#include "forge/jsonl.hpp"
#include "forge/mmd.hpp"
#include "forge/openai_provider.hpp"
#include "forge/promptkit.hpp"
#include "forge/replay.hpp"
#include "forge/stylize.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>

#include <csignal>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <mutex>

#ifndef FORGE_TEMPLATE_DIR
#define FORGE_TEMPLATE_DIR "templates/v1"
#endif

namespace forge::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
void take(const json& obj, const char* key, T& into) {
    if (!obj.contains(key) || obj[key].is_null()) return;
    try {
        into = obj[key].get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

template <typename T>
void take_opt(const json& obj, const char* key, std::optional<T>& into) {
    if (!obj.contains(key)) return;
    if (obj[key].is_null()) {
        into.reset();
        return;
    }
    T v{};
    take(obj, key, v);
    into = v;
}

long parse_long(const char* name, const char* text) {
    char* end = nullptr;
    const long v = std::strtol(text, &end, 10);
    if (!*text || *end) throw ConfigError(std::string(name) + " must be an integer, got '" + text + "'");
    return v;
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

void apply_config_file(RunConfig& c, const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const IoError& e) {
        throw ConfigError(std::string("cannot read config file: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
    if (j.contains("provider")) {
        const auto& p = j["provider"];
        take(p, "base_url", c.http.base_url);
        take(p, "chat_model", c.pipeline.chat_model);
        take(p, "image_model", c.pipeline.image_model);
        take(p, "api_key_env", c.api_key_env);
        if (p.contains("timeout_s")) {
            long s = 0;
            take(p, "timeout_s", s);
            c.http.timeout = std::chrono::seconds(s);
        }
        take(p, "max_retries", c.http.max_transport_retries);
        if (p.contains("pricing")) {
            take(p["pricing"], "input_per_mtok", c.http.pricing.input_per_mtok);
            take(p["pricing"], "output_per_mtok", c.http.pricing.output_per_mtok);
            take(p["pricing"], "per_image", c.http.pricing.per_image);
        }
    }
    if (j.contains("pipeline")) {
        const auto& p = j["pipeline"];
        take(p, "patience", c.pipeline.patience);
        take(p, "caption_count", c.pipeline.caption_count);
        take(p, "image_width", c.pipeline.image_width);
        take(p, "image_height", c.pipeline.image_height);
        take_opt(p, "temperature", c.pipeline.temperature);
        take_opt(p, "top_p", c.pipeline.top_p);
        if (p.contains("context")) {
            std::string mode;
            take(p, "context", mode);
            c.pipeline.context = parse_context_mode(mode);
        }
        take(p, "transport_errors_consume_patience", c.pipeline.transport_errors_consume_patience);
    }
    take(j, "jobs", c.jobs);
    take(j, "seed", c.seed);
    if (j.contains("templates")) {
        std::string t;
        take(j, "templates", t);
        c.templates = fs::path(t).is_absolute() ? fs::path(t) : path.parent_path() / t;
    }
}

void apply_env(RunConfig& c, const std::function<const char*(const char*)>& getenv) {
    if (const char* v = getenv("FORGE_BASE_URL")) c.http.base_url = v;
    if (const char* v = getenv("FORGE_CHAT_MODEL")) c.pipeline.chat_model = v;
    if (const char* v = getenv("FORGE_IMAGE_MODEL")) c.pipeline.image_model = v;
    if (const char* v = getenv("FORGE_API_KEY_ENV")) c.api_key_env = v;
    if (const char* v = getenv("FORGE_PATIENCE")) c.pipeline.patience = static_cast<int>(parse_long("FORGE_PATIENCE", v));
    if (const char* v = getenv("FORGE_JOBS")) {
        const long jobs = parse_long("FORGE_JOBS", v);
        if (jobs < 1) throw ConfigError("FORGE_JOBS must be at least 1");
        c.jobs = static_cast<std::size_t>(jobs);
    }
    if (const char* v = getenv("FORGE_CONTEXT")) c.pipeline.context = parse_context_mode(v);
    if (const char* v = getenv("FORGE_TEMPLATES")) c.templates = v;
}

json snapshot(const RunConfig& c) {
    json styles = json::array();
    for (auto s : c.pipeline.styles) styles.push_back(to_string(s));
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {
        {"task", to_string(c.pipeline.task)},
        {"styles", std::move(styles)},
        {"patience", c.pipeline.patience},
        {"caption_count", c.pipeline.caption_count},
        {"image_size", {c.pipeline.image_width, c.pipeline.image_height}},
        {"chat_model", c.pipeline.chat_model},
        {"image_model", c.pipeline.image_model},
        {"temperature", opt(c.pipeline.temperature)},
        {"top_p", opt(c.pipeline.top_p)},
        {"context", to_string(c.pipeline.context)},
        {"transport_errors_consume_patience", c.pipeline.transport_errors_consume_patience},
        {"seed", c.seed},
        {"provider", c.replay ? "replay" : "http"},
        {"api_key_env", c.api_key_env},
    };
}

int exit_code(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::Config: return 2;
        case ErrorCategory::Io: return 3;
        case ErrorCategory::Provider: return 4;
        case ErrorCategory::Validation: return 5;
        case ErrorCategory::Parse: return 6;
        case ErrorCategory::Precondition: return 7;
    }
    return 1;
}

namespace {

constexpr int kInterrupted = 130;

std::vector<Style> parse_styles(const std::vector<std::string>& names) {
    std::vector<Style> out;
    for (const auto& n : names) {
        if (n == "all") {
            for (auto s : kTargetStyles)
                if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
            continue;
        }
        Style s;
        try {
            s = parse_style(n);
        } catch (const ValidationError&) {
            throw ConfigError("unknown style '" + n + "' (cartoon, pencil, oil, all)");
        }
        if (s == Style::RealPhoto) throw ConfigError("real photos are the source domain, not a stylization target");
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    return out;
}

Task parse_task_flag(const std::string& text) {
    try {
        return parse_task(text);
    } catch (const ValidationError&) {
        throw ConfigError("unknown task '" + text + "' (cap, vqa, ve)");
    }
}

/// Flags shared by stylize and annotate.
struct PipelineFlags {
    std::string task;
    std::vector<std::string> styles;
    int patience = 10;
    std::string input, out, replay, record, config, templates, context;
    std::size_t jobs = 1;
    double temperature = 0, top_p = 0;
    std::size_t stop_after = 0;
    std::string stylized;

    CLI::Option *o_patience, *o_replay, *o_record, *o_config, *o_templates, *o_context, *o_jobs, *o_temperature,
        *o_top_p, *o_stop_after, *o_stylized = nullptr;

    void attach(CLI::App* app) {
        app->add_option("--task", task, "Task: cap, vqa, or ve")->required();
        app->add_option("--style", styles, "Target style (cartoon, pencil, oil, all); repeatable")
            ->default_val(std::vector<std::string>{"cartoon"});
        o_patience = app->add_option("--patience", patience, "Semantic failures tolerated per unit")
                         ->check(CLI::PositiveNumber);
        app->add_option("--input", input, "Source corpus manifest (JSONL)")->required();
        app->add_option("--out", out, "Output directory")->required();
        o_replay = app->add_option("--replay", replay, "Serve every call from this session file (no network)");
        o_record = app->add_option("--record", record, "Record live calls into this session file");
        o_config = app->add_option("--config", config, "Config file (JSON)");
        o_templates = app->add_option("--templates", templates, "Prompt template directory");
        o_context = app->add_option("--context", context, "persistent or fresh conversation per unit");
        o_jobs = app->add_option("--jobs", jobs, "Concurrent units")->check(CLI::PositiveNumber);
        o_temperature = app->add_option("--temperature", temperature, "Sampling temperature (default: provider's)");
        o_top_p = app->add_option("--top-p", top_p, "Nucleus sampling mass (default: provider's)");
        o_stop_after = app->add_option("--stop-after", stop_after, "Stop after N units")->group("");
    }

    RunConfig build(const std::function<const char*(const char*)>& getenv) const {
        RunConfig c;
        c.templates = FORGE_TEMPLATE_DIR;
        if (o_config->count()) apply_config_file(c, config);
        apply_env(c, getenv);
        c.pipeline.task = parse_task_flag(task);
        c.pipeline.styles = parse_styles(styles);
        if (o_patience->count()) c.pipeline.patience = patience;
        if (o_templates->count()) c.templates = templates;
        if (o_context->count()) c.pipeline.context = parse_context_mode(context);
        if (o_jobs->count()) c.jobs = jobs;
        if (o_temperature->count()) c.pipeline.temperature = temperature;
        if (o_top_p->count()) c.pipeline.top_p = top_p;
        if (o_replay->count()) c.replay = replay;
        if (o_record->count()) c.record = record;
        if (c.replay && c.record) throw ConfigError("--replay and --record are mutually exclusive");
        c.http.chat_model = c.pipeline.chat_model;
        c.http.image_model = c.pipeline.image_model;
        c.pipeline.validate();
        return c;
    }

    std::optional<std::size_t> stop() const {
        return o_stop_after->count() ? std::optional(stop_after) : std::nullopt;
    }
};

struct ProviderHandle {
    std::shared_ptr<provider::Provider> provider;
    std::shared_ptr<provider::OpenAiProvider> live;
    std::shared_ptr<provider::RecordingProvider> recorder;
    std::optional<fs::path> record_path;
    std::shared_ptr<provider::CostLedger> ledger = std::make_shared<provider::CostLedger>();

    std::size_t network_calls() const { return live ? live->requests_sent() : 0; }
    void flush() const {
        if (recorder && record_path) recorder->save(*record_path);
    }
};

ProviderHandle open_provider(const RunConfig& c, const std::function<const char*(const char*)>& getenv) {
    ProviderHandle h;
    if (c.replay) {
        h.provider = provider::ReplayProvider::from_file(*c.replay);
    } else {
        auto settings = c.http;
        const char* key = getenv(c.api_key_env.c_str());
        if (!key || !*key)
            throw ConfigError("no API key: set $" + c.api_key_env + " or pass --replay with a session file");
        settings.api_key = key;
        h.live = std::make_shared<provider::OpenAiProvider>(std::move(settings));
        if (c.record) {
            provider::Session seed;
            if (fs::exists(*c.record)) seed = provider::Session::load(*c.record);
            h.recorder = std::make_shared<provider::RecordingProvider>(h.live, std::move(seed));
            h.record_path = c.record;
            h.provider = h.recorder;
        } else {
            h.provider = h.live;
        }
    }
    h.provider->set_ledger(h.ledger);
    return h;
}

class Progress {
public:
    Progress(std::ostream& err, std::size_t total, std::shared_ptr<provider::CostLedger> ledger)
        : err_(err), total_(total), ledger_(std::move(ledger)) {}

    void operator()(const std::string& unit, const std::string& status) {
        std::lock_guard lock(mutex_);
        ++done_;
        err_ << fmt::format("[{}/{}] {} {} | cost ${:.4f}\n", done_, total_, unit, status, ledger_->total_usd());
    }

private:
    std::ostream& err_;
    std::size_t total_;
    std::size_t done_ = 0;
    std::shared_ptr<provider::CostLedger> ledger_;
    std::mutex mutex_;
};

void write_run_json(const fs::path& dir, const std::string& command, json config, json paths, json counts,
                    const ProviderHandle* handle, std::size_t omitted, const std::string& started, bool complete) {
    json j = {
        {"schema_version", 1},
        {"command", command},
        {"status", complete ? "complete" : "interrupted"},
        {"config", std::move(config)},
        {"paths", std::move(paths)},
        {"counts", std::move(counts)},
        {"omitted", omitted},
        {"cost_usd", handle ? handle->ledger->total_usd() : 0.0},
        {"provider_calls", handle ? handle->ledger->size() : 0},
        {"network_calls", handle ? handle->network_calls() : 0},
        {"started_at", started},
        {"finished_at", iso_now()},
    };
    write_file_atomic(dir / "run.json", j.dump(2) + "\n");
}

std::string abs_string(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

int cmd_stylize(const PipelineFlags& f, std::ostream& out, std::ostream& err, const std::atomic<bool>* cancel,
                const std::function<const char*(const char*)>& getenv) {
    const auto started = iso_now();
    const auto config = f.build(getenv);
    const auto templates = promptkit::TemplateSet::load_dir(config.templates);
    const auto items = filter_task(load_corpus(f.input), config.pipeline.task);
    auto handle = open_provider(config, getenv);
    auto transcript = std::make_shared<Transcript>();
    handle.provider->add_observer(transcript);

    stylize::Stylizer stylizer(*handle.provider, templates, config.pipeline);
    Progress progress(err, items.size() * config.pipeline.styles.size(), handle.ledger);
    stylize::RunOptions options{f.out, {config.jobs, f.stop(), cancel}, std::ref(progress)};
    stylize::RunSummary summary;
    try {
        summary = stylize::run(stylizer, *transcript, items, options);
    } catch (...) {
        handle.flush();
        throw;
    }
    handle.flush();

    auto snap = snapshot(config);
    snap["template_version"] = templates.version();
    write_run_json(f.out, "stylize", snap,
                   {{"input", abs_string(f.input)}, {"out", abs_string(f.out)}},
                   {{"units", summary.units},
                    {"skipped", summary.skipped},
                    {"emitted", summary.emitted},
                    {"omitted", summary.omitted}},
                   &handle, summary.omitted, started, !summary.interrupted);
    out << fmt::format("stylize: {} units, {} skipped, {} emitted, {} omitted, {} provider calls, {} network calls, "
                       "cost ${:.4f}{}\n",
                       summary.units, summary.skipped, summary.emitted, summary.omitted, handle.ledger->size(),
                       handle.network_calls(), handle.ledger->total_usd(),
                       summary.interrupted ? " (interrupted)" : "");
    return summary.interrupted && cancel && cancel->load() ? kInterrupted : 0;
}

int cmd_annotate(const PipelineFlags& f, std::ostream& out, std::ostream& err, const std::atomic<bool>* cancel,
                 const std::function<const char*(const char*)>& getenv) {
    const auto started = iso_now();
    const auto config = f.build(getenv);
    const auto templates = promptkit::TemplateSet::load_dir(config.templates);
    const auto items = filter_task(load_corpus(f.input), config.pipeline.task);
    const fs::path stylized_dir = f.stylized.empty() ? fs::path(f.out) : fs::path(f.stylized);
    if (!fs::exists(stylized_dir / "stylized.jsonl"))
        throw IoError("no stylized.jsonl in " + stylized_dir.string() + " (run stylize first)");
    auto handle = open_provider(config, getenv);
    auto transcript = std::make_shared<Transcript>();
    handle.provider->add_observer(transcript);

    annotate::Annotator annotator(*handle.provider, templates, config.pipeline);
    Progress progress(err, stylize::read_stylized(stylized_dir).size(), handle.ledger);
    annotate::RunOptions options{stylized_dir, f.out, {config.jobs, f.stop(), cancel}, std::ref(progress)};
    annotate::RunSummary summary;
    try {
        summary = annotate::run(annotator, templates, *transcript, items, options);
    } catch (...) {
        handle.flush();
        throw;
    }
    handle.flush();

    auto snap = snapshot(config);
    snap["template_version"] = templates.version();
    write_run_json(f.out, "annotate", snap,
                   {{"input", abs_string(f.input)}, {"stylized", abs_string(stylized_dir)}, {"out", abs_string(f.out)}},
                   {{"units", summary.units},
                    {"skipped", summary.skipped},
                    {"emitted", summary.emitted},
                    {"dropped_records", summary.dropped_records},
                    {"dropped_pairs", summary.dropped_pairs}},
                   &handle, summary.dropped_records + summary.dropped_pairs, started, !summary.interrupted);
    out << fmt::format("annotate: {} units, {} skipped, {} emitted, {} records dropped, {} pairs dropped, "
                       "{} provider calls, {} network calls, cost ${:.4f}{}\n",
                       summary.units, summary.skipped, summary.emitted, summary.dropped_records,
                       summary.dropped_pairs, handle.ledger->size(), handle.network_calls(),
                       handle.ledger->total_usd(), summary.interrupted ? " (interrupted)" : "");
    return summary.interrupted && cancel && cancel->load() ? kInterrupted : 0;
}

struct AssembleFlags {
    std::string task, input, out;
    std::vector<std::string> annotated;
    bool no_real = false;
};

int cmd_assemble(const AssembleFlags& f, std::ostream& out) {
    const auto started = iso_now();
    const auto task = parse_task_flag(f.task);
    const auto items = filter_task(load_corpus(f.input), task);

    json runs = json::array();
    std::vector<fs::path> dirs;
    for (const auto& d : f.annotated) {
        dirs.emplace_back(d);
        const auto run_json = fs::path(d) / "run.json";
        if (fs::exists(run_json)) {
            try {
                runs.push_back(json::parse(read_text_file(run_json)).at("config"));
            } catch (const json::exception& e) {
                throw ValidationError(run_json.string() + ": " + e.what());
            }
        }
    }
    dataset::AssembleOptions options;
    options.task = task;
    options.annotated_dirs = dirs;
    options.root = f.out;
    options.include_real = !f.no_real;
    options.provenance = {{"schema_version", 1},
                          {"task", to_string(task)},
                          {"source_items", items.size()},
                          {"include_real", options.include_real},
                          {"annotation_runs", std::move(runs)}};
    const auto summary = dataset::assemble(items, options);

    json per_style = summary.per_style;
    write_run_json(f.out, "assemble", {{"task", to_string(task)}, {"include_real", options.include_real}},
                   {{"input", abs_string(f.input)}, {"out", abs_string(f.out)}},
                   {{"records", summary.records}, {"per_style", per_style}}, nullptr, 0, started, true);
    out << fmt::format("assemble: {} records", summary.records);
    for (const auto& [style, n] : summary.per_style) out << fmt::format(", {} {}", style, n);
    out << "\n";
    return 0;
}

struct StatsFlags {
    std::string dataset, task, format = "text", out;
};

int cmd_stats(const StatsFlags& f, std::ostream& out) {
    const auto manifest = dataset::read_manifest(f.dataset, parse_task_flag(f.task));
    const auto text = dataset::render_stats(dataset::compute_stats(manifest), dataset::parse_stats_format(f.format));
    if (f.out.empty()) {
        out << text;
    } else {
        write_file_atomic(f.out, text);
    }
    return 0;
}

struct MmdFlags {
    std::string visual, linguistic, kernel = "rbf", estimator = "biased", out, format = "text";
    double bandwidth = 0;
    CLI::Option* o_bandwidth = nullptr;
};

int cmd_mmd(const MmdFlags& f, std::ostream& out) {
    const auto started = iso_now();
    const auto kernel =
        mmd::parse_kernel(f.kernel, f.o_bandwidth->count() ? std::optional(f.bandwidth) : std::nullopt);
    const auto estimator = mmd::parse_estimator(f.estimator);
    std::vector<mmd::EmbeddingSet> sets;
    for (const auto& [dir, modality] :
         {std::pair(f.visual, mmd::Modality::Visual), std::pair(f.linguistic, mmd::Modality::Linguistic)}) {
        for (auto& s : mmd::read_vldg_dir(dir)) {
            if (s.modality != modality)
                throw ValidationError("embedding file in " + dir + " declares modality " +
                                      std::string(mmd::to_string(s.modality)));
            sets.push_back(std::move(s));
        }
    }
    const auto gaps = mmd::gap_matrix(sets, kernel, estimator);
    const auto doc = mmd::to_json(gaps, kernel, estimator);
    if (f.format == "json") {
        out << doc.dump(2) << "\n";
    } else if (f.format == "text") {
        out << mmd::render_text(gaps);
    } else {
        throw ConfigError("unknown format '" + f.format + "' (text, json)");
    }
    if (!f.out.empty()) {
        write_file_atomic(f.out, doc.dump(2) + "\n");
        const auto dir = fs::path(f.out).parent_path().empty() ? fs::path(".") : fs::path(f.out).parent_path();
        write_run_json(dir, "mmd", {{"kernel", mmd::describe(kernel)}, {"estimator", mmd::to_string(estimator)}},
                       {{"visual", abs_string(f.visual)}, {"linguistic", abs_string(f.linguistic)},
                        {"out", abs_string(f.out)}},
                       {{"sets", sets.size()}}, nullptr, 0, started, true);
    }
    return 0;
}

std::string validate_path(const fs::path& path) {
    if (fs::is_directory(path)) {
        std::size_t records = 0, tasks = 0;
        for (auto task : {Task::Caption, Task::Vqa, Task::Ve}) {
            if (!fs::is_directory(path / to_string(task))) continue;
            records += dataset::read_manifest(path, task).records.size();
            ++tasks;
        }
        if (tasks == 0) throw ValidationError(path.string() + ": no task directories (cap, vqa, ve)");
        return fmt::format("dataset, {} task(s), {} records", tasks, records);
    }
    if (!fs::exists(path)) throw IoError(path.string() + " does not exist");
    const auto ext = path.extension().string();
    if (ext == ".vldg") {
        const auto set = mmd::read_vldg(path);
        return fmt::format("embeddings {}/{}, {} x {}", to_string(set.domain), mmd::to_string(set.modality),
                           set.size(), set.dim());
    }
    if (ext == ".jsonl") {
        const auto lines = read_jsonl(path);
        if (!lines.empty() && lines.front().contains("source_id"))
            return fmt::format("manifest, {} records", dataset::read_manifest_file(path).size());
        return fmt::format("corpus, {} items", load_corpus(path).size());
    }
    if (ext == ".json") {
        const auto session = provider::Session::load(path);
        return fmt::format("replay session, {} entries", session.size());
    }
    throw ValidationError(path.string() + ": unrecognized file type (expected a dataset directory, .jsonl, .vldg, "
                                          "or a session .json)");
}

struct SplitFlags {
    std::string input, out, ratios = "8:1:1";
    std::uint64_t seed = 0;
};

dataset::Ratios parse_ratios(const std::string& text) {
    std::vector<double> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find_first_of(":,", start);
        if (end == std::string::npos) end = text.size();
        try {
            std::size_t used = 0;
            const auto token = text.substr(start, end - start);
            parts.push_back(std::stod(token, &used));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw ConfigError("bad --ratios '" + text + "' (e.g. 8:1:1 or 0.8,0.1,0.1)");
        }
        start = end + 1;
    }
    if (parts.size() != 3) throw ConfigError("--ratios needs three parts");
    const double sum = parts[0] + parts[1] + parts[2];
    if (!(sum > 0)) throw ConfigError("--ratios must have a positive sum");
    return {parts[0] / sum, parts[1] / sum, parts[2] / sum};
}

int cmd_split(const SplitFlags& f, std::ostream& out) {
    auto items = load_corpus(f.input);
    std::vector<std::string> ids;
    for (const auto& i : items) ids.push_back(i.id);
    const auto assignment = dataset::split_by_ratio(ids, parse_ratios(f.ratios), f.seed);
    std::array<std::size_t, 3> counts{};
    std::vector<json> lines;
    const auto base = fs::absolute(f.out).parent_path();
    for (auto& item : items) {
        item.split = assignment.at(item.id);
        ++counts[static_cast<int>(item.split)];
        lines.push_back(to_json(item, base));
    }
    write_jsonl_atomic(f.out, lines);
    out << fmt::format("split: train {} valid {} test {}\n", counts[0], counts[1], counts[2]);
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const std::atomic<bool>* cancel) {
    CLI::App app{"Stylized vision-language dataset forging: stylize, annotate, assemble, and measure domain gaps."};
    app.name("forge");
    app.require_subcommand(1);
    app.set_version_flag("--version", "forge 1.0.0");
    const auto getenv = [](const char* name) -> const char* { return std::getenv(name); };

    PipelineFlags stylize_flags, annotate_flags;
    auto* stylize_cmd = app.add_subcommand("stylize", "Generate verified stylized images for a source corpus");
    stylize_flags.attach(stylize_cmd);

    auto* annotate_cmd = app.add_subcommand("annotate", "Paraphrase and re-verify labels for stylized images");
    annotate_flags.attach(annotate_cmd);
    annotate_cmd->add_option("--stylized", annotate_flags.stylized, "Stylize output directory (default: --out)");

    AssembleFlags assemble_flags;
    auto* assemble_cmd = app.add_subcommand("assemble", "Build per-style split manifests for one task");
    assemble_cmd->add_option("--task", assemble_flags.task, "Task: cap, vqa, or ve")->required();
    assemble_cmd->add_option("--input", assemble_flags.input, "Source corpus manifest (JSONL)")->required();
    assemble_cmd->add_option("--annotated", assemble_flags.annotated, "Annotate output directory; repeatable");
    assemble_cmd->add_option("--out", assemble_flags.out, "Dataset root")->required();
    assemble_cmd->add_flag("--no-real", assemble_flags.no_real, "Leave out the real-photo domain");

    StatsFlags stats_flags;
    auto* stats_cmd = app.add_subcommand("stats", "Per style and split counts and label histograms");
    stats_cmd->add_option("--dataset", stats_flags.dataset, "Dataset root")->required();
    stats_cmd->add_option("--task", stats_flags.task, "Task: cap, vqa, or ve")->required();
    stats_cmd->add_option("--format", stats_flags.format, "text, json, or csv")->capture_default_str();
    stats_cmd->add_option("--out", stats_flags.out, "Write here instead of stdout");

    MmdFlags mmd_flags;
    auto* mmd_cmd = app.add_subcommand("mmd", "Pairwise domain gaps from embedding files");
    mmd_cmd->add_option("--visual", mmd_flags.visual, "Directory of visual .vldg files")->required();
    mmd_cmd->add_option("--linguistic", mmd_flags.linguistic, "Directory of linguistic .vldg files")->required();
    mmd_cmd->add_option("--kernel", mmd_flags.kernel, "rbf or linear")->capture_default_str();
    mmd_flags.o_bandwidth =
        mmd_cmd->add_option("--bandwidth", mmd_flags.bandwidth, "RBF sigma (default: median heuristic)");
    mmd_cmd->add_option("--estimator", mmd_flags.estimator, "biased or unbiased")->capture_default_str();
    mmd_cmd->add_option("--out", mmd_flags.out, "Write the gap matrix JSON here");
    mmd_cmd->add_option("--format", mmd_flags.format, "stdout format: text or json")->capture_default_str();

    std::vector<std::string> validate_paths;
    auto* validate_cmd = app.add_subcommand("validate", "Check corpora, manifests, datasets, sessions, embeddings");
    validate_cmd->add_option("paths", validate_paths, "Files or dataset directories")->required();

    SplitFlags split_flags;
    auto* split_cmd = app.add_subcommand("split", "Reassign corpus splits by seeded ratio");
    split_cmd->add_option("--input", split_flags.input, "Corpus manifest")->required();
    split_cmd->add_option("--out", split_flags.out, "Rewritten corpus manifest")->required();
    split_cmd->add_option("--ratios", split_flags.ratios, "train:valid:test")->capture_default_str();
    split_cmd->add_option("--seed", split_flags.seed, "Shuffle seed")->capture_default_str();

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << e.what() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "forge: " << e.what() << "\n";
        for (auto* sub : app.get_subcommands()) err << sub->help();
        return 2;
    }

    try {
        if (stylize_cmd->parsed()) return cmd_stylize(stylize_flags, out, err, cancel, getenv);
        if (annotate_cmd->parsed()) return cmd_annotate(annotate_flags, out, err, cancel, getenv);
        if (assemble_cmd->parsed()) return cmd_assemble(assemble_flags, out);
        if (stats_cmd->parsed()) return cmd_stats(stats_flags, out);
        if (mmd_cmd->parsed()) return cmd_mmd(mmd_flags, out);
        if (split_cmd->parsed()) return cmd_split(split_flags, out);
        if (validate_cmd->parsed()) {
            int status = 0;
            for (const auto& p : validate_paths) {
                try {
                    out << "ok " << p << ": " << validate_path(p) << "\n";
                } catch (const Error& e) {
                    err << "invalid " << p << ": " << e.what() << "\n";
                    status = std::max(status, exit_code(e.category()));
                }
            }
            return status;
        }
    } catch (const Error& e) {
        err << "forge: " << to_string(e.category()) << " error: " << e.what() << "\n";
        return exit_code(e.category());
    } catch (const fs::filesystem_error& e) {
        err << "forge: io error: " << e.what() << "\n";
        return exit_code(ErrorCategory::Io);
    } catch (const json::exception& e) {
        err << "forge: validation error: " << e.what() << "\n";
        return exit_code(ErrorCategory::Validation);
    } catch (const std::exception& e) {
        err << "forge: unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_sigint);
    std::signal(SIGTERM, on_sigint);
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr, &g_cancel);
}

}  // namespace forge::cli
