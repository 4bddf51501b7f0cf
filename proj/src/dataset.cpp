#include "forge/dataset.hpp"

#include "forge/bytes.hpp"
#include "forge/error.hpp"
#include "forge/jsonl.hpp"
#include "forge/rng.hpp"

#include <fmt/format.h>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace forge::dataset {

using nlohmann::json;
namespace fs = std::filesystem;

Task payload_task(const Payload& payload) {
    switch (payload.index()) {
        case 0: return Task::Caption;
        case 1: return Task::Vqa;
        default: return Task::Ve;
    }
}

std::size_t unit_count(const AnnotatedRecord& record) {
    return std::visit(
        [](const auto& p) -> std::size_t {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, CaptionPayload>) {
                return p.captions.size();
            } else {
                return p.pairs.size();
            }
        },
        record.payload);
}

json to_json(const AnnotatedRecord& r) {
    json j = {
        {"source_id", r.source_id},
        {"style", to_string(r.style)},
        {"split", to_string(r.split)},
        {"task", to_string(r.task)},
        {"image", r.image_ref},
    };
    if (const auto* c = std::get_if<CaptionPayload>(&r.payload)) {
        j["captions"] = c->captions;
    } else if (const auto* v = std::get_if<VqaPayload>(&r.payload)) {
        json pairs = json::array();
        for (const auto& p : v->pairs)
            pairs.push_back({{"question", p.question},
                             {"answer", to_string(p.answer)},
                             {"reused_original_answer", p.reused_original_answer}});
        j["pairs"] = std::move(pairs);
    } else {
        json pairs = json::array();
        for (const auto& p : std::get<VePayload>(r.payload).pairs)
            pairs.push_back({{"hypothesis", p.hypothesis},
                             {"label", to_string(p.label)},
                             {"reused_original_label", p.reused_original_label}});
        j["pairs"] = std::move(pairs);
    }
    return j;
}

namespace {

struct FieldReader {
    const json& j;
    std::string who;

    const json& at(const json& obj, const std::string& field, const std::string& path) const {
        if (!obj.is_object() || !obj.contains(field)) throw ValidationError(who + ": missing field '" + path + "'");
        return obj[field];
    }
    std::string text(const json& obj, const std::string& field, const std::string& path, bool nonempty = true) const {
        const auto& v = at(obj, field, path);
        if (!v.is_string() || (nonempty && v.get<std::string>().empty()))
            throw ValidationError(who + ": field '" + path + "' must be a non-empty string");
        return v.get<std::string>();
    }
    bool flag(const json& obj, const std::string& field, const std::string& path) const {
        const auto& v = at(obj, field, path);
        if (!v.is_boolean()) throw ValidationError(who + ": field '" + path + "' must be a boolean");
        return v.get<bool>();
    }
    template <typename T, typename Parse>
    T parsed(const json& obj, const std::string& field, const std::string& path, Parse parse) const {
        const auto raw = text(obj, field, path);
        try {
            return parse(raw);
        } catch (const ValidationError&) {
            throw ValidationError(who + ": field '" + path + "' has unknown value '" + raw + "'");
        }
    }
    const json& array(const std::string& field) const {
        const auto& v = at(j, field, field);
        if (!v.is_array() || v.empty()) throw ValidationError(who + ": field '" + field + "' must be a non-empty array");
        return v;
    }
};

}  // namespace

AnnotatedRecord record_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("manifest record is not a JSON object");
    FieldReader f{j, "record"};
    AnnotatedRecord r;
    r.source_id = f.text(j, "source_id", "source_id");
    f.who = "record " + r.source_id;
    r.style = f.parsed<Style>(j, "style", "style", parse_style);
    r.split = f.parsed<Split>(j, "split", "split", parse_split);
    r.task = f.parsed<Task>(j, "task", "task", parse_task);
    r.image_ref = f.text(j, "image", "image");
    switch (r.task) {
        case Task::Caption: {
            CaptionPayload c;
            for (const auto& v : f.array("captions")) {
                if (!v.is_string() || v.get<std::string>().empty())
                    throw ValidationError(f.who + ": field 'captions' must hold non-empty strings");
                c.captions.push_back(v.get<std::string>());
            }
            r.payload = std::move(c);
            break;
        }
        case Task::Vqa: {
            VqaPayload v;
            std::size_t i = 0;
            for (const auto& p : f.array("pairs")) {
                const auto at = "pairs[" + std::to_string(i++) + "].";
                v.pairs.push_back({f.text(p, "question", at + "question"),
                                   f.parsed<Answer>(p, "answer", at + "answer", parse_answer_name),
                                   f.flag(p, "reused_original_answer", at + "reused_original_answer")});
            }
            r.payload = std::move(v);
            break;
        }
        case Task::Ve: {
            VePayload v;
            std::size_t i = 0;
            for (const auto& p : f.array("pairs")) {
                const auto at = "pairs[" + std::to_string(i++) + "].";
                v.pairs.push_back({f.text(p, "hypothesis", at + "hypothesis"),
                                   f.parsed<VeLabel>(p, "label", at + "label", parse_ve_label_name),
                                   f.flag(p, "reused_original_label", at + "reused_original_label")});
            }
            r.payload = std::move(v);
            break;
        }
    }
    return r;
}

AnnotatedRecord record_from_source(const SourceItem& item, std::string image_ref) {
    AnnotatedRecord r{item.id, Style::RealPhoto, item.split, item.task, std::move(image_ref), {}};
    if (const auto* caps = std::get_if<CaptionSource>(&item.payload)) {
        r.payload = CaptionPayload{*caps};
    } else if (const auto* qs = std::get_if<std::vector<VqaSourcePair>>(&item.payload)) {
        VqaPayload v;
        for (const auto& q : *qs) v.pairs.push_back({q.question, q.answer, true});
        r.payload = std::move(v);
    } else {
        VePayload v;
        for (const auto& h : std::get<std::vector<VeSourcePair>>(item.payload))
            v.pairs.push_back({h.hypothesis, h.label, true});
        r.payload = std::move(v);
    }
    return r;
}

void validate(const Manifest& m, const fs::path& task_dir) {
    std::set<std::pair<std::string, Style>> seen;
    for (const auto& r : m.records) {
        const std::string who = "record " + r.source_id + " (" + std::string(to_string(r.style)) + ")";
        if (r.source_id.empty()) throw ValidationError("record with empty field 'source_id'");
        if (!seen.emplace(r.source_id, r.style).second)
            throw ValidationError(who + ": duplicate (source_id, style)");
        if (r.task != m.task || payload_task(r.payload) != r.task)
            throw ValidationError(who + ": field 'task' does not match the manifest task " +
                                  std::string(to_string(m.task)));
        if (unit_count(r) == 0) throw ValidationError(who + ": payload is empty");
        if (r.image_ref.empty()) throw ValidationError(who + ": field 'image' is empty");
        if (!task_dir.empty()) {
            const auto image = task_dir / to_string(r.style) / r.image_ref;
            if (!fs::is_regular_file(image))
                throw ValidationError(who + ": field 'image' does not resolve: " + image.string());
        }
    }
}

namespace {

class DirLock {
public:
    explicit DirLock(const fs::path& dir) {
        fd_ = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
        if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) throw IoError("cannot lock " + dir.string());
    }
    ~DirLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    int fd_ = -1;
};

std::vector<AnnotatedRecord> parse_records(const fs::path& path) {
    std::vector<AnnotatedRecord> out;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        try {
            out.push_back(record_from_json(j));
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + " line " + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

void write_manifest(const Manifest& m, const fs::path& root) {
    const auto task_dir = root / to_string(m.task);
    fs::create_directories(task_dir);
    DirLock lock(task_dir);
    validate(m, task_dir);

    std::map<std::pair<Style, Split>, std::vector<const AnnotatedRecord*>> groups;
    std::set<Style> styles;
    for (const auto& r : m.records) {
        groups[{r.style, r.split}].push_back(&r);
        styles.insert(r.style);
    }
    for (auto style : styles) {
        for (auto split : kAllSplits) {
            auto& group = groups[{style, split}];
            std::sort(group.begin(), group.end(),
                      [](const auto* a, const auto* b) { return a->source_id < b->source_id; });
            std::vector<json> lines;
            for (const auto* r : group) lines.push_back(to_json(*r));
            write_jsonl_atomic(task_dir / to_string(style) / (std::string(to_string(split)) + ".jsonl"), lines);
        }
    }
    write_file_atomic(task_dir / "provenance.json", m.provenance.dump(2) + "\n");
}

std::vector<AnnotatedRecord> read_manifest_file(const fs::path& path) {
    auto records = parse_records(path);
    const auto base = path.parent_path();
    std::set<std::string> ids;
    for (const auto& r : records) {
        const std::string who = path.string() + ": record " + r.source_id;
        if (!ids.insert(r.source_id).second) throw ValidationError(who + ": duplicate (source_id, style)");
        if (!records.empty() && (r.style != records.front().style || r.task != records.front().task))
            throw ValidationError(who + ": fields 'style' and 'task' must agree across one file");
        if (unit_count(r) == 0) throw ValidationError(who + ": payload is empty");
        if (!fs::is_regular_file(base / r.image_ref))
            throw ValidationError(who + ": field 'image' does not resolve: " + (base / r.image_ref).string());
    }
    return records;
}

Manifest read_manifest(const fs::path& root, Task task) {
    const auto task_dir = root / to_string(task);
    if (!fs::is_directory(task_dir)) throw IoError("no dataset for task " + std::string(to_string(task)) + " under " +
                                                   root.string());
    Manifest m;
    m.task = task;
    const auto prov = task_dir / "provenance.json";
    if (fs::exists(prov)) {
        try {
            m.provenance = json::parse(read_text_file(prov));
        } catch (const json::parse_error& e) {
            throw ValidationError(prov.string() + ": " + e.what());
        }
    }
    for (auto style : kAllStyles) {
        for (auto split : kAllSplits) {
            const auto file = task_dir / to_string(style) / (std::string(to_string(split)) + ".jsonl");
            if (!fs::exists(file)) continue;
            for (auto& r : parse_records(file)) {
                if (r.style != style || r.split != split)
                    throw ValidationError("record " + r.source_id + ": fields 'style'/'split' disagree with " +
                                          file.string());
                m.records.push_back(std::move(r));
            }
        }
    }
    validate(m, task_dir);
    return m;
}

std::array<std::size_t, 3> apportion(std::size_t n, const Ratios& ratios) {
    const std::array<double, 3> r{ratios.train, ratios.valid, ratios.test};
    for (double x : r)
        if (!(x >= 0.0) || !std::isfinite(x)) throw PreconditionError("split ratios must be finite and non-negative");
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw PreconditionError("split ratios must sum to 1");

    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double quota = static_cast<double>(n) * r[i];
        // Snap quotas within rounding noise of an integer so 0.1 * 770 is 77.
        double whole = std::floor(quota + 1e-9);
        sizes[i] = static_cast<std::size_t>(whole);
        remainder[i] = std::max(0.0, quota - whole);
        assigned += sizes[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (std::abs(remainder[a] - remainder[b]) > 1e-9) return remainder[a] > remainder[b];
        return a > b;
    });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
    return sizes;
}

std::map<std::string, Split> split_by_ratio(std::vector<std::string> ids, const Ratios& ratios, std::uint64_t seed) {
    if (ids.empty()) throw PreconditionError("cannot split an empty set of items");
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ValidationError("duplicate item id in split input: " + *std::adjacent_find(ids.begin(), ids.end()));
    const auto sizes = apportion(ids.size(), ratios);

    std::uint64_t state = seed;
    for (std::size_t i = ids.size() - 1; i > 0; --i) std::swap(ids[i], ids[uniform_below(state, i + 1)]);

    std::map<std::string, Split> out;
    for (std::size_t i = 0; i < ids.size(); ++i)
        out[ids[i]] = i < sizes[0] ? Split::Train : i < sizes[0] + sizes[1] ? Split::Valid : Split::Test;
    return out;
}

const StatsCell& StatsReport::at(Style style, Split split) const {
    return cells[static_cast<int>(style)][static_cast<int>(split)];
}

StatsCell& StatsReport::at(Style style, Split split) {
    return cells[static_cast<int>(style)][static_cast<int>(split)];
}

std::string unit_name(Task task) {
    switch (task) {
        case Task::Caption: return "captions";
        case Task::Vqa: return "questions";
        case Task::Ve: return "hypotheses";
    }
    return {};
}

std::vector<std::string> label_names(Task task) {
    switch (task) {
        case Task::Caption: return {};
        case Task::Vqa: return {"yes", "no"};
        case Task::Ve: return {"entailment", "neutral", "contradiction"};
    }
    return {};
}

namespace {

StatsReport empty_report(Task task) {
    StatsReport report;
    report.task = task;
    for (auto& row : report.cells)
        for (auto& cell : row)
            for (const auto& name : label_names(task)) cell.labels[name] = 0;
    return report;
}

}  // namespace

StatsReport compute_stats(const Manifest& m) {
    auto report = empty_report(m.task);
    for (const auto& r : m.records) {
        auto& cell = report.at(r.style, r.split);
        ++cell.images;
        cell.units += unit_count(r);
        if (const auto* v = std::get_if<VqaPayload>(&r.payload)) {
            for (const auto& p : v->pairs) ++cell.labels[std::string(to_string(p.answer))];
        } else if (const auto* e = std::get_if<VePayload>(&r.payload)) {
            for (const auto& p : e->pairs) ++cell.labels[std::string(to_string(p.label))];
        }
    }
    return report;
}

StatsFormat parse_stats_format(std::string_view text) {
    if (text == "text" || text == "table") return StatsFormat::Text;
    if (text == "json") return StatsFormat::Json;
    if (text == "csv") return StatsFormat::Csv;
    throw ConfigError("unknown stats format '" + std::string(text) + "' (text, json, csv)");
}

json stats_to_json(const StatsReport& report) {
    json styles = json::object();
    for (auto style : kAllStyles) {
        json splits = json::object();
        for (auto split : kAllSplits) {
            const auto& c = report.at(style, split);
            splits[std::string(to_string(split))] = {{"images", c.images}, {"units", c.units}, {"labels", c.labels}};
        }
        styles[std::string(to_string(style))] = std::move(splits);
    }
    return {{"schema_version", 1},
            {"task", to_string(report.task)},
            {"unit", unit_name(report.task)},
            {"styles", std::move(styles)}};
}

StatsReport stats_from_json(const json& j) {
    try {
        if (j.at("schema_version").get<int>() != 1) throw ValidationError("unsupported stats schema_version");
        auto report = empty_report(parse_task(j.at("task").get<std::string>()));
        for (auto style : kAllStyles) {
            for (auto split : kAllSplits) {
                const auto& c = j.at("styles").at(std::string(to_string(style))).at(std::string(to_string(split)));
                auto& cell = report.at(style, split);
                cell.images = c.at("images").get<std::size_t>();
                cell.units = c.at("units").get<std::size_t>();
                cell.labels = c.at("labels").get<std::map<std::string, std::size_t>>();
            }
        }
        return report;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed stats document: ") + e.what());
    }
}

namespace {

std::string render_text(const StatsReport& report) {
    std::string out = fmt::format("{} ({})\n", to_string(report.task), unit_name(report.task));
    out += fmt::format("{:<8} {:<14} {:>8} {:>8} {:>8} {:>8}\n", "style", "count", "train", "valid", "test", "Total");
    auto row = [&](Style style, const std::string& label, auto get) {
        std::size_t total = 0;
        std::array<std::size_t, 3> v{};
        for (auto split : kAllSplits) {
            v[static_cast<int>(split)] = get(report.at(style, split));
            total += v[static_cast<int>(split)];
        }
        out += fmt::format("{:<8} {:<14} {:>8} {:>8} {:>8} {:>8}\n", to_string(style), label, v[0], v[1], v[2], total);
    };
    for (auto style : kAllStyles) {
        row(style, "images", [](const StatsCell& c) { return c.images; });
        row(style, unit_name(report.task), [](const StatsCell& c) { return c.units; });
        for (const auto& name : label_names(report.task))
            row(style, "  " + name, [&](const StatsCell& c) {
                const auto it = c.labels.find(name);
                return it == c.labels.end() ? std::size_t{0} : it->second;
            });
    }
    return out;
}

std::string render_csv(const StatsReport& report) {
    const auto labels = label_names(report.task);
    std::string out = "style,split,images,units";
    for (const auto& name : labels) out += "," + name;
    out += "\n";
    for (auto style : kAllStyles) {
        for (auto split : kAllSplits) {
            const auto& c = report.at(style, split);
            out += fmt::format("{},{},{},{}", to_string(style), to_string(split), c.images, c.units);
            for (const auto& name : labels) {
                const auto it = c.labels.find(name);
                out += fmt::format(",{}", it == c.labels.end() ? 0 : it->second);
            }
            out += "\n";
        }
    }
    return out;
}

}  // namespace

std::string render_stats(const StatsReport& report, StatsFormat format) {
    switch (format) {
        case StatsFormat::Text: return render_text(report);
        case StatsFormat::Json: return stats_to_json(report).dump(2) + "\n";
        case StatsFormat::Csv: return render_csv(report);
    }
    return {};
}

AssembleSummary assemble(const std::vector<SourceItem>& sources, const AssembleOptions& options) {
    const auto task_dir = options.root / to_string(options.task);
    Manifest m;
    m.task = options.task;
    m.provenance = options.provenance;

    struct Copy {
        fs::path from;
        fs::path to;
    };
    std::vector<Copy> copies;

    if (options.include_real) {
        for (const auto& item : sources) {
            if (item.task != options.task) continue;
            const auto ref = "images/" + item.id + item.image_path.extension().string();
            copies.push_back({item.image_path, task_dir / "real" / ref});
            m.records.push_back(record_from_source(item, ref));
        }
    }
    for (const auto& dir : options.annotated_dirs) {
        const auto path = dir / "annotated.jsonl";
        if (!fs::exists(path)) throw IoError("missing " + path.string() + " (run annotate first)");
        for (auto& r : parse_records(path)) {
            if (r.task != options.task)
                throw ValidationError("record " + r.source_id + " in " + path.string() + ": field 'task' is " +
                                      std::string(to_string(r.task)) + ", expected " +
                                      std::string(to_string(options.task)));
            const fs::path from = dir / r.image_ref;
            if (!fs::is_regular_file(from))
                throw ValidationError("record " + r.source_id + ": field 'image' does not resolve: " + from.string());
            r.image_ref = "images/" + r.source_id + ".png";
            copies.push_back({from, task_dir / to_string(r.style) / r.image_ref});
            m.records.push_back(std::move(r));
        }
    }

    validate(m, {});
    for (const auto& c : copies) write_file_atomic(c.to, read_file(c.from));
    write_manifest(m, options.root);

    AssembleSummary summary;
    summary.records = m.records.size();
    for (const auto& r : m.records) ++summary.per_style[std::string(to_string(r.style))];
    return summary;
}

}  // namespace forge::dataset
