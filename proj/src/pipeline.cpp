#include "forge/pipeline.hpp"

#include <exception>
#include <thread>

namespace forge {

using nlohmann::json;

std::string_view to_string(ContextMode mode) {
    return mode == ContextMode::Persistent ? "persistent" : "fresh";
}

ContextMode parse_context_mode(std::string_view text) {
    if (text == "persistent") return ContextMode::Persistent;
    if (text == "fresh") return ContextMode::Fresh;
    throw ConfigError("context mode must be 'persistent' or 'fresh', got '" + std::string(text) + "'");
}

void PipelineConfig::validate() const {
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (caption_count < 1) throw ConfigError("caption count must be at least 1");
    if (image_width <= 0 || image_height <= 0) throw ConfigError("image size must be positive");
    for (auto s : styles)
        if (s == Style::RealPhoto) throw ConfigError("real photos are the source domain, not a stylization target");
}

json to_json(const AttemptLog& log) {
    return {{"step", log.step}, {"attempt", log.attempt}, {"outcome", log.outcome}, {"detail", log.detail}};
}

bool PatienceBudget::counts(provider::FailureKind kind) const {
    if (provider::is_semantic(kind)) return true;
    return transport_counts_ && (kind == provider::FailureKind::Transport || kind == provider::FailureKind::RateLimit);
}

bool PatienceBudget::charge(std::string step, std::uint32_t attempt, std::string outcome, std::string detail) {
    ++failures_;
    log_.push_back({std::move(step), attempt, std::move(outcome), std::move(detail)});
    return exhausted();
}

std::string unit_key(std::string_view unit) {
    const auto first = unit.find('/');
    if (first == std::string_view::npos) return std::string(unit);
    const auto second = unit.find('/', first + 1);
    return std::string(unit.substr(0, second));
}

void Transcript::on_call(const provider::CallRecord& record) {
    std::lock_guard lock(mutex_);
    pending_[unit_key(record.tag.unit)].push_back(record);
    ++total_;
}

std::vector<provider::CallRecord> Transcript::take(const std::string& key) {
    std::lock_guard lock(mutex_);
    auto node = pending_.extract(key);
    return node ? std::move(node.mapped()) : std::vector<provider::CallRecord>{};
}

json to_json(const provider::CallRecord& record) {
    json j = {
        {"kind", provider::to_string(record.kind)},
        {"step", record.tag.step},
        {"unit", record.tag.unit},
        {"attempt", record.attempt},
        {"digest", record.digest},
    };
    if (record.response_text) j["response_text"] = *record.response_text;
    if (record.response_image_sha256) j["response_image_sha256"] = *record.response_image_sha256;
    if (record.failure) j["failure"] = provider::to_string(*record.failure);
    return j;
}

std::size_t run_units(std::size_t count, const WorkOptions& options, const std::function<void(std::size_t)>& work) {
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const std::size_t limit = options.stop_after ? std::min(*options.stop_after, count) : count;

    auto worker = [&] {
        while (!failed.load() && !(options.cancel && options.cancel->load())) {
            const auto i = next.fetch_add(1);
            if (i >= limit) break;
            try {
                work(i);
                ++done;
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed = true;
            }
        }
    };

    const auto jobs = std::max<std::size_t>(1, std::min(options.jobs, limit));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    if (first_error) std::rethrow_exception(first_error);
    return done.load();
}

}  // namespace forge
