#pragma once

#include "forge/promptkit.hpp"
#include "forge/provider.hpp"
#include "forge/types.hpp"

#include "json.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

namespace forge {

enum class ContextMode {
    Persistent,  // one running chat session per (item, style)
    Fresh,       // every call starts a new conversation
};

std::string_view to_string(ContextMode mode);
ContextMode parse_context_mode(std::string_view text);

struct PipelineConfig {
    Task task = Task::Caption;
    int patience = 10;
    std::vector<Style> styles{Style::CartoonDrawing};
    std::size_t caption_count = 5;
    int image_width = 1024;
    int image_height = 1024;
    std::string chat_model = "gpt-4o-2024-05-13";
    std::string image_model = "dall-e-3";
    std::optional<double> temperature;
    std::optional<double> top_p;
    ContextMode context = ContextMode::Persistent;
    bool transport_errors_consume_patience = false;

    /// Throws ConfigError: patience >= 1, caption_count >= 1, positive image
    /// size, RealPhoto not among the styles.
    void validate() const;
    provider::SamplingParams sampling() const { return {temperature, top_p, chat_model}; }
};

/// Per-call context: the running conversation (null in fresh mode), the unit
/// label used for transcripts, and the retry ordinal.
struct CallContext {
    promptkit::Conversation* conversation = nullptr;
    std::string unit;
    std::uint32_t attempt = 0;
};

struct AttemptLog {
    std::string step;
    std::uint32_t attempt = 0;
    std::string outcome;  // "parse_error", "verdict_false", or a provider failure kind
    std::string detail;
};

nlohmann::json to_json(const AttemptLog& log);

/// One shared failure counter per annotation unit. Every semantic failure
/// (unparsable reply, failed verification, refusal, safety rejection) costs
/// one point; reaching `patience` failures means the unit is omitted.
class PatienceBudget {
public:
    PatienceBudget(int patience, bool transport_counts) : patience_(patience), transport_counts_(transport_counts) {}

    /// Returns true once the budget is exhausted.
    bool charge(std::string step, std::uint32_t attempt, std::string outcome, std::string detail);
    bool exhausted() const { return failures_ >= patience_; }
    int failures() const { return failures_; }
    const std::vector<AttemptLog>& log() const { return log_; }

    /// Calls fn(attempt) until it returns without a countable failure.
    /// Returns nullopt when patience runs out. Non-countable errors propagate.
    template <typename Fn>
    auto retry(const std::string& step, Fn&& fn) -> std::optional<std::invoke_result_t<Fn, std::uint32_t>> {
        for (std::uint32_t attempt = 0;; ++attempt) {
            try {
                return fn(attempt);
            } catch (const ParseError& e) {
                if (charge(step, attempt, "parse_error", e.what())) return std::nullopt;
            } catch (const provider::ProviderError& e) {
                if (!counts(e.kind())) throw;
                if (charge(step, attempt, provider::to_string(e.kind()), e.what())) return std::nullopt;
            }
        }
    }

    bool counts(provider::FailureKind kind) const;

private:
    int patience_;
    bool transport_counts_;
    int failures_ = 0;
    std::vector<AttemptLog> log_;
};

/// Collects provider call records grouped by unit ("<item>/<style>") so a
/// finished unit's calls can be written out together.
class Transcript : public provider::CallObserver {
public:
    void on_call(const provider::CallRecord& record) override;
    std::vector<provider::CallRecord> take(const std::string& unit_key);
    std::size_t total_calls() const { return total_.load(); }

private:
    std::mutex mutex_;
    std::map<std::string, std::vector<provider::CallRecord>> pending_;
    std::atomic<std::size_t> total_{0};
};

nlohmann::json to_json(const provider::CallRecord& record);

/// "<item>/<style>" prefix of a unit label.
std::string unit_key(std::string_view unit);

struct WorkOptions {
    std::size_t jobs = 1;
    /// Stop claiming new units after this many (simulated interruption).
    std::optional<std::size_t> stop_after;
    const std::atomic<bool>* cancel = nullptr;
};

/// Runs work(i) for i in [0, count) on a bounded pool. Returns the number of
/// units processed; the first exception thrown by a unit stops the pool and
/// is rethrown after all workers join.
std::size_t run_units(std::size_t count, const WorkOptions& options, const std::function<void(std::size_t)>& work);

}  // namespace forge
