#pragma once

#include "forge/bytes.hpp"
#include "forge/error.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace forge::provider {

enum class Role { User, Assistant };

struct TextPart {
    std::string text;
};

struct ImagePart {
    Bytes data;
    std::string media_type;  // "image/png" or "image/jpeg"
};

using Part = std::variant<TextPart, ImagePart>;

struct Turn {
    Role role = Role::User;
    std::vector<Part> parts;
};

/// Unset values are not sent; the service defaults apply.
struct SamplingParams {
    std::optional<double> temperature;
    std::optional<double> top_p;
    std::string model_id;
};

/// Bookkeeping carried alongside a request. Never sent and never hashed.
struct CallTag {
    std::string step;  // template id such as "IV", or "GEN" for image generation
    std::string unit;  // "<item>/<style>" or "<item>/<style>/<pair>"
};

struct ChatRequest {
    std::string system_prompt;
    std::vector<Turn> turns;
    SamplingParams sampling;
    /// Number of earlier semantic failures for the same step. Hashed, so a
    /// replay session can hold a different reply for each retry.
    std::uint32_t attempt = 0;
    CallTag tag;

    void validate() const;
};

struct ImageGenRequest {
    std::string prompt;
    int width = 1024;
    int height = 1024;
    std::string model_id;
    /// Regeneration ordinal for the same prompt (hashed, not sent).
    std::uint32_t attempt = 0;
    CallTag tag;

    void validate() const;
};

enum class CallKind { Chat, Image };
const char* to_string(CallKind kind);

struct Usage {
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    double cost_usd = 0.0;
};

struct ProviderResponse {
    std::optional<std::string> text;
    std::optional<Bytes> image;
    Usage usage;
    std::chrono::milliseconds latency{0};
};

enum class FailureKind {
    Transport,
    RateLimit,
    MalformedResponse,
    ContentRefusal,
    SafetyRejection,
    Auth,
    CacheMiss,
};

const char* to_string(FailureKind kind);
std::optional<FailureKind> failure_kind_from_string(std::string_view text);

/// Failures that say something about the content and therefore count against
/// annotation patience. Transport and rate-limit failures are retried inside
/// the provider instead.
bool is_semantic(FailureKind kind);

class ProviderError : public Error {
public:
    ProviderError(FailureKind kind, const std::string& message)
        : Error(ErrorCategory::Provider, message), kind_(kind) {}

    FailureKind kind() const noexcept { return kind_; }

private:
    FailureKind kind_;
};

/// Content address of a request: SHA-256 over a canonical serialization of
/// prompts, image bytes, sampling parameters, and the attempt ordinal.
std::string digest(const ChatRequest& request);
std::string digest(const ImageGenRequest& request);

struct CostRecord {
    std::chrono::system_clock::time_point timestamp;
    CallKind kind = CallKind::Chat;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    double cost_usd = 0.0;
};

class CostLedger {
public:
    void append(CostRecord record);
    double total_usd() const;
    std::size_t size() const;
    std::vector<CostRecord> records() const;

private:
    mutable std::mutex mutex_;
    std::vector<CostRecord> records_;
    double total_ = 0.0;
};

/// What a provider reports to observers after every call, successful or not.
struct CallRecord {
    CallKind kind = CallKind::Chat;
    CallTag tag;
    std::uint32_t attempt = 0;
    std::string digest;
    std::optional<std::string> response_text;
    std::optional<std::string> response_image_sha256;
    std::optional<FailureKind> failure;
    std::string error_message;
};

class CallObserver {
public:
    virtual ~CallObserver() = default;
    virtual void on_call(const CallRecord& record) = 0;
};

/// Base for every model backend. Public entry points validate the request,
/// time the call, record cost, and notify observers; subclasses implement the
/// do_* hooks. Implementations must be safe to call from several threads.
class Provider {
public:
    virtual ~Provider() = default;

    ProviderResponse chat(const ChatRequest& request);
    ProviderResponse generate_image(const ImageGenRequest& request);

    void set_ledger(std::shared_ptr<CostLedger> ledger) { ledger_ = std::move(ledger); }
    const std::shared_ptr<CostLedger>& ledger() const { return ledger_; }
    void add_observer(std::shared_ptr<CallObserver> observer);

protected:
    virtual ProviderResponse do_chat(const ChatRequest& request, const std::string& digest) = 0;
    virtual ProviderResponse do_generate_image(const ImageGenRequest& request, const std::string& digest) = 0;

private:
    void notify(const CallRecord& record) const;
    void charge(CallKind kind, const Usage& usage) const;

    std::shared_ptr<CostLedger> ledger_;
    std::vector<std::shared_ptr<CallObserver>> observers_;
};

}  // namespace forge::provider
