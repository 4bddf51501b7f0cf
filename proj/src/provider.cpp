#include "forge/provider.hpp"

#include "forge/image.hpp"

#include "json.hpp"

#include <array>

namespace forge::provider {

using nlohmann::json;

const char* to_string(CallKind kind) {
    return kind == CallKind::Chat ? "chat" : "image";
}

namespace {

constexpr std::array<std::pair<FailureKind, const char*>, 7> kFailureNames{{
    {FailureKind::Transport, "transport"},
    {FailureKind::RateLimit, "rate_limit"},
    {FailureKind::MalformedResponse, "malformed_response"},
    {FailureKind::ContentRefusal, "content_refusal"},
    {FailureKind::SafetyRejection, "safety_rejection"},
    {FailureKind::Auth, "auth"},
    {FailureKind::CacheMiss, "cache_miss"},
}};

json canonical_parts(const std::vector<Part>& parts) {
    json out = json::array();
    for (const auto& part : parts) {
        if (const auto* text = std::get_if<TextPart>(&part)) {
            out.push_back({{"type", "text"}, {"text", text->text}});
        } else {
            const auto& img = std::get<ImagePart>(part);
            out.push_back({{"type", "image"}, {"media_type", img.media_type}, {"sha256", sha256_hex(img.data)}});
        }
    }
    return out;
}

json optional_number(const std::optional<double>& value) {
    return value ? json(*value) : json(nullptr);
}

}  // namespace

const char* to_string(FailureKind kind) {
    for (const auto& [k, name] : kFailureNames)
        if (k == kind) return name;
    return "unknown";
}

std::optional<FailureKind> failure_kind_from_string(std::string_view text) {
    for (const auto& [k, name] : kFailureNames)
        if (text == name) return k;
    return std::nullopt;
}

bool is_semantic(FailureKind kind) {
    switch (kind) {
        case FailureKind::MalformedResponse:
        case FailureKind::ContentRefusal:
        case FailureKind::SafetyRejection:
            return true;
        default:
            return false;
    }
}

void ChatRequest::validate() const {
    bool has_user = false;
    for (const auto& turn : turns) {
        if (turn.role == Role::User) has_user = true;
        for (const auto& part : turn.parts) {
            const auto* img = std::get_if<ImagePart>(&part);
            if (!img) continue;
            if (img->data.empty()) throw PreconditionError("image attachment is empty");
            const auto info = image::decode_info(img->data);
            if (img->media_type != image::media_type(info.format))
                throw PreconditionError("image attachment media type " + img->media_type +
                                        " does not match its content");
        }
    }
    if (!has_user) throw PreconditionError("chat request has no user turn");
}

void ImageGenRequest::validate() const {
    if (prompt.empty()) throw PreconditionError("image prompt is empty");
    if (width <= 0 || height <= 0) throw PreconditionError("image size must be positive");
}

std::string digest(const ChatRequest& request) {
    json turns = json::array();
    for (const auto& turn : request.turns)
        turns.push_back({{"role", turn.role == Role::User ? "user" : "assistant"},
                         {"parts", canonical_parts(turn.parts)}});
    const json doc = {
        {"kind", "chat"},
        {"system", request.system_prompt},
        {"turns", std::move(turns)},
        {"model", request.sampling.model_id},
        {"temperature", optional_number(request.sampling.temperature)},
        {"top_p", optional_number(request.sampling.top_p)},
        {"attempt", request.attempt},
    };
    return sha256_hex(doc.dump());
}

std::string digest(const ImageGenRequest& request) {
    const json doc = {
        {"kind", "image"},
        {"prompt", request.prompt},
        {"width", request.width},
        {"height", request.height},
        {"model", request.model_id},
        {"attempt", request.attempt},
    };
    return sha256_hex(doc.dump());
}

void CostLedger::append(CostRecord record) {
    std::lock_guard lock(mutex_);
    total_ += record.cost_usd;
    records_.push_back(record);
}

double CostLedger::total_usd() const {
    std::lock_guard lock(mutex_);
    return total_;
}

std::size_t CostLedger::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::vector<CostRecord> CostLedger::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

void Provider::add_observer(std::shared_ptr<CallObserver> observer) {
    observers_.push_back(std::move(observer));
}

void Provider::notify(const CallRecord& record) const {
    for (const auto& observer : observers_) observer->on_call(record);
}

void Provider::charge(CallKind kind, const Usage& usage) const {
    if (!ledger_) return;
    ledger_->append(CostRecord{std::chrono::system_clock::now(), kind, usage.tokens_in, usage.tokens_out,
                               usage.cost_usd});
}

ProviderResponse Provider::chat(const ChatRequest& request) {
    request.validate();
    CallRecord record{CallKind::Chat, request.tag, request.attempt, digest(request), {}, {}, {}, {}};
    const auto start = std::chrono::steady_clock::now();
    try {
        auto response = do_chat(request, record.digest);
        response.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        if (!response.text || response.image)
            throw ProviderError(FailureKind::MalformedResponse, "chat call did not return text");
        charge(CallKind::Chat, response.usage);
        record.response_text = response.text;
        notify(record);
        return response;
    } catch (const ProviderError& e) {
        record.failure = e.kind();
        record.error_message = e.what();
        notify(record);
        throw;
    }
}

ProviderResponse Provider::generate_image(const ImageGenRequest& request) {
    request.validate();
    CallRecord record{CallKind::Image, request.tag, request.attempt, digest(request), {}, {}, {}, {}};
    const auto start = std::chrono::steady_clock::now();
    try {
        auto response = do_generate_image(request, record.digest);
        response.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        if (!response.image || response.text)
            throw ProviderError(FailureKind::MalformedResponse, "image call did not return an image");
        charge(CallKind::Image, response.usage);
        record.response_image_sha256 = sha256_hex(*response.image);
        notify(record);
        return response;
    } catch (const ProviderError& e) {
        record.failure = e.kind();
        record.error_message = e.what();
        notify(record);
        throw;
    }
}

}  // namespace forge::provider
