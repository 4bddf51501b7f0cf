#include "forge/openai_provider.hpp"

#include "forge/image.hpp"

#include "httplib.h"
#include "json.hpp"

#include <algorithm>
#include <thread>

namespace forge::provider {

using nlohmann::json;

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base URL lacks a scheme: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

OpenAiProvider::OpenAiProvider(HttpSettings settings, Sleeper sleeper)
    : settings_(std::move(settings)), sleeper_(std::move(sleeper)) {
    std::tie(origin_, path_prefix_) = split_base_url(settings_.base_url);
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

namespace {

json encode_turn(const Turn& turn) {
    if (turn.role == Role::Assistant) {
        std::string text;
        for (const auto& part : turn.parts)
            if (const auto* t = std::get_if<TextPart>(&part)) text += t->text;
        return {{"role", "assistant"}, {"content", text}};
    }
    json content = json::array();
    for (const auto& part : turn.parts) {
        if (const auto* t = std::get_if<TextPart>(&part)) {
            content.push_back({{"type", "text"}, {"text", t->text}});
        } else {
            const auto& img = std::get<ImagePart>(part);
            content.push_back({{"type", "image_url"},
                               {"image_url", {{"url", "data:" + img.media_type + ";base64," + base64_encode(img.data)}}}});
        }
    }
    return {{"role", "user"}, {"content", std::move(content)}};
}

json parse_body(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        throw ProviderError(FailureKind::MalformedResponse, std::string("response is not JSON: ") + e.what());
    }
}

std::string error_code_of(const std::string& body) {
    try {
        const auto j = json::parse(body);
        if (j.contains("error") && j["error"].is_object()) {
            const auto& err = j["error"];
            if (err.contains("code") && err["code"].is_string()) return err["code"].get<std::string>();
            if (err.contains("type") && err["type"].is_string()) return err["type"].get<std::string>();
        }
    } catch (const json::parse_error&) {
    }
    return {};
}

}  // namespace

OpenAiProvider::HttpReply OpenAiProvider::post_with_retry(const std::string& path, const std::string& body) {
    auto delay = settings_.backoff_initial;
    for (int attempt = 0;; ++attempt) {
        httplib::Client client(origin_);
        client.set_connection_timeout(settings_.timeout);
        client.set_read_timeout(settings_.timeout);
        client.set_write_timeout(settings_.timeout);
        httplib::Headers headers{{"Authorization", "Bearer " + settings_.api_key}};
        ++requests_sent_;
        auto result = client.Post(path_prefix_ + path, headers, body, "application/json");

        FailureKind kind;
        std::string message;
        std::chrono::milliseconds wait = delay;
        if (!result) {
            kind = FailureKind::Transport;
            message = "HTTP transport error: " + httplib::to_string(result.error());
        } else {
            HttpReply reply{result->status, result->body, result->get_header_value("Retry-After")};
            if (reply.status == 200) return reply;
            if (reply.status == 401 || reply.status == 403)
                throw ProviderError(FailureKind::Auth, "authentication rejected (HTTP " + std::to_string(reply.status) + ")");
            if (reply.status == 400 && error_code_of(reply.body) == "content_policy_violation")
                throw ProviderError(FailureKind::SafetyRejection, "request rejected by the safety system");
            if (reply.status == 429) {
                kind = FailureKind::RateLimit;
                message = "rate limited (HTTP 429)";
                if (!reply.retry_after.empty()) {
                    try {
                        wait = std::chrono::milliseconds(static_cast<long long>(std::stod(reply.retry_after) * 1000));
                    } catch (const std::exception&) {
                    }
                }
            } else if (reply.status >= 500) {
                kind = FailureKind::Transport;
                message = "server error (HTTP " + std::to_string(reply.status) + ")";
            } else {
                throw ProviderError(FailureKind::Transport, "request rejected (HTTP " + std::to_string(reply.status) +
                                                                "): " + reply.body.substr(0, 300));
            }
        }
        if (attempt >= settings_.max_transport_retries) throw ProviderError(kind, message);
        sleeper_(std::min(wait, settings_.backoff_max));
        delay = std::min(delay * 2, settings_.backoff_max);
    }
}

Bytes OpenAiProvider::fetch_url(const std::string& url) {
    auto [origin, path] = split_base_url(url);
    httplib::Client client(origin);
    client.set_read_timeout(settings_.timeout);
    ++requests_sent_;
    auto result = client.Get(path.empty() ? "/" : path);
    if (!result || result->status != 200)
        throw ProviderError(FailureKind::Transport, "could not download generated image");
    return Bytes(result->body.begin(), result->body.end());
}

ProviderResponse OpenAiProvider::do_chat(const ChatRequest& request, const std::string&) {
    json messages = json::array();
    if (!request.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
    for (const auto& turn : request.turns) messages.push_back(encode_turn(turn));
    json payload = {
        {"model", request.sampling.model_id.empty() ? settings_.chat_model : request.sampling.model_id},
        {"messages", std::move(messages)},
    };
    if (request.sampling.temperature) payload["temperature"] = *request.sampling.temperature;
    if (request.sampling.top_p) payload["top_p"] = *request.sampling.top_p;

    const auto reply = post_with_retry("/chat/completions", payload.dump());
    const auto doc = parse_body(reply.body);
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
        throw ProviderError(FailureKind::MalformedResponse, "response has no choices");
    const auto& choice = doc["choices"][0];
    if (choice.value("finish_reason", "") == "content_filter")
        throw ProviderError(FailureKind::ContentRefusal, "completion stopped by content filter");
    const auto& message = choice.value("message", json::object());
    if (message.contains("refusal") && message["refusal"].is_string())
        throw ProviderError(FailureKind::ContentRefusal, "model refused: " + message["refusal"].get<std::string>());
    if (!message.contains("content") || !message["content"].is_string())
        throw ProviderError(FailureKind::MalformedResponse, "response message has no text content");

    ProviderResponse response;
    response.text = message["content"].get<std::string>();
    if (doc.contains("usage") && doc["usage"].is_object()) {
        response.usage.tokens_in = doc["usage"].value("prompt_tokens", std::int64_t{0});
        response.usage.tokens_out = doc["usage"].value("completion_tokens", std::int64_t{0});
    }
    response.usage.cost_usd = static_cast<double>(response.usage.tokens_in) * settings_.pricing.input_per_mtok / 1e6 +
                              static_cast<double>(response.usage.tokens_out) * settings_.pricing.output_per_mtok / 1e6;
    return response;
}

ProviderResponse OpenAiProvider::do_generate_image(const ImageGenRequest& request, const std::string&) {
    const json payload = {
        {"model", request.model_id.empty() ? settings_.image_model : request.model_id},
        {"prompt", request.prompt},
        {"n", 1},
        {"size", std::to_string(request.width) + "x" + std::to_string(request.height)},
        {"response_format", "b64_json"},
    };
    const auto reply = post_with_retry("/images/generations", payload.dump());
    const auto doc = parse_body(reply.body);
    if (!doc.contains("data") || !doc["data"].is_array() || doc["data"].empty())
        throw ProviderError(FailureKind::MalformedResponse, "image response has no data");
    const auto& item = doc["data"][0];

    ProviderResponse response;
    try {
        if (item.contains("b64_json") && item["b64_json"].is_string()) {
            response.image = base64_decode(item["b64_json"].get<std::string>());
        } else if (item.contains("url") && item["url"].is_string()) {
            response.image = fetch_url(item["url"].get<std::string>());
        } else {
            throw ProviderError(FailureKind::MalformedResponse, "image response has neither b64_json nor url");
        }
    } catch (const ValidationError& e) {
        throw ProviderError(FailureKind::MalformedResponse, e.what());
    }
    if (!image::sniff(*response.image))
        throw ProviderError(FailureKind::MalformedResponse, "generated image is not PNG or JPEG");
    response.usage.cost_usd = settings_.pricing.per_image;
    return response;
}

}  // namespace forge::provider
