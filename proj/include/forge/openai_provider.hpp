#pragma once

#include "forge/provider.hpp"

#include <atomic>
#include <chrono>
#include <functional>
#include <string>

namespace forge::provider {

struct Pricing {
    double input_per_mtok = 5.0;    // USD per million prompt tokens
    double output_per_mtok = 15.0;  // USD per million completion tokens
    double per_image = 0.04;        // USD per generated image
};

struct HttpSettings {
    std::string base_url = "https://api.openai.com/v1";
    std::string chat_model = "gpt-4o-2024-05-13";
    std::string image_model = "dall-e-3";
    std::string api_key;
    std::chrono::seconds timeout{120};
    int max_transport_retries = 4;
    std::chrono::milliseconds backoff_initial{1000};
    std::chrono::milliseconds backoff_max{30000};
    Pricing pricing;
};

/// Client for services speaking the chat-completions / images-generations
/// JSON dialect. Images travel as base64 data URLs. Rate-limit and transport
/// failures are retried here with exponential backoff and never surface as
/// semantic failures.
class OpenAiProvider : public Provider {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit OpenAiProvider(HttpSettings settings, Sleeper sleeper = {});

    /// HTTP requests actually sent, including retries.
    std::size_t requests_sent() const { return requests_sent_.load(); }

protected:
    ProviderResponse do_chat(const ChatRequest& request, const std::string& digest) override;
    ProviderResponse do_generate_image(const ImageGenRequest& request, const std::string& digest) override;

private:
    struct HttpReply {
        int status = 0;
        std::string body;
        std::string retry_after;
    };

    HttpReply post_with_retry(const std::string& path, const std::string& body);
    Bytes fetch_url(const std::string& url);

    HttpSettings settings_;
    std::string origin_;       // scheme://host[:port]
    std::string path_prefix_;  // e.g. "/v1"
    Sleeper sleeper_;
    std::atomic<std::size_t> requests_sent_{0};
};

/// Splits "https://host:port/v1" into origin and path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

}  // namespace forge::provider
