#include "forge/replay.hpp"

#include "json.hpp"

namespace forge::provider {

using nlohmann::json;

namespace {

SessionEntry entry_from_json(const std::string& digest, const json& j) {
    SessionEntry entry;
    const auto kind = j.value("kind", "");
    if (kind == "chat") {
        entry.kind = CallKind::Chat;
    } else if (kind == "image") {
        entry.kind = CallKind::Image;
    } else {
        throw ValidationError("session entry " + digest + " has unknown kind '" + kind + "'");
    }
    if (j.contains("error")) {
        const auto& err = j.at("error");
        entry.failure = failure_kind_from_string(err.value("kind", ""));
        if (!entry.failure) throw ValidationError("session entry " + digest + " has unknown error kind");
        entry.failure_message = err.value("message", "");
    } else if (entry.kind == CallKind::Chat) {
        if (!j.contains("response_text")) throw ValidationError("session entry " + digest + " lacks response_text");
        entry.response_text = j.at("response_text").get<std::string>();
    } else {
        if (!j.contains("response_image_b64"))
            throw ValidationError("session entry " + digest + " lacks response_image_b64");
        entry.response_image = base64_decode(j.at("response_image_b64").get<std::string>());
    }
    if (j.contains("usage")) {
        const auto& u = j.at("usage");
        entry.usage.tokens_in = u.value("tokens_in", std::int64_t{0});
        entry.usage.tokens_out = u.value("tokens_out", std::int64_t{0});
        entry.usage.cost_usd = u.value("cost_usd", 0.0);
    }
    return entry;
}

json entry_to_json(const SessionEntry& entry) {
    json j = {{"kind", to_string(entry.kind)}};
    if (entry.failure) {
        j["error"] = {{"kind", to_string(*entry.failure)}, {"message", entry.failure_message}};
    } else if (entry.response_text) {
        j["response_text"] = *entry.response_text;
    } else if (entry.response_image) {
        j["response_image_b64"] = base64_encode(*entry.response_image);
    }
    if (entry.usage.tokens_in || entry.usage.tokens_out || entry.usage.cost_usd != 0.0)
        j["usage"] = {{"tokens_in", entry.usage.tokens_in},
                      {"tokens_out", entry.usage.tokens_out},
                      {"cost_usd", entry.usage.cost_usd}};
    return j;
}

ProviderResponse to_response(const SessionEntry& entry) {
    if (entry.failure) throw ProviderError(*entry.failure, entry.failure_message);
    ProviderResponse response;
    response.text = entry.response_text;
    response.image = entry.response_image;
    response.usage = entry.usage;
    return response;
}

}  // namespace

Session Session::load(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("session file " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ValidationError("session file " + path.string() + " must hold a JSON object");
    Session session;
    for (const auto& [digest, value] : doc.items()) session.entries_.emplace(digest, entry_from_json(digest, value));
    return session;
}

void Session::save(const std::filesystem::path& path) const {
    json doc = json::object();
    for (const auto& [digest, entry] : entries_) doc[digest] = entry_to_json(entry);
    write_file_atomic(path, doc.dump(1) + "\n");
}

const SessionEntry* Session::find(const std::string& digest) const {
    auto it = entries_.find(digest);
    return it == entries_.end() ? nullptr : &it->second;
}

void Session::put(const std::string& digest, SessionEntry entry) {
    entries_.insert_or_assign(digest, std::move(entry));
}

std::unique_ptr<ReplayProvider> ReplayProvider::from_file(const std::filesystem::path& path) {
    return std::make_unique<ReplayProvider>(Session::load(path));
}

const SessionEntry& ReplayProvider::lookup(const std::string& digest, CallKind kind) const {
    const auto* entry = session_.find(digest);
    if (!entry) throw ProviderError(FailureKind::CacheMiss, "replay session has no entry for request " + digest);
    if (entry->kind != kind)
        throw ProviderError(FailureKind::CacheMiss, "replay entry " + digest + " is not a " + to_string(kind) + " reply");
    return *entry;
}

ProviderResponse ReplayProvider::do_chat(const ChatRequest&, const std::string& digest) {
    return to_response(lookup(digest, CallKind::Chat));
}

ProviderResponse ReplayProvider::do_generate_image(const ImageGenRequest&, const std::string& digest) {
    return to_response(lookup(digest, CallKind::Image));
}

void RecordingProvider::remember(const std::string& digest, SessionEntry entry) {
    std::lock_guard lock(mutex_);
    session_.put(digest, std::move(entry));
}

void RecordingProvider::save(const std::filesystem::path& path) const {
    snapshot().save(path);
}

Session RecordingProvider::snapshot() const {
    std::lock_guard lock(mutex_);
    return session_;
}

ProviderResponse RecordingProvider::do_chat(const ChatRequest& request, const std::string& digest) {
    try {
        auto response = inner_->chat(request);
        remember(digest, SessionEntry{CallKind::Chat, response.text, std::nullopt, std::nullopt, {}, response.usage});
        return response;
    } catch (const ProviderError& e) {
        if (is_semantic(e.kind()))
            remember(digest, SessionEntry{CallKind::Chat, std::nullopt, std::nullopt, e.kind(), e.what(), {}});
        throw;
    }
}

ProviderResponse RecordingProvider::do_generate_image(const ImageGenRequest& request, const std::string& digest) {
    try {
        auto response = inner_->generate_image(request);
        remember(digest, SessionEntry{CallKind::Image, std::nullopt, response.image, std::nullopt, {}, response.usage});
        return response;
    } catch (const ProviderError& e) {
        if (is_semantic(e.kind()))
            remember(digest, SessionEntry{CallKind::Image, std::nullopt, std::nullopt, e.kind(), e.what(), {}});
        throw;
    }
}

}  // namespace forge::provider
