#pragma once

#include "forge/provider.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace forge::provider {

/// One stored reply. Either text (chat), an image, or a semantic failure to
/// reproduce on replay.
struct SessionEntry {
    CallKind kind = CallKind::Chat;
    std::optional<std::string> response_text;
    std::optional<Bytes> response_image;
    std::optional<FailureKind> failure;
    std::string failure_message;
    Usage usage;
};

/// Digest-keyed store backing a session file. The file is a single JSON object
/// mapping each request digest to
/// {"kind": "chat"|"image", "response_text" | "response_image_b64" | "error", "usage"?}.
class Session {
public:
    static Session load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    const SessionEntry* find(const std::string& digest) const;
    void put(const std::string& digest, SessionEntry entry);
    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, SessionEntry>& entries() const { return entries_; }

private:
    std::map<std::string, SessionEntry> entries_;
};

/// Serves recorded replies by request digest. Never touches the network.
class ReplayProvider : public Provider {
public:
    explicit ReplayProvider(Session session) : session_(std::move(session)) {}
    static std::unique_ptr<ReplayProvider> from_file(const std::filesystem::path& path);

    const Session& session() const { return session_; }

protected:
    ProviderResponse do_chat(const ChatRequest& request, const std::string& digest) override;
    ProviderResponse do_generate_image(const ImageGenRequest& request, const std::string& digest) override;

private:
    const SessionEntry& lookup(const std::string& digest, CallKind kind) const;

    const Session session_;
};

/// Forwards to a live provider and remembers every reply (including semantic
/// failures) so the run can be replayed offline.
class RecordingProvider : public Provider {
public:
    explicit RecordingProvider(std::shared_ptr<Provider> inner, Session seed = {})
        : inner_(std::move(inner)), session_(std::move(seed)) {}

    void save(const std::filesystem::path& path) const;
    Session snapshot() const;

protected:
    ProviderResponse do_chat(const ChatRequest& request, const std::string& digest) override;
    ProviderResponse do_generate_image(const ImageGenRequest& request, const std::string& digest) override;

private:
    void remember(const std::string& digest, SessionEntry entry);

    std::shared_ptr<Provider> inner_;
    mutable std::mutex mutex_;
    Session session_;
};

}  // namespace forge::provider
