#pragma once

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

namespace forge {

/// Appends whole lines with a single write(2) on an O_APPEND descriptor, so a
/// killed process never leaves half a record behind and concurrent writers do
/// not interleave. Opening cuts off an unterminated last line.
class JsonlAppender {
public:
    explicit JsonlAppender(const std::filesystem::path& path);
    ~JsonlAppender();
    JsonlAppender(const JsonlAppender&) = delete;
    JsonlAppender& operator=(const JsonlAppender&) = delete;

    void append(const nlohmann::json& record);

private:
    void drop_torn_tail();

    std::filesystem::path path_;
    int fd_ = -1;
    std::mutex mutex_;
};

/// Reads one JSON value per non-empty line. A final line without a trailing
/// newline that fails to parse is treated as torn and skipped; any other bad
/// line is a ValidationError naming the line number.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// Rewrites `path` atomically with `records`, one per line.
void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);

/// Drops exact-duplicate lines and sorts by `key`, then by serialized content.
void compact_jsonl(const std::filesystem::path& path,
                   const std::function<std::string(const nlohmann::json&)>& key);

}  // namespace forge
