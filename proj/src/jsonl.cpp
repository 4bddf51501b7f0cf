#include "forge/jsonl.hpp"

#include "forge/bytes.hpp"
#include "forge/error.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <set>

namespace forge {

using nlohmann::json;

JsonlAppender::JsonlAppender(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
    drop_torn_tail();
}

// A killed writer can leave an unterminated last line; later appends would
// glue onto it, so cut the file back to its last newline.
void JsonlAppender::drop_torn_tail() {
    const off_t size = ::lseek(fd_, 0, SEEK_END);
    if (size <= 0) return;
    off_t keep = size;
    char buf[4096];
    while (keep > 0) {
        const off_t chunk = std::min<off_t>(keep, sizeof buf);
        if (::pread(fd_, buf, static_cast<std::size_t>(chunk), keep - chunk) != chunk)
            throw IoError("cannot read " + path_.string() + ": " + std::strerror(errno));
        const auto* nl = static_cast<const char*>(::memrchr(buf, '\n', static_cast<std::size_t>(chunk)));
        if (nl) {
            keep = keep - chunk + (nl - buf) + 1;
            break;
        }
        keep -= chunk;
    }
    if (keep != size && ::ftruncate(fd_, keep) != 0)
        throw IoError("cannot truncate " + path_.string() + ": " + std::strerror(errno));
}

JsonlAppender::~JsonlAppender() {
    if (fd_ >= 0) ::close(fd_);
}

void JsonlAppender::append(const json& record) {
    const std::string line = record.dump() + "\n";
    std::lock_guard lock(mutex_);
    const auto written = ::write(fd_, line.data(), line.size());
    if (written != static_cast<ssize_t>(line.size()))
        throw IoError("short append to " + path_.string() + ": " + std::strerror(errno));
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    std::vector<json> out;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        const bool terminated = end != std::string::npos;
        if (!terminated) end = text.size();
        ++line_no;
        const std::string_view line(text.data() + start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            if (!terminated) break;
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
    }
    return out;
}

void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<json>& records) {
    std::string text;
    for (const auto& r : records) text += r.dump() + "\n";
    write_file_atomic(path, text);
}

void compact_jsonl(const std::filesystem::path& path, const std::function<std::string(const json&)>& key) {
    if (!std::filesystem::exists(path)) return;
    std::set<std::pair<std::string, std::string>> unique;
    for (auto& r : read_jsonl(path)) unique.emplace(key(r), r.dump());
    std::string text;
    for (const auto& [k, line] : unique) text += line + "\n";
    write_file_atomic(path, text);
}

}  // namespace forge
