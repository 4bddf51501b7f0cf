#pragma once

#include "forge/bytes.hpp"
#include "forge/provider.hpp"
#include "forge/replay.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>

namespace forge::testing {

/// Provider whose replies come from callbacks. Callbacks may throw
/// ProviderError to simulate refusals, rejections, or outages.
class ScriptedProvider : public provider::Provider {
public:
    using ChatFn = std::function<std::string(const provider::ChatRequest&)>;
    using ImageFn = std::function<Bytes(const provider::ImageGenRequest&)>;

    ScriptedProvider(ChatFn chat, ImageFn image) : chat_(std::move(chat)), image_(std::move(image)) {}

    std::size_t chat_calls() const { return chat_calls_.load(); }
    std::size_t image_calls() const { return image_calls_.load(); }

protected:
    provider::ProviderResponse do_chat(const provider::ChatRequest& request, const std::string& digest) override;
    provider::ProviderResponse do_generate_image(const provider::ImageGenRequest& request,
                                                 const std::string& digest) override;

private:
    ChatFn chat_;
    ImageFn image_;
    std::atomic<std::size_t> chat_calls_{0};
    std::atomic<std::size_t> image_calls_{0};
};

/// Deterministic w x h RGB PNG; different seeds give different pixels.
Bytes toy_png(std::uint64_t seed, int width = 64, int height = 64);

/// Scripted model behaviour for the toy corpus. Replies depend on the step,
/// the unit label, the attempt ordinal, and the generation round of the unit.
///
/// Stylization (every task, every style):
///   item 00  reference replies for decomposition, injection, verification
///   item 03  first image fails verification, second passes
///   item 04  first generation is a safety rejection
///   item 05  first decomposition is a content refusal
///   item 06  first verification reply is unparsable
///   item 07  verification always fails, so the unit runs out of patience
/// Captions:  item 00 reference captions; item 02 four captions once;
///            item 08 never returns a list (record dropped)
/// VQA:       verification fails when (item + pair) % 3 == 0 and always for
///            item 00 pair 0 and item 01 pair 0; item 08 verification never
///            parses (record dropped); item 09 pair 1 re-annotation never
///            parses (pair dropped)
/// VE:        same verdict rule; item 00 pair 0 gets the reference replies
class ToyScript {
public:
    std::string chat(const provider::ChatRequest& request);
    Bytes image(const provider::ImageGenRequest& request);

private:
    std::mutex mutex_;
    std::map<std::string, std::uint32_t> round_;
};

/// Writes images/ and corpus_{cap,vqa,ve}.jsonl (ten items each) into dir.
void write_toy_corpus(const std::filesystem::path& dir);

/// Runs stylize and annotate for all three tasks and all target styles over
/// the toy corpus in dir against ToyScript, and returns every exchange.
provider::Session record_toy_session(const std::filesystem::path& dir, const std::filesystem::path& templates);

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Source tree locations baked in at configure time.
std::filesystem::path source_dir();
std::filesystem::path fixture_dir();
std::filesystem::path template_dir();

}  // namespace forge::testing
