#pragma once

#include "forge/error.hpp"
#include "forge/openai_provider.hpp"
#include "forge/pipeline.hpp"

#include "json.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace forge::cli {

/// Merged view of defaults, config file, environment, and flags, in
/// increasing precedence. The API key itself is read from the environment
/// variable named by api_key_env and never appears in snapshots or logs.
struct RunConfig {
    PipelineConfig pipeline;
    provider::HttpSettings http;
    std::string api_key_env = "OPENAI_API_KEY";
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    std::filesystem::path templates;
    std::optional<std::filesystem::path> replay;
    std::optional<std::filesystem::path> record;
};

/// Config file (JSON, every key optional):
///   {"provider": {"base_url", "chat_model", "image_model", "api_key_env",
///                 "timeout_s", "max_retries",
///                 "pricing": {"input_per_mtok", "output_per_mtok", "per_image"}},
///    "pipeline": {"patience", "caption_count", "image_width", "image_height",
///                 "temperature", "top_p", "context",
///                 "transport_errors_consume_patience"},
///    "jobs", "seed", "templates"}
/// Relative "templates" paths resolve against the file's directory.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// FORGE_BASE_URL, FORGE_CHAT_MODEL, FORGE_IMAGE_MODEL, FORGE_API_KEY_ENV,
/// FORGE_PATIENCE, FORGE_JOBS, FORGE_CONTEXT, FORGE_TEMPLATES.
void apply_env(RunConfig& config, const std::function<const char*(const char*)>& getenv);

/// Reproducible settings only: no paths, no secrets, no timestamps.
nlohmann::json snapshot(const RunConfig& config);

/// Exit status for an error category. 0 success, 1 unexpected, 2 usage or
/// config, 3 io, 4 provider, 5 validation, 6 parse, 7 precondition,
/// 130 interrupted.
int exit_code(ErrorCategory category);

/// Runs one command line. `cancel`, when given, is polled between units.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const std::atomic<bool>* cancel = nullptr);

/// Entry point for the executable: installs the SIGINT handler.
int main(int argc, char** argv);

}  // namespace forge::cli
