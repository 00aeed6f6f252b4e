#include "har/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace har {

void init_logging_from_env() {
    auto logger = spdlog::get("har");
    if (!logger) logger = spdlog::stderr_logger_mt("har");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("HAR_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") {
        spdlog::set_level(spdlog::level::err);
    } else if (level == "debug") {
        spdlog::set_level(spdlog::level::debug);
    } else {
        spdlog::set_level(spdlog::level::info);
        if (level != "info") spdlog::warn("unknown HAR_LOG value '{}', using info", level);
    }
}

}  // namespace har
