#include "ecodrive/logging.hpp"

#include <memory>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>

#include "ecodrive/errors.hpp"

namespace ecodrive {

void configure_logging(std::string_view level) {
  spdlog::level::level_enum lvl;
  if (level == "error") {
    lvl = spdlog::level::err;
  } else if (level == "warn") {
    lvl = spdlog::level::warn;
  } else if (level == "info") {
    lvl = spdlog::level::info;
  } else if (level == "debug") {
    lvl = spdlog::level::debug;
  } else {
    throw DomainError("unknown log level '" + std::string(level) + "'");
  }
  spdlog::drop("ecodrive");
  auto logger = spdlog::stderr_logger_st("ecodrive");
  logger->set_pattern("%Y-%m-%dT%H:%M:%S.%e level=%l %v");
  logger->set_level(lvl);
  spdlog::set_default_logger(logger);
}

}  // namespace ecodrive
