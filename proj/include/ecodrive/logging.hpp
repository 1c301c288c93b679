#pragma once

#include <string_view>

#include <spdlog/spdlog.h>

namespace ecodrive {

/// Routes library log output to stderr as `ts level=<lvl> msg` lines.
/// Accepts error, warn, info or debug; throws DomainError otherwise.
void configure_logging(std::string_view level);

}  // namespace ecodrive
