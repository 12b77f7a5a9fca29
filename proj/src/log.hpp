#pragma once

#include <spdlog/spdlog.h>

#include <memory>

namespace glumind::detail {

/// Library logger; writes to stderr so stdout stays machine-readable.
spdlog::logger& log();

}  // namespace glumind::detail
