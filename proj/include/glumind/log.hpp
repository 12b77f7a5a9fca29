#pragma once

#include <string_view>

namespace glumind {

/// Sets the stderr log level ("trace" .. "off"). Defaults to GLUMIND_LOG or "warn".
void set_log_level(std::string_view level);

}  // namespace glumind
