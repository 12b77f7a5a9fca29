#include "log.hpp"

#include "glumind/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string>

namespace glumind {

namespace detail {

spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("glumind");
    const char* env = std::getenv("GLUMIND_LOG");
    l->set_level(spdlog::level::from_str(env != nullptr ? env : "warn"));
    l->set_pattern("[%l] %v");
    return l;
  }();
  return *logger;
}

}  // namespace detail

void set_log_level(std::string_view level) { detail::log().set_level(spdlog::level::from_str(std::string(level))); }

}  // namespace glumind
