#include "ragsvc/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <mutex>

namespace ragsvc::log {
namespace {

std::mutex& guard() {
  static std::mutex m;
  return m;
}

std::shared_ptr<spdlog::logger>& slot() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("ragsvc");
    l->set_level(spdlog::level::info);
    return l;
  }();
  return instance;
}

}  // namespace

std::shared_ptr<spdlog::logger> logger() {
  std::lock_guard lock(guard());
  return slot();
}

void set_logger(std::shared_ptr<spdlog::logger> replacement) {
  std::lock_guard lock(guard());
  slot() = std::move(replacement);
}

}  // namespace ragsvc::log
