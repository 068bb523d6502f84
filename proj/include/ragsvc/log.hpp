#pragma once

#include <spdlog/spdlog.h>

#include <memory>

namespace ragsvc::log {

/// Process-wide "ragsvc" logger (stderr by default). Tests swap in their own.
std::shared_ptr<spdlog::logger> logger();

void set_logger(std::shared_ptr<spdlog::logger> replacement);

}  // namespace ragsvc::log
