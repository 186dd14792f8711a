#pragma once

#include <string_view>

namespace decan::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

// Messages below the threshold are dropped. Default: Warn.
void set_level(Level level);
Level level();

void info(std::string_view message);
void warn(std::string_view message);

}  // namespace decan::log
