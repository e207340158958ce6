#pragma once

#include <string>
#include <utility>
#include <vector>

namespace lma {

/// Flat settings file: one `key = value` per line. Blank lines and lines
/// starting with '#' are ignored; keys are option names without the leading
/// dashes; values may be wrapped in double quotes. Order is preserved.
std::vector<std::pair<std::string, std::string>> parse_config(const std::string& text);
std::vector<std::pair<std::string, std::string>> load_config(const std::string& path);

}  // namespace lma
