#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pairsem {

/// Canonical text form: ASCII-lowercased, whitespace runs collapsed to one
/// space, leading and trailing whitespace removed.
std::string normalize_surface(std::string_view s);

/// Lowercased alphanumeric runs. Everything else separates tokens.
std::vector<std::string> tokenize(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace pairsem
