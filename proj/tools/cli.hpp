#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace stimeeg::cli {

/// `[section]` headers, `key = value` lines, `#` or `;` comments.
/// Returns ("section.key", value) pairs in file order.
std::vector<std::pair<std::string, std::string>> parse_ini(const std::string& text);

/// Exit codes: 0 success, 1 pipeline error, 2 usage or configuration error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stimeeg::cli
