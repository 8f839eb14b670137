#pragma once

#include <string>
#include <string_view>

namespace acrodis::metrics {

/// Porter (1980) suffix-stripping stemmer for lowercase ASCII words. Words with
/// non-ASCII bytes, uppercase letters, or fewer than three characters are
/// returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace acrodis::metrics
