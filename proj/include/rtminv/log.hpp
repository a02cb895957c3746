#pragma once

#include <functional>
#include <string>

namespace rtminv {

using WarningSink = std::function<void(const std::string&)>;

/// Routes library warnings (skipped data, fallback fits, noisy estimates).
/// The default sink writes to stderr; an empty sink silences them.
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace rtminv
