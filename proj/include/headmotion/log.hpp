#pragma once

#include <functional>
#include <string>

namespace headmotion {

using WarningSink = std::function<void(const std::string&)>;

/// Replaces the warning sink (default: standard error). Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void log_warning(const std::string& message);

}  // namespace headmotion
