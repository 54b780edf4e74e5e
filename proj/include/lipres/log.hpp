#pragma once

#include <functional>
#include <string>

namespace lipres {

/// Non-fatal conditions (skipped utterances, floored variances) go here.
/// Default sink writes "warning: ..." to stderr.
using WarningSink = std::function<void(const std::string&)>;

void warn(const std::string& message);
/// Returns the previous sink. Pass nullptr to restore the default.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace lipres
