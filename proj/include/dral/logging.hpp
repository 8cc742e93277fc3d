#pragma once

#include <spdlog/spdlog.h>

namespace dral {

// Reads DRAL_LOG (trace, debug, info, warn, error, off); defaults to warn.
void init_logging();

}  // namespace dral
