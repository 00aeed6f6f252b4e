#pragma once

namespace har {

/// Routes library logging to standard error at the level named by the
/// HAR_LOG environment variable (error, info or debug; default info).
/// Unknown values fall back to info with a warning.
void init_logging_from_env();

}  // namespace har
