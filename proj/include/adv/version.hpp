#pragma once

namespace adv {

inline constexpr const char* kToolName = "advlab";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace adv
