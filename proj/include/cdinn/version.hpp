#pragma once

namespace cdinn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cdinn
