#pragma once

namespace lap {

inline constexpr const char* kEngineVersion = "0.1.0";

}  // namespace lap
