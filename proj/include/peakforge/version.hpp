#pragma once

namespace peakforge {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace peakforge
