#pragma once

namespace faceaudit {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kReportSchema = "faceaudit/1";

}  // namespace faceaudit
