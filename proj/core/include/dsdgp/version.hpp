#pragma once

namespace dsdgp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dsdgp
