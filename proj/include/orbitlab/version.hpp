#pragma once

namespace orbitlab {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace orbitlab
