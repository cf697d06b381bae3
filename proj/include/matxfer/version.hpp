#pragma once

namespace matxfer {
inline constexpr const char* kVersion = "0.1.0";
}
