#pragma once

namespace lgmjoint {
constexpr const char* kVersion = "0.1.0";
}
