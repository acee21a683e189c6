#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace affectkit {

enum class Task { VA, EXPR, AU };

inline constexpr std::size_t kExpressionCount = 8;
inline constexpr std::size_t kActionUnitCount = 12;

// AU1, AU2, AU4, AU6, AU7, AU10, AU12, AU15, AU23, AU24, AU25, AU26
using AuBits = std::array<int, kActionUnitCount>;

// Output arity of a task head: 2 / 8 / 12.
std::size_t output_width(Task task);

// Accepts "va", "expr", "au" in any case.
Task parse_task(std::string_view name);
std::string task_name(Task task);   // "va" | "expr" | "au"
std::string task_folder(Task task); // "VA" | "EXPR" | "AU"

}  // namespace affectkit
