#include "affectkit/task.hpp"

#include <algorithm>
#include <cctype>

#include "affectkit/errors.hpp"

namespace affectkit {

std::size_t output_width(Task task) {
    switch (task) {
        case Task::VA: return 2;
        case Task::EXPR: return kExpressionCount;
        case Task::AU: return kActionUnitCount;
    }
    throw ContractViolation("unknown task");
}

Task parse_task(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "va") return Task::VA;
    if (lower == "expr") return Task::EXPR;
    if (lower == "au") return Task::AU;
    throw ContractViolation("unknown task '" + std::string(name) + "' (expected va, expr or au)");
}

std::string task_name(Task task) {
    switch (task) {
        case Task::VA: return "va";
        case Task::EXPR: return "expr";
        case Task::AU: return "au";
    }
    throw ContractViolation("unknown task");
}

std::string task_folder(Task task) {
    switch (task) {
        case Task::VA: return "VA";
        case Task::EXPR: return "EXPR";
        case Task::AU: return "AU";
    }
    throw ContractViolation("unknown task");
}

}  // namespace affectkit
