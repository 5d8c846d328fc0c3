#pragma once

#include <optional>
#include <string_view>

namespace graalf {

/// Name for an x86-64 Linux system call number, or nullopt when the number
/// is not in the bundled table.
std::optional<std::string_view> x86_64_syscall_name(long nr);

}  // namespace graalf
