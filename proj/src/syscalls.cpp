#include "graalf/syscalls.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <utility>

#include "graalf/model.hpp"

namespace graalf {

namespace {

// Subset of the x86-64 table covering every call ingestion understands plus
// the common noise seen in audit logs.
constexpr std::pair<long, std::string_view> kX86_64[] = {
    {0, "read"},        {1, "write"},        {2, "open"},
    {3, "close"},       {17, "pread64"},     {18, "pwrite64"},
    {19, "readv"},      {20, "writev"},      {21, "access"},
    {22, "pipe"},       {32, "dup"},         {33, "dup2"},
    {41, "socket"},     {42, "connect"},     {43, "accept"},
    {44, "sendto"},     {45, "recvfrom"},    {46, "sendmsg"},
    {47, "recvmsg"},    {49, "bind"},        {50, "listen"},
    {56, "clone"},      {57, "fork"},        {58, "vfork"},
    {59, "execve"},     {60, "exit"},        {62, "kill"},
    {82, "rename"},     {85, "creat"},       {87, "unlink"},
    {90, "chmod"},      {91, "fchmod"},      {257, "openat"},
    {263, "unlinkat"},  {264, "renameat"},   {268, "fchmodat"},
    {288, "accept4"},   {292, "dup3"},       {293, "pipe2"},
    {231, "exit_group"}, {316, "renameat2"}, {435, "clone3"},
};

constexpr std::pair<std::string_view, std::string_view> kAliases[] = {
    {"pread64", "pread"},   {"pwrite64", "pwrite"},   {"preadv", "readv"},
    {"pwritev", "writev"},  {"accept4", "accept"},    {"dup3", "dup2"},
    {"renameat", "rename"}, {"renameat2", "rename"},  {"unlinkat", "unlink"},
    {"fchmod", "chmod"},    {"fchmodat", "chmod"},    {"openat", "open"},
    {"creat", "open"},      {"pipe2", "pipe"},        {"clone3", "clone"},
    {"recvmmsg", "recvmsg"}, {"sendmmsg", "sendmsg"},
};

constexpr std::string_view kInto[] = {"read",     "readv",   "pread", "recv",
                                      "recvfrom", "recvmsg", "accept"};
constexpr std::string_view kOutOf[] = {"write",   "writev",  "pwrite", "send",
                                       "sendto",  "sendmsg", "connect", "unlink",
                                       "rename",  "chmod"};
constexpr std::string_view kCreation[] = {"fork", "clone", "vfork", "execve"};
constexpr std::string_view kFdState[] = {"open", "close", "dup", "dup2", "pipe",
                                         "socket"};
constexpr std::string_view kLifecycle[] = {"fork",  "clone",      "vfork",
                                           "execve", "exit", "exit_group",
                                           "procexit"};

template <std::size_t N>
bool in(const std::string_view (&set)[N], std::string_view name) {
  return std::find(std::begin(set), std::end(set), name) != std::end(set);
}

}  // namespace

std::optional<std::string_view> x86_64_syscall_name(long nr) {
  for (const auto& [n, name] : kX86_64) {
    if (n == nr) return name;
  }
  return std::nullopt;
}

std::string canonical_syscall(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& [from, to] : kAliases) {
    if (lower == from) return std::string(to);
  }
  return lower;
}

SyscallRole syscall_role(std::string_view name) {
  if (in(kInto, name) || in(kOutOf, name)) return SyscallRole::Causal;
  if (in(kFdState, name)) return SyscallRole::FdState;
  if (in(kLifecycle, name)) return SyscallRole::Lifecycle;
  return SyscallRole::Unknown;
}

FlowDirection flow_direction(const Relation& rel) {
  if (rel.is_hierarchy()) return FlowDirection::OutOfSubject;
  const auto name = canonical_syscall(rel.syscall_name());
  if (in(kInto, name)) return FlowDirection::IntoSubject;
  if (in(kOutOf, name) || in(kCreation, name)) return FlowDirection::OutOfSubject;
  return FlowDirection::Neutral;
}

}  // namespace graalf
