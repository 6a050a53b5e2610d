#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace aop {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// Independent, reproducible sub-seed for a named stream (splitmix64 mixing).
uint64_t derive_seed(uint64_t base, uint64_t stream);
uint64_t derive_seed(uint64_t base, std::string_view stream_name);

}  // namespace aop
