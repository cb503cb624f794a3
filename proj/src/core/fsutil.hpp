#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ldst {

// Writes via a sibling temp file then renames over the destination.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

std::vector<unsigned char> read_file(const std::filesystem::path& path);

}  // namespace ldst
