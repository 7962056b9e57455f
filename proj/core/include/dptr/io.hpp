#pragma once

#include "dptr/common.hpp"

#include <string>
#include <vector>

namespace dptr {

// 8-bit binary PGM (P5). Pixels are clamped to [0,1] and quantized to 0..255.
void write_pgm(const std::string& path, const MatF& pixels);
MatF read_pgm(const std::string& path);

std::string read_file(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write(const std::string& path, const std::string& bytes);

void ensure_dir(const std::string& path);

}  // namespace dptr
