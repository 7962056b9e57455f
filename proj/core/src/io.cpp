#include "dptr/io.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dptr {

namespace fs = std::filesystem;

void write_pgm(const std::string& path, const MatF& pixels) {
  std::string bytes;
  {
    std::ostringstream header;
    header << "P5\n" << pixels.cols() << " " << pixels.rows() << "\n255\n";
    bytes = header.str();
  }
  bytes.reserve(bytes.size() + static_cast<size_t>(pixels.size()));
  for (Eigen::Index r = 0; r < pixels.rows(); ++r) {
    for (Eigen::Index c = 0; c < pixels.cols(); ++c) {
      float v = pixels(r, c);
      v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
      bytes.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.f))));
    }
  }
  atomic_write(path, bytes);
}

MatF read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path);
  std::string magic;
  in >> magic;
  require(magic == "P5", "not a P5 PGM: " + path);
  auto next_int = [&in, &path]() {
    // Skip whitespace and '#' comment lines between header fields.
    int c = in.get();
    while (c == '#' || std::isspace(c)) {
      if (c == '#') {
        while (c != '\n' && c != EOF) c = in.get();
      }
      c = in.get();
    }
    require(c != EOF, "truncated PGM header: " + path);
    long v = 0;
    while (std::isdigit(c)) {
      v = v * 10 + (c - '0');
      c = in.get();
    }
    return v;
  };
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  require(w > 0 && h > 0 && maxval == 255, "unsupported PGM: " + path);
  // next_int consumed the single whitespace byte after maxval.
  std::vector<char> buf(static_cast<size_t>(w * h));
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(in.gcount() == static_cast<std::streamsize>(buf.size()), "truncated PGM: " + path);
  MatF out(h, w);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      out(r, c) = static_cast<float>(static_cast<std::uint8_t>(buf[static_cast<size_t>(r * w + c)])) / 255.f;
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void atomic_write(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), "write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

void ensure_dir(const std::string& path) { fs::create_directories(path); }

}  // namespace dptr
