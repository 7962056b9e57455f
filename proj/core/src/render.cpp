#include "dptr/render.hpp"

#include "dptr/io.hpp"
#include "dptr/vocab.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>

namespace dptr {

namespace {

// 5x7 bitmap font, one row per byte, bit 4 = leftmost column.
// Order matches the a-z 0-9 layout of the vocabulary.
constexpr std::uint8_t kFont[36][7] = {
    {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // a
    {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},  // b
    {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E},  // c
    {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E},  // d
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F},  // e
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},  // f
    {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F},  // g
    {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // h
    {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E},  // i
    {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},  // j
    {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // k
    {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},  // l
    {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11},  // m
    {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11},  // n
    {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // o
    {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},  // p
    {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D},  // q
    {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},  // r
    {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E},  // s
    {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},  // t
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // u
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},  // v
    {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11},  // w
    {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},  // x
    {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04},  // y
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},  // z
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x06, 0x08, 0x10, 0x1F},  // 2
    {0x1F, 0x01, 0x02, 0x06, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;
constexpr int kMargin = 2;

const std::uint8_t* glyph_of(char c) {
  if (c >= 'a' && c <= 'z') return kFont[c - 'a'];
  if (c >= '0' && c <= '9') return kFont[26 + (c - '0')];
  fail("unknown symbol");
}

// Bilinear upsample of a coarse grid to h x w, used for value noise.
MatF upsample(const MatF& grid, int h, int w) {
  MatF out(h, w);
  const int gh = static_cast<int>(grid.rows());
  const int gw = static_cast<int>(grid.cols());
  for (int r = 0; r < h; ++r) {
    const float fy = (static_cast<float>(r) + 0.5f) / static_cast<float>(h) * static_cast<float>(gh) - 0.5f;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, gh - 1);
    const int y1 = std::min(y0 + 1, gh - 1);
    const float ty = std::clamp(fy - static_cast<float>(y0), 0.f, 1.f);
    for (int c = 0; c < w; ++c) {
      const float fx = (static_cast<float>(c) + 0.5f) / static_cast<float>(w) * static_cast<float>(gw) - 0.5f;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, gw - 1);
      const int x1 = std::min(x0 + 1, gw - 1);
      const float tx = std::clamp(fx - static_cast<float>(x0), 0.f, 1.f);
      const float top = grid(y0, x0) * (1.f - tx) + grid(y0, x1) * tx;
      const float bot = grid(y1, x0) * (1.f - tx) + grid(y1, x1) * tx;
      out(r, c) = top * (1.f - ty) + bot * ty;
    }
  }
  return out;
}

MatF noise_grid(int gh, int gw, Rng& rng) {
  MatF g(gh, gw);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    g.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return g;
}

MatF box_blur3(const MatF& img) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  MatF out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      float sum = 0.f;
      int count = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          sum += img(rr, cc);
          ++count;
        }
      }
      out(r, c) = sum / static_cast<float>(count);
    }
  }
  return out;
}

MatF shift_image(const MatF& img, int dy, int dx) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  MatF out(h, w);
  for (int r = 0; r < h; ++r) {
    const int sr = std::clamp(r - dy, 0, h - 1);
    for (int c = 0; c < w; ++c) {
      const int sc = std::clamp(c - dx, 0, w - 1);
      out(r, c) = img(sr, sc);
    }
  }
  return out;
}

}  // namespace

std::string to_string(Domain d) { return d == Domain::clean ? "clean" : "cluttered"; }
std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Domain domain_from_string(const std::string& s) {
  if (s == "clean") return Domain::clean;
  if (s == "cluttered") return Domain::cluttered;
  fail("unknown domain: " + s);
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  fail("unknown split: " + s);
}

std::vector<int> DatasetManifest::indices_of(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(entries.size()); ++i)
    if (entries[static_cast<size_t>(i)].split == s) out.push_back(i);
  return out;
}

TextImage render_label(const std::string& label, int height, int width, Rng& rng) {
  require(!label.empty(), "empty label");
  const int n = static_cast<int>(label.size());
  const int usable = width - 2 * kMargin;
  int advance = kGlyphW + 1;
  int text_w = n * advance - 1;
  if (text_w > usable) {
    advance = kGlyphW;
    text_w = n * advance;
  }
  require(text_w <= usable && height >= kGlyphH + 2, "overflow");

  const float bg = 0.82f + 0.13f * static_cast<float>(rng.uniform());
  const float fg = 0.05f + 0.12f * static_cast<float>(rng.uniform());
  const int x_slack = usable - text_w;
  const int x0 = kMargin + rng.uniform_int(x_slack + 1);
  const int y_center = (height - kGlyphH) / 2;
  const int y_jitter = rng.uniform_int(5) - 2;
  const int y0 = std::clamp(y_center + y_jitter, 1, height - kGlyphH - 1);

  TextImage img;
  img.label = label;
  img.domain = Domain::clean;
  img.pixels = MatF::Constant(height, width, bg);
  for (int ci = 0; ci < n; ++ci) {
    const std::uint8_t* glyph = glyph_of(label[static_cast<size_t>(ci)]);
    const int gx = x0 + ci * advance;
    for (int r = 0; r < kGlyphH; ++r) {
      for (int c = 0; c < kGlyphW; ++c) {
        if (glyph[r] & (0x10 >> c)) img.pixels(y0 + r, gx + c) = fg;
      }
    }
  }
  return img;
}

TextImage corrupt_image(const TextImage& img, double strength, Rng& rng) {
  require(img.domain == Domain::clean, "corrupt_image expects a clean image");
  require(strength >= 0.0 && strength <= 1.0, "strength out of range");
  const int h = static_cast<int>(img.pixels.rows());
  const int w = static_cast<int>(img.pixels.cols());
  const float s = static_cast<float>(strength);

  // Draw everything up front so the stream advances identically for every
  // strength; effects are scaled afterwards.
  const int dy = static_cast<int>(std::lround(strength * rng.uniform(-2.0, 2.0)));
  const int dx = static_cast<int>(std::lround(strength * rng.uniform(-2.0, 2.0)));
  const MatF texture = upsample(noise_grid(4, 8, rng), h, w);
  MatF noise(h, w);
  for (Eigen::Index i = 0; i < noise.size(); ++i)
    noise.data()[i] = static_cast<float>(rng.normal());

  TextImage out;
  out.label = img.label;
  out.domain = Domain::cluttered;
  out.pixels = shift_image(img.pixels, dy, dx);
  out.pixels += 0.22f * s * texture;
  out.pixels += 0.10f * s * noise;
  const float blur_mix = 0.75f * s;
  if (blur_mix > 0.f) {
    const MatF blurred = box_blur3(out.pixels);
    out.pixels = (1.f - blur_mix) * out.pixels + blur_mix * blurred;
  }
  out.pixels = out.pixels.cwiseMax(0.f).cwiseMin(1.f);
  return out;
}

MatF render_texture(int height, int width, Rng& rng) {
  MatF img = upsample(noise_grid(4, 4, rng), height, width);
  img += 0.5f * upsample(noise_grid(8, 16, rng), height, width);
  const float gx = static_cast<float>(rng.uniform(-1.0, 1.0));
  const float gy = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      img(r, c) += gx * static_cast<float>(c) / static_cast<float>(width) +
                   gy * static_cast<float>(r) / static_cast<float>(height);
  const float lo = img.minCoeff();
  const float hi = img.maxCoeff();
  img = (img.array() - lo) / std::max(hi - lo, 1e-6f);
  return img;
}

DatasetManifest build_dataset(const LabelCorpus& corpus, int per_label, Domain domain,
                              double split_frac, Rng& rng, const std::string& out_dir,
                              const RenderConfig& rc, ThreadPool* pool) {
  require(per_label >= 1, "per_label must be >= 1");
  require(split_frac > 0.0 && split_frac <= 1.0, "split_frac out of range");
  const int n_labels = static_cast<int>(corpus.labels.size());

  // Split by label so test labels are unseen at train time.
  std::vector<int> order(static_cast<size_t>(n_labels));
  for (int i = 0; i < n_labels; ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order);
  const int n_train = static_cast<int>(std::lround(split_frac * n_labels));
  std::vector<Split> split_of(static_cast<size_t>(n_labels), Split::test);
  for (int i = 0; i < n_train && i < n_labels; ++i)
    split_of[static_cast<size_t>(order[static_cast<size_t>(i)])] = Split::train;

  const std::uint64_t base_seed = rng.next_u64();
  ensure_dir(out_dir + "/images");

  DatasetManifest manifest;
  manifest.entries.resize(static_cast<size_t>(n_labels) * static_cast<size_t>(per_label));
  const int total = n_labels * per_label;
  auto render_one = [&](int idx) {
    const int li = idx / per_label;
    const int k = idx % per_label;
    const std::string& label = corpus.labels[static_cast<size_t>(li)];
    Rng img_rng(Rng::mix({base_seed, static_cast<std::uint64_t>(li), static_cast<std::uint64_t>(k)}));
    TextImage img = render_label(label, rc.height, rc.width, img_rng);
    if (domain == Domain::cluttered) img = corrupt_image(img, rc.strength, img_rng);
    std::ostringstream name;
    name << "images/" << label << "_" << to_string(domain) << "_" << k << ".pgm";
    write_pgm(out_dir + "/" + name.str(), img.pixels);
    ManifestEntry& e = manifest.entries[static_cast<size_t>(idx)];
    e.path = name.str();
    e.label = label;
    e.domain = domain;
    e.split = split_of[static_cast<size_t>(li)];
  };
  if (pool != nullptr) {
    pool->run_indexed(total, render_one);
  } else {
    for (int i = 0; i < total; ++i) render_one(i);
  }

  save_manifest(manifest, out_dir + "/manifest.jsonl");
  vocab::write_json(out_dir + "/vocab.json");

  // Resolve paths for the in-memory copy.
  for (auto& e : manifest.entries) e.path = out_dir + "/" + e.path;
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ostringstream out;
  for (const auto& e : manifest.entries) {
    nlohmann::json j;
    j["path"] = e.path;
    j["label"] = e.label;
    j["domain"] = to_string(e.domain);
    j["split"] = to_string(e.split);
    out << j.dump() << "\n";
  }
  atomic_write(path, out.str());
}

DatasetManifest load_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(path).parent_path();
  DatasetManifest manifest;
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.path = (dir / j.at("path").get<std::string>()).string();
    e.label = j.at("label").get<std::string>();
    e.domain = domain_from_string(j.at("domain").get<std::string>());
    e.split = split_from_string(j.at("split").get<std::string>());
    manifest.entries.push_back(std::move(e));
  }
  require(!manifest.entries.empty(), "empty manifest");
  return manifest;
}

void validate_manifest(const DatasetManifest& manifest) {
  for (const auto& e : manifest.entries) {
    const MatF img = read_pgm(e.path);
    require(img.minCoeff() >= 0.f && img.maxCoeff() <= 1.f, "pixel out of range: " + e.path);
  }
}

}  // namespace dptr
