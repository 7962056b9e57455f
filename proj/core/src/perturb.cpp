#include "dptr/perturb.hpp"

#include "dptr/io.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <sstream>

namespace dptr {

PerturbCache build_cache(const std::vector<TextImage>& images, const DualEncoder& encoder,
                         int count, int min_rows, std::uint64_t seed, ThreadPool* pool) {
  require(count >= 1, "cache count must be >= 1");
  require(count <= static_cast<int>(images.size()), "not enough source images");

  Rng rng(Rng::mix({seed, 0x73616d70ull}));
  std::vector<int> order(images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  order.resize(static_cast<size_t>(count));

  PerturbCache cache;
  cache.seed = seed;
  cache.d = encoder.cfg.d;
  cache.bank.resize(static_cast<size_t>(count));
  auto encode_one = [&](int i) {
    const EmbeddingMatrix e = image_encode(encoder, images[static_cast<size_t>(order[static_cast<size_t>(i)])]);
    // Token rows only; [CLS] is row 0.
    cache.bank[static_cast<size_t>(i)] = e.values.bottomRows(e.values.rows() - 1);
  };
  if (pool != nullptr)
    pool->run_indexed(count, encode_one);
  else
    for (int i = 0; i < count; ++i) encode_one(i);

  cache.rows_per_entry = static_cast<int>(cache.bank.front().rows());
  for (const MatF& entry : cache.bank) {
    require(static_cast<int>(entry.rows()) == cache.rows_per_entry, "ragged cache entries");
    require(static_cast<int>(entry.rows()) >= min_rows, "cache entry too short");
  }
  return cache;
}

PerturbCache build_texture_cache(const DualEncoder& encoder, int count, int min_rows,
                                 std::uint64_t seed, ThreadPool* pool) {
  std::vector<TextImage> textures(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng img_rng(Rng::mix({seed, 0x74657874ull, static_cast<std::uint64_t>(i)}));
    TextImage& img = textures[static_cast<size_t>(i)];
    img.pixels = render_texture(encoder.cfg.canvas_h, encoder.cfg.canvas_w, img_rng);
    img.label = "";
    img.domain = Domain::cluttered;
  }
  return build_cache(textures, encoder, count, min_rows, seed, pool);
}

MatF crop_tokens(const MatF& entry, int l_t, Rng& rng) {
  const int rows = static_cast<int>(entry.rows());
  require(rows >= l_t, "cache entry too short");
  const int offset = rng.uniform_int(rows - l_t + 1);
  return entry.middleRows(offset, l_t);
}

EmbeddingMatrix crop_tokens(const EmbeddingMatrix& entry, int l_t, Rng& rng) {
  EmbeddingMatrix out;
  out.values = crop_tokens(entry.values, l_t, rng);
  out.role = Role::image;
  out.special = -1;
  return out;
}

EmbeddingMatrix perturb(const EmbeddingMatrix& f_t, const PerturbCache& cache, double lambda,
                        Rng& rng) {
  require(f_t.role == Role::prompt, "perturb expects a prompt embedding");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(cache.count() >= 1, "empty cache");
  require(cache.d == static_cast<int>(f_t.values.cols()), "feature dim mismatch");
  const int l_t = static_cast<int>(f_t.values.rows());
  const int entry = rng.uniform_int(cache.count());
  const MatF crop = crop_tokens(cache.bank[static_cast<size_t>(entry)], l_t, rng);
  EmbeddingMatrix out;
  out.values = f_t.values + static_cast<float>(lambda) * crop;
  out.role = Role::perturbed;
  out.special = f_t.special;
  return out;
}

void save_cache(const PerturbCache& cache, const std::string& path) {
  nlohmann::json j;
  j["kind"] = "dptr-cache";
  j["version"] = 1;
  j["count"] = cache.count();
  j["rows_per_entry"] = cache.rows_per_entry;
  j["D"] = cache.d;
  j["seed"] = cache.seed;
  std::string bytes = j.dump();
  bytes.push_back('\n');
  const size_t entry_bytes =
      static_cast<size_t>(cache.rows_per_entry) * static_cast<size_t>(cache.d) * sizeof(float);
  bytes.reserve(bytes.size() + entry_bytes * cache.bank.size());
  for (const MatF& entry : cache.bank) {
    const char* raw = reinterpret_cast<const char*>(entry.data());
    bytes.append(raw, entry_bytes);
  }
  atomic_write(path, bytes);
}

PerturbCache load_cache(const std::string& path) {
  const std::string bytes = read_file(path);
  const size_t nl = bytes.find('\n');
  require(nl != std::string::npos, "missing cache header");
  const nlohmann::json j = nlohmann::json::parse(bytes.substr(0, nl));
  require(j.value("kind", std::string("dptr-cache")) == "dptr-cache", "not a cache file");
  PerturbCache cache;
  const int count = j.at("count").get<int>();
  cache.rows_per_entry = j.at("rows_per_entry").get<int>();
  cache.d = j.at("D").get<int>();
  cache.seed = j.value("seed", 0ull);
  require(count >= 1 && cache.rows_per_entry >= 1 && cache.d >= 1, "bad cache header");
  const size_t entry_bytes =
      static_cast<size_t>(cache.rows_per_entry) * static_cast<size_t>(cache.d) * sizeof(float);
  require(bytes.size() == nl + 1 + entry_bytes * static_cast<size_t>(count),
          "cache payload size mismatch");
  cache.bank.resize(static_cast<size_t>(count));
  const char* p = bytes.data() + nl + 1;
  for (int i = 0; i < count; ++i) {
    MatF entry(cache.rows_per_entry, cache.d);
    std::memcpy(entry.data(), p, entry_bytes);
    p += entry_bytes;
    require(entry.allFinite(), "non-finite cache entry");
    cache.bank[static_cast<size_t>(i)] = std::move(entry);
  }
  return cache;
}

PerturbCache import_cache(const std::string& in_path, const std::string& out_path, int min_rows) {
  PerturbCache cache = load_cache(in_path);
  require(cache.rows_per_entry >= min_rows, "cache entry too short");
  save_cache(cache, out_path);
  return cache;
}

}  // namespace dptr
