#pragma once

#include "dptr/common.hpp"
#include "dptr/dualenc.hpp"
#include "dptr/embedding.hpp"
#include "dptr/render.hpp"
#include "dptr/rng.hpp"
#include "dptr/thread_pool.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dptr {

// Write-once bank of natural-image token embeddings ([CLS] dropped).
struct PerturbCache {
  std::vector<MatF> bank;  // each rows_per_entry x d
  int rows_per_entry = 0;
  int d = 0;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(bank.size()); }
};

// Encodes `count` images sampled without replacement from `images` with the
// frozen dual encoder. Each entry keeps only the token rows and must have at
// least min_rows of them ("cache entry too short" otherwise).
PerturbCache build_cache(const std::vector<TextImage>& images, const DualEncoder& encoder,
                         int count, int min_rows, std::uint64_t seed,
                         ThreadPool* pool = nullptr);

// Procedural texture bank + build_cache, the no-download default.
PerturbCache build_texture_cache(const DualEncoder& encoder, int count, int min_rows,
                                 std::uint64_t seed, ThreadPool* pool = nullptr);

// Contiguous window of l_t rows at a uniformly sampled offset.
EmbeddingMatrix crop_tokens(const EmbeddingMatrix& entry, int l_t, Rng& rng);
MatF crop_tokens(const MatF& entry, int l_t, Rng& rng);

// F_p = F_t + lambda * crop(random entry). Shape preserved; rng draws one
// entry index, then one crop offset.
EmbeddingMatrix perturb(const EmbeddingMatrix& f_t, const PerturbCache& cache, double lambda,
                        Rng& rng);

// File format: one line of JSON {"D", "count", "rows_per_entry", "seed", ...}
// terminated by '\n', then count*rows_per_entry*D little-endian float32
// values in entry-major order.
void save_cache(const PerturbCache& cache, const std::string& path);
PerturbCache load_cache(const std::string& path);

// Validates an externally produced cache file and rewrites it in canonical
// form (used by the import-cache command).
PerturbCache import_cache(const std::string& in_path, const std::string& out_path, int min_rows);

}  // namespace dptr
