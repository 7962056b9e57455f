#pragma once

#include "dptr/common.hpp"
#include "dptr/corpus.hpp"
#include "dptr/rng.hpp"
#include "dptr/thread_pool.hpp"

#include <string>
#include <vector>

namespace dptr {

enum class Domain { clean, cluttered };
enum class Split { train, test };

std::string to_string(Domain d);
std::string to_string(Split s);
Domain domain_from_string(const std::string& s);
Split split_from_string(const std::string& s);

// Grayscale text image, values in [0,1].
struct TextImage {
  MatF pixels;
  std::string label;
  Domain domain = Domain::clean;
};

struct ManifestEntry {
  std::string path;  // resolved against the manifest directory on load
  std::string label;
  Domain domain = Domain::clean;
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<int> indices_of(Split s) const;
};

struct RenderConfig {
  int height = 32;
  int width = 64;
  double strength = 0.5;  // corruption strength for the cluttered domain
};

// Dark 5x7 glyphs on a light background, placement and intensities drawn
// from rng. Throws "overflow" when the label cannot fit the canvas.
TextImage render_label(const std::string& label, int height, int width, Rng& rng);

// Clean -> cluttered: translation jitter, background texture, additive noise
// and a blended 3x3 box blur, all scaled by strength in [0,1]. strength 0
// changes nothing but the domain tag.
TextImage corrupt_image(const TextImage& img, double strength, Rng& rng);

// Procedural texture used as the natural-image stand-in for the embedding
// cache: multi-octave value noise plus a random gradient.
MatF render_texture(int height, int width, Rng& rng);

// per_label images per label, split assigned per label (never per image).
// Images are written under out_dir/images/, the manifest to
// out_dir/manifest.jsonl, the vocabulary to out_dir/vocab.json.
DatasetManifest build_dataset(const LabelCorpus& corpus, int per_label, Domain domain,
                              double split_frac, Rng& rng, const std::string& out_dir,
                              const RenderConfig& rc, ThreadPool* pool = nullptr);

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Scans every referenced file; throws if a pixel leaves [0,1] or a file is
// missing.
void validate_manifest(const DatasetManifest& manifest);

}  // namespace dptr
