#include "dptr/vision.hpp"

#include "dptr/io.hpp"

#include <cmath>
#include <cstdio>

namespace dptr {

VisionModel VisionModel::init(const VisionConfig& cfg, std::uint64_t seed) {
  VisionModel m;
  m.cfg = cfg;
  m.seed = seed;
  Rng rng(Rng::mix({seed, 0x76697369ull}));
  m.net.init(m.store, "enc", cfg, rng);
  m.fmu.init(m.store, "fmu", cfg.l_u, cfg.d, cfg.heads, cfg.ffn_mult, rng);
  return m;
}

EmbeddingMatrix encode_image(const VisionModel& model, const TextImage& img) {
  require(model.store.finite(), "numerical failure");
  Tape<float> t(&model.store, nullptr);
  const auto out = model.net.forward(t, img.pixels, /*frozen=*/true);
  EmbeddingMatrix e;
  e.values = t.val(out);
  e.role = Role::image;
  e.special = -1;
  require(e.values.allFinite(), "numerical failure");
  return e;
}

std::pair<EmbeddingMatrix, MatF> fmu_merge(const VisionModel& model, const EmbeddingMatrix& f_i) {
  require(f_i.values.cols() == model.cfg.d, "feature dim mismatch");
  Tape<float> t(&model.store, nullptr);
  const auto tokens = t.input_ref(&f_i.values);
  const auto [merged, attn] = model.fmu.forward(t, tokens, /*frozen=*/true);
  EmbeddingMatrix e;
  e.values = t.val(merged);
  e.role = Role::merged;
  require(e.values.allFinite(), "numerical failure");
  return {std::move(e), t.attention_weights(attn)};
}

EmbeddingMatrix baseline_merge(const EmbeddingMatrix& f_i, int l_u, MergeMode mode) {
  require(l_u >= 1, "l_u must be >= 1");
  const Eigen::Index l_i = f_i.values.rows();
  EmbeddingMatrix out;
  out.role = Role::merged;
  switch (mode) {
    case MergeMode::cut:
      require(l_i >= l_u, "cut needs at least l_u tokens");
      out.values = f_i.values.topRows(l_u);
      return out;
    case MergeMode::pool: {
      // AdaptiveAvgPool1d window semantics: [floor(j*L/l_u), ceil((j+1)*L/l_u)).
      out.values = MatF::Zero(l_u, f_i.values.cols());
      for (int j = 0; j < l_u; ++j) {
        const Eigen::Index start = (static_cast<Eigen::Index>(j) * l_i) / l_u;
        const Eigen::Index end =
            (static_cast<Eigen::Index>(j + 1) * l_i + l_u - 1) / l_u;
        for (Eigen::Index r = start; r < end; ++r) out.values.row(j) += f_i.values.row(r);
        out.values.row(j) /= static_cast<float>(end - start);
      }
      return out;
    }
    case MergeMode::none:
      out.values = f_i.values;
      return out;
    case MergeMode::fmu:
      break;
  }
  fail("baseline_merge handles cut/pool/none only");
}

std::vector<std::string> export_attention(const MatF& attn, const TextImage& img, int patch_h,
                                          int patch_w, const std::string& prefix) {
  require(attn.allFinite(), "non-finite attention");
  const int h = static_cast<int>(img.pixels.rows());
  const int w = static_cast<int>(img.pixels.cols());
  const int grid_h = h / patch_h;
  const int grid_w = w / patch_w;
  require(attn.cols() == static_cast<Eigen::Index>(grid_h) * grid_w,
          "attention columns must match the patch grid");
  std::vector<std::string> paths;
  for (Eigen::Index qi = 0; qi < attn.rows(); ++qi) {
    const float maxv = std::max(attn.row(qi).maxCoeff(), 1e-12f);
    MatF heat(h, w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const int p = (r / patch_h) * grid_w + (c / patch_w);
        heat(r, c) = attn(qi, p) / maxv;
      }
    }
    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), "_q%02d.pgm", static_cast<int>(qi));
    const std::string heat_path = prefix + suffix;
    write_pgm(heat_path, heat);
    paths.push_back(heat_path);

    std::snprintf(suffix, sizeof(suffix), "_q%02d_overlay.pgm", static_cast<int>(qi));
    const std::string overlay_path = prefix + suffix;
    const MatF overlay = 0.5f * img.pixels + 0.5f * heat;
    write_pgm(overlay_path, overlay);
    paths.push_back(overlay_path);
  }
  return paths;
}

}  // namespace dptr
