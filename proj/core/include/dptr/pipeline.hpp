#pragma once

#include "dptr/checkpoint.hpp"
#include "dptr/config.hpp"
#include "dptr/corpus.hpp"
#include "dptr/dualenc.hpp"
#include "dptr/perturb.hpp"
#include "dptr/render.hpp"
#include "dptr/strdec.hpp"
#include "dptr/vision.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dptr {

struct EvalReport {
  double accuracy = 0.0;  // correct / total, exact
  int correct = 0;
  int total = 0;
  std::string config_hash;
};

// Recognizer: vision encoder + merge stage + decoder in one parameter store
// (prefixes enc. / fmu. / dec.).
struct FullModel {
  TrainConfig cfg;
  ParamStore<float> store;
  VisionNet<float> enc;
  FmuNet<float> fmu;
  DecoderNet<float> dec;
  std::uint64_t seed = 0;

  static FullModel init(const TrainConfig& cfg, std::uint64_t seed);

  // Runs encoder + merge on one image; returns the decoder memory.
  EmbeddingMatrix encode_memory(const TextImage& img) const;
};

// Trains the dual encoder contrastively on the cluttered entries of the
// manifest (the clean domain is held out by design). Returns per-epoch mean
// losses through *loss_curve when non-null.
DualEncoder train_dualenc(const DatasetManifest& manifest, const TrainConfig& cfg,
                          std::vector<double>* loss_curve = nullptr);

// Text-only decoder pre-training: F_t from the frozen text encoder, ORP at
// cfg.lambda, masked decoding, cross entropy on the shifted target. Only
// decoder parameters move. Aborts with the failing step index on divergence.
Decoder pretrain_decoder(const LabelCorpus& corpus, const DualEncoder& text_encoder,
                         const PerturbCache& cache, const TrainConfig& cfg,
                         std::vector<double>* loss_curve = nullptr);

// Encoder + FMU from random init; decoder from `decoder_init` when given
// (pre-trained route) or random otherwise. freeze_decoder pins every dec.*
// tensor. ORP is not applied here.
FullModel finetune(const DatasetManifest& manifest, const Decoder* decoder_init,
                   const TrainConfig& cfg, std::vector<double>* loss_curve = nullptr);

// Greedy decoding + exact case-insensitive match over one split.
// When predictions != nullptr it receives (label, prediction) pairs.
EvalReport evaluate(const FullModel& model, const DatasetManifest& manifest, Split split,
                    std::vector<std::pair<std::string, std::string>>* predictions = nullptr);

// Checkpoint adapters.
Checkpoint to_checkpoint(const DualEncoder& enc, const TrainConfig& cfg,
                         const std::map<std::string, double>& metrics);
Checkpoint to_checkpoint(const Decoder& dec, const TrainConfig& cfg,
                         const std::map<std::string, double>& metrics);
Checkpoint to_checkpoint(const FullModel& model, const std::map<std::string, double>& metrics);
DualEncoder dualenc_from_checkpoint(const Checkpoint& ckpt);
Decoder decoder_from_checkpoint(const Checkpoint& ckpt);
FullModel full_from_checkpoint(const Checkpoint& ckpt);

// Everything an ablation sweep may need; unused members may stay null for
// kinds that do not touch them.
struct AblationInputs {
  const LabelCorpus* corpus = nullptr;
  const DualEncoder* text_encoder = nullptr;
  const PerturbCache* cache = nullptr;
  const DatasetManifest* manifest = nullptr;        // cluttered train/test
  const DatasetManifest* clean_manifest = nullptr;  // synth pre-training arm
};

// kind: lambda | l_u | merge | pretrain_source. Each grid point runs
// pre-training (where applicable) + fine-tuning + evaluation for n_seeds
// seeds (base.seed, base.seed+1, ...). Failures are recorded per row and the
// sweep continues. Emits CSV: setting,seed,status,acc_train,acc_test plus a
// mean row per setting.
void run_ablation(const std::string& kind, const std::vector<std::string>& grid,
                  const TrainConfig& base, const AblationInputs& inputs, int n_seeds,
                  std::ostream& csv);

struct SimilarityStudy {
  double fraction = 0.0;  // labels whose cluttered score > 0.5
  int labels_used = 0;
  int skipped = 0;                  // labels missing a domain
  std::vector<int> histogram;       // 20 bins over the cluttered score
  std::vector<double> scores;       // per used label
};

// Per label: similarity probe over its clean vs cluttered images using raw
// [EOS]x[CLS] dot products, softmax over the two domain sums.
SimilarityStudy similarity_study(const LabelCorpus& corpus, const DatasetManifest& clean,
                                 const DatasetManifest& cluttered, const DualEncoder& encoder,
                                 int threads = 0);

void write_similarity_csv(const SimilarityStudy& study, const std::string& path);

}  // namespace dptr
