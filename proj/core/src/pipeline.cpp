#include "dptr/pipeline.hpp"

#include "dptr/io.hpp"
#include "dptr/thread_pool.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace dptr {

namespace {

constexpr int kChunk = 8;

int resolve_threads(const TrainConfig& cfg) {
  return cfg.threads > 0 ? cfg.threads : default_thread_count();
}

// Decoder input ids (t_max+1), shifted classes and pad exclusion per row.
struct TargetRows {
  std::vector<int> input_ids;
  std::vector<int> classes;
  std::vector<std::uint8_t> use_row;
};

TargetRows target_rows(const TokenSeq& target, int t_max) {
  TargetRows out;
  out.input_ids.assign(target.ids.begin(), target.ids.begin() + t_max + 1);
  out.classes.resize(static_cast<size_t>(t_max) + 1, 0);
  out.use_row.resize(static_cast<size_t>(t_max) + 1, 0);
  for (int i = 0; i <= t_max; ++i) {
    const int tok = target.ids[static_cast<size_t>(i) + 1];
    if (tok == vocab::kPad) continue;
    out.classes[static_cast<size_t>(i)] = vocab::class_of_token(tok);
    out.use_row[static_cast<size_t>(i)] = 1;
  }
  return out;
}

// Per-sample mask set for the configured variant. parseq draws fresh
// permutations from rng; causal and cloze are fixed.
std::vector<AttentionMask> sample_masks(const TrainConfig& cfg, Rng& rng) {
  switch (cfg.variant) {
    case LossVariant::parseq:
      return build_mask(MaskKind::perm, cfg.max_len, cfg.k_masks, rng);
    case LossVariant::nrtr:
      return {causal_mask(cfg.max_len)};
    case LossVariant::cloze:
      return {cloze_mask(cfg.max_len)};
  }
  fail("unknown variant");
}

}  // namespace

FullModel FullModel::init(const TrainConfig& cfg, std::uint64_t seed) {
  FullModel m;
  m.cfg = cfg;
  m.seed = seed;
  Rng rng(Rng::mix({seed, 0x66756c6cull}));
  m.enc.init(m.store, "enc", VisionConfig::from_train_config(cfg), rng);
  m.fmu.init(m.store, "fmu", cfg.l_u, cfg.dims.feat_dim, cfg.dims.heads, cfg.dims.ffn_mult, rng);
  m.dec.init(m.store, "dec", DecoderConfig::from_train_config(cfg), rng);
  return m;
}

EmbeddingMatrix FullModel::encode_memory(const TextImage& img) const {
  Tape<float> t(&store, nullptr);
  const auto f_i = enc.forward(t, img.pixels, /*frozen=*/true);
  Tape<float>::Ref mem = f_i;
  switch (cfg.merge) {
    case MergeMode::fmu:
      mem = fmu.forward(t, f_i, /*frozen=*/true).first;
      break;
    case MergeMode::cut:
      mem = t.rows(f_i, 0, cfg.l_u);
      break;
    case MergeMode::pool:
      mem = t.pool_rows(f_i, cfg.l_u);
      break;
    case MergeMode::none:
      break;
  }
  EmbeddingMatrix e;
  e.values = t.val(mem);
  e.role = Role::merged;
  require(e.values.allFinite(), "numerical failure");
  return e;
}

DualEncoder train_dualenc(const DatasetManifest& manifest, const TrainConfig& cfg,
                          std::vector<double>* loss_curve) {
  // Cluttered entries only; the clean domain never enters contrastive
  // training so prompt embeddings align with the cluttered proxy.
  std::vector<TextImage> images;
  std::vector<TokenSeq> prompts;
  for (const auto& e : manifest.entries) {
    if (e.domain != Domain::cluttered) continue;
    TextImage img;
    img.pixels = read_pgm(e.path);
    img.label = e.label;
    img.domain = e.domain;
    images.push_back(std::move(img));
    prompts.push_back(tokenize_prompt(make_prompt(e.label), cfg.l_budget));
  }
  require(images.size() >= 2, "need at least two cluttered images");

  DualEncoder enc = DualEncoder::init(DualEncoderConfig::from_train_config(cfg), cfg.seed);
  ContrastiveTrainer trainer(enc, static_cast<float>(cfg.lr), resolve_threads(cfg));

  const int n = static_cast<int>(images.size());
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix({cfg.seed, 0x73687566ull, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start + 2 <= n; start += cfg.batch) {
      const int b = std::min(cfg.batch, n - start);
      if (b < 2) break;
      std::vector<const TextImage*> batch_images(static_cast<size_t>(b));
      std::vector<const TokenSeq*> batch_prompts(static_cast<size_t>(b));
      for (int i = 0; i < b; ++i) {
        const int idx = order[static_cast<size_t>(start + i)];
        batch_images[static_cast<size_t>(i)] = &images[static_cast<size_t>(idx)];
        batch_prompts[static_cast<size_t>(i)] = &prompts[static_cast<size_t>(idx)];
      }
      const double loss = trainer.step(batch_images, batch_prompts);
      require(std::isfinite(loss), "divergence at step " + std::to_string(step));
      epoch_loss += loss;
      ++batches;
      ++step;
    }
    if (loss_curve != nullptr && batches > 0) loss_curve->push_back(epoch_loss / batches);
  }
  return enc;
}

Decoder pretrain_decoder(const LabelCorpus& corpus, const DualEncoder& text_encoder,
                         const PerturbCache& cache, const TrainConfig& cfg,
                         std::vector<double>* loss_curve) {
  require(cfg.lambda >= 0.0, "lambda must be >= 0");
  const int n = static_cast<int>(corpus.labels.size());
  require(n >= 1, "empty corpus");
  require(cache.d == cfg.dims.feat_dim, "cache feature dim mismatch");

  // Frozen text encoder: encode every prompt once.
  std::vector<EmbeddingMatrix> f_t(static_cast<size_t>(n));
  std::vector<TargetRows> targets(static_cast<size_t>(n));
  {
    ThreadPool pool(resolve_threads(cfg));
    pool.run_indexed(n, [&](int i) {
      const std::string& label = corpus.labels[static_cast<size_t>(i)];
      f_t[static_cast<size_t>(i)] =
          text_encode(text_encoder, tokenize_prompt(make_prompt(label), cfg.l_budget));
      targets[static_cast<size_t>(i)] = target_rows(encode_target(label, cfg.max_len), cfg.max_len);
    });
  }

  Decoder dec = Decoder::init(DecoderConfig::from_train_config(cfg), cfg.seed);
  Adam<float> opt(dec.store, static_cast<float>(cfg.lr));
  ThreadPool pool(resolve_threads(cfg));
  const int n_chunks_max = (cfg.batch + kChunk - 1) / kChunk;
  std::vector<GradStore<float>> chunk_grads(static_cast<size_t>(n_chunks_max));
  for (auto& g : chunk_grads) g.reset(dec.store);

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix({cfg.seed, 0x70726573ull, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int b = std::min(cfg.batch, n - start);
      const int n_chunks = (b + kChunk - 1) / kChunk;
      std::vector<double> losses(static_cast<size_t>(b), 0.0);
      for (int c = 0; c < n_chunks; ++c) chunk_grads[static_cast<size_t>(c)].zero();
      pool.run_indexed(n_chunks, [&](int c) {
        GradStore<float>* grads = &chunk_grads[static_cast<size_t>(c)];
        for (int bi = c * kChunk; bi < std::min(b, (c + 1) * kChunk); ++bi) {
          const int pos = start + bi;
          const int idx = order[static_cast<size_t>(pos)];
          Rng rng_s(Rng::mix({cfg.seed, 0x70726531ull, static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(pos)}));
          const std::vector<AttentionMask> masks = sample_masks(cfg, rng_s);
          std::vector<const AttentionMask*> mask_ptrs;
          for (const auto& m : masks) mask_ptrs.push_back(&m);

          const EmbeddingMatrix f_p =
              perturb(f_t[static_cast<size_t>(idx)], cache, cfg.lambda, rng_s);
          Tape<float> t(&dec.store, grads);
          const auto mem = t.input_ref(&f_p.values);
          const TargetRows& rows = targets[static_cast<size_t>(idx)];
          const auto outs = dec.net.forward_multi(
              t, std::span<const int>(rows.input_ids), mask_ptrs, mem, /*frozen=*/false);
          Tape<float>::Ref loss = t.cross_entropy(outs[0], rows.classes, rows.use_row);
          for (size_t m = 1; m < outs.size(); ++m)
            loss = t.add(loss, t.cross_entropy(outs[m], rows.classes, rows.use_row));
          loss = t.scale(loss, 1.f / static_cast<float>(outs.size()));
          losses[static_cast<size_t>(bi)] = static_cast<double>(t.val(loss)(0, 0));
          t.backward(loss);
        }
      });
      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      batch_loss /= b;
      require(std::isfinite(batch_loss), "divergence at step " + std::to_string(step));
      GradStore<float>& total = chunk_grads[0];
      for (int c = 1; c < n_chunks; ++c) total.add(chunk_grads[static_cast<size_t>(c)]);
      total.scale(1.f / static_cast<float>(b));
      opt.step(dec.store, total);
      epoch_loss += batch_loss;
      ++batches;
      ++step;
    }
    if (loss_curve != nullptr && batches > 0) loss_curve->push_back(epoch_loss / batches);
  }
  require(dec.store.finite(), "numerical failure");
  return dec;
}

FullModel finetune(const DatasetManifest& manifest, const Decoder* decoder_init,
                   const TrainConfig& cfg, std::vector<double>* loss_curve) {
  const std::vector<int> train_idx = manifest.indices_of(Split::train);
  require(!train_idx.empty(), "empty split");
  if (cfg.merge == MergeMode::cut)
    require(cfg.n_patches() >= cfg.l_u, "cut needs at least l_u tokens");

  // Load the train split into memory.
  const int n = static_cast<int>(train_idx.size());
  std::vector<MatF> pixels(static_cast<size_t>(n));
  std::vector<TargetRows> targets(static_cast<size_t>(n));
  {
    ThreadPool pool(resolve_threads(cfg));
    pool.run_indexed(n, [&](int i) {
      const ManifestEntry& e =
          manifest.entries[static_cast<size_t>(train_idx[static_cast<size_t>(i)])];
      pixels[static_cast<size_t>(i)] = read_pgm(e.path);
      targets[static_cast<size_t>(i)] = target_rows(encode_target(e.label, cfg.max_len), cfg.max_len);
    });
  }

  FullModel model = FullModel::init(cfg, cfg.seed);
  if (decoder_init != nullptr)
    load_params_by_name(decoder_init->store, model.store, "dec.", "dec.");

  Adam<float> opt(model.store, static_cast<float>(cfg.lr));
  if (cfg.freeze_decoder) opt.freeze_prefix(model.store, "dec.");

  ThreadPool pool(resolve_threads(cfg));
  const int n_chunks_max = (cfg.batch + kChunk - 1) / kChunk;
  std::vector<GradStore<float>> chunk_grads(static_cast<size_t>(n_chunks_max));
  for (auto& g : chunk_grads) g.reset(model.store);

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix({cfg.seed, 0x66747368ull, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int b = std::min(cfg.batch, n - start);
      const int n_chunks = (b + kChunk - 1) / kChunk;
      std::vector<double> losses(static_cast<size_t>(b), 0.0);
      for (int c = 0; c < n_chunks; ++c) chunk_grads[static_cast<size_t>(c)].zero();
      pool.run_indexed(n_chunks, [&](int c) {
        GradStore<float>* grads = &chunk_grads[static_cast<size_t>(c)];
        for (int bi = c * kChunk; bi < std::min(b, (c + 1) * kChunk); ++bi) {
          const int pos = start + bi;
          const int idx = order[static_cast<size_t>(pos)];
          Rng rng_s(Rng::mix({cfg.seed, 0x66746531ull, static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(pos)}));
          const std::vector<AttentionMask> masks = sample_masks(cfg, rng_s);
          std::vector<const AttentionMask*> mask_ptrs;
          for (const auto& m : masks) mask_ptrs.push_back(&m);

          Tape<float> t(&model.store, grads);
          const auto f_i = model.enc.forward(t, pixels[static_cast<size_t>(idx)], false);
          Tape<float>::Ref mem = f_i;
          switch (cfg.merge) {
            case MergeMode::fmu:
              mem = model.fmu.forward(t, f_i, false).first;
              break;
            case MergeMode::cut:
              mem = t.rows(f_i, 0, cfg.l_u);
              break;
            case MergeMode::pool:
              mem = t.pool_rows(f_i, cfg.l_u);
              break;
            case MergeMode::none:
              break;
          }
          const TargetRows& rows = targets[static_cast<size_t>(idx)];
          const auto outs =
              model.dec.forward_multi(t, std::span<const int>(rows.input_ids), mask_ptrs, mem,
                                      /*frozen=*/cfg.freeze_decoder);
          Tape<float>::Ref loss = t.cross_entropy(outs[0], rows.classes, rows.use_row);
          for (size_t m = 1; m < outs.size(); ++m)
            loss = t.add(loss, t.cross_entropy(outs[m], rows.classes, rows.use_row));
          loss = t.scale(loss, 1.f / static_cast<float>(outs.size()));
          losses[static_cast<size_t>(bi)] = static_cast<double>(t.val(loss)(0, 0));
          t.backward(loss);
        }
      });
      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      batch_loss /= b;
      require(std::isfinite(batch_loss), "divergence at step " + std::to_string(step));
      GradStore<float>& total = chunk_grads[0];
      for (int c = 1; c < n_chunks; ++c) total.add(chunk_grads[static_cast<size_t>(c)]);
      total.scale(1.f / static_cast<float>(b));
      opt.step(model.store, total);
      epoch_loss += batch_loss;
      ++batches;
      ++step;
    }
    if (loss_curve != nullptr && batches > 0) loss_curve->push_back(epoch_loss / batches);
  }
  require(model.store.finite(), "numerical failure");
  return model;
}

EvalReport evaluate(const FullModel& model, const DatasetManifest& manifest, Split split,
                    std::vector<std::pair<std::string, std::string>>* predictions) {
  const std::vector<int> idx = manifest.indices_of(split);
  require(!idx.empty(), "empty split");
  const int n = static_cast<int>(idx.size());
  std::vector<std::string> preds(static_cast<size_t>(n));
  ThreadPool pool(resolve_threads(model.cfg));
  pool.run_indexed(n, [&](int i) {
    const ManifestEntry& e = manifest.entries[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    TextImage img;
    img.pixels = read_pgm(e.path);
    img.label = e.label;
    img.domain = e.domain;
    const EmbeddingMatrix mem = model.encode_memory(img);
    preds[static_cast<size_t>(i)] = greedy_decode(model.dec, model.store, mem, model.cfg.max_len);
  });
  EvalReport report;
  report.total = n;
  for (int i = 0; i < n; ++i) {
    const ManifestEntry& e = manifest.entries[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    std::string label = e.label;
    std::transform(label.begin(), label.end(), label.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (preds[static_cast<size_t>(i)] == label) ++report.correct;
    if (predictions != nullptr)
      predictions->emplace_back(e.label, preds[static_cast<size_t>(i)]);
  }
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total);
  report.config_hash = model.cfg.hash();
  return report;
}

Checkpoint to_checkpoint(const DualEncoder& enc, const TrainConfig& cfg,
                         const std::map<std::string, double>& metrics) {
  Checkpoint c;
  c.stage = "dualenc";
  c.seed = enc.seed;
  c.config_json = cfg.to_json();
  c.metrics = metrics;
  c.params = enc.store;
  return c;
}

Checkpoint to_checkpoint(const Decoder& dec, const TrainConfig& cfg,
                         const std::map<std::string, double>& metrics) {
  Checkpoint c;
  c.stage = "decoder";
  c.seed = dec.seed;
  c.config_json = cfg.to_json();
  c.metrics = metrics;
  c.params = dec.store;
  return c;
}

Checkpoint to_checkpoint(const FullModel& model, const std::map<std::string, double>& metrics) {
  Checkpoint c;
  c.stage = "full";
  c.seed = model.seed;
  c.config_json = model.cfg.to_json();
  c.metrics = metrics;
  c.params = model.store;
  return c;
}

DualEncoder dualenc_from_checkpoint(const Checkpoint& ckpt) {
  require(ckpt.stage == "dualenc", "not a dualenc checkpoint");
  const TrainConfig cfg = TrainConfig::from_json(ckpt.config_json);
  DualEncoder enc = DualEncoder::init(DualEncoderConfig::from_train_config(cfg), ckpt.seed);
  require(enc.store.size() == ckpt.params.size(), "tensor set mismatch");
  load_params_by_name(ckpt.params, enc.store);
  return enc;
}

Decoder decoder_from_checkpoint(const Checkpoint& ckpt) {
  require(ckpt.stage == "decoder", "not a decoder checkpoint");
  const TrainConfig cfg = TrainConfig::from_json(ckpt.config_json);
  Decoder dec = Decoder::init(DecoderConfig::from_train_config(cfg), ckpt.seed);
  require(dec.store.size() == ckpt.params.size(), "tensor set mismatch");
  load_params_by_name(ckpt.params, dec.store);
  return dec;
}

FullModel full_from_checkpoint(const Checkpoint& ckpt) {
  require(ckpt.stage == "full", "not a full checkpoint");
  const TrainConfig cfg = TrainConfig::from_json(ckpt.config_json);
  FullModel model = FullModel::init(cfg, ckpt.seed);
  require(model.store.size() == ckpt.params.size(), "tensor set mismatch");
  load_params_by_name(ckpt.params, model.store);
  return model;
}

namespace {

struct AblationRow {
  std::string setting;
  std::uint64_t seed = 0;
  std::string status = "ok";
  double acc_train = 0.0;
  double acc_test = 0.0;
};

void write_rows(std::ostream& csv, const std::vector<AblationRow>& rows) {
  csv << "setting,seed,status,acc_train,acc_test,acc_mean\n";
  csv << std::fixed << std::setprecision(6);
  std::map<std::string, std::vector<const AblationRow*>> by_setting;
  std::vector<std::string> setting_order;
  for (const auto& r : rows) {
    if (by_setting.find(r.setting) == by_setting.end()) setting_order.push_back(r.setting);
    by_setting[r.setting].push_back(&r);
    csv << r.setting << "," << r.seed << "," << r.status << ",";
    if (r.status == "ok")
      csv << r.acc_train << "," << r.acc_test << "," << (r.acc_train + r.acc_test) / 2.0;
    else
      csv << "nan,nan,nan";
    csv << "\n";
  }
  for (const std::string& s : setting_order) {
    double tr = 0, te = 0;
    int ok = 0;
    for (const AblationRow* r : by_setting[s]) {
      if (r->status != "ok") continue;
      tr += r->acc_train;
      te += r->acc_test;
      ++ok;
    }
    csv << s << ",mean,";
    if (ok > 0)
      csv << "ok," << tr / ok << "," << te / ok << "," << (tr + te) / (2.0 * ok);
    else
      csv << "error,nan,nan,nan";
    csv << "\n";
  }
}

}  // namespace

void run_ablation(const std::string& kind, const std::vector<std::string>& grid,
                  const TrainConfig& base, const AblationInputs& inputs, int n_seeds,
                  std::ostream& csv) {
  require(!grid.empty(), "empty grid");
  require(n_seeds >= 1, "need at least one seed");
  require(inputs.manifest != nullptr, "ablation needs a manifest");

  // Pre-trained decoders are deterministic in (kind-relevant config, seed),
  // so identical grid points share one training run.
  std::unordered_map<std::string, std::shared_ptr<Decoder>> memo;
  auto dptr_decoder = [&](const TrainConfig& cfg) {
    require(inputs.corpus != nullptr && inputs.text_encoder != nullptr && inputs.cache != nullptr,
            "ablation kind needs corpus, text encoder and cache");
    std::ostringstream key;
    key << "dptr:" << cfg.lambda << ":" << cfg.seed;
    auto it = memo.find(key.str());
    if (it != memo.end()) return it->second;
    auto dec = std::make_shared<Decoder>(
        pretrain_decoder(*inputs.corpus, *inputs.text_encoder, *inputs.cache, cfg));
    memo.emplace(key.str(), dec);
    return dec;
  };
  auto synth_decoder = [&](const TrainConfig& cfg) {
    require(inputs.clean_manifest != nullptr, "synth arm needs a clean manifest");
    std::ostringstream key;
    key << "synth:" << cfg.seed;
    auto it = memo.find(key.str());
    if (it != memo.end()) return it->second;
    const FullModel pre = finetune(*inputs.clean_manifest, nullptr, cfg);
    auto dec = std::make_shared<Decoder>(
        Decoder::init(DecoderConfig::from_train_config(cfg), cfg.seed));
    load_params_by_name(pre.store, dec->store, "dec.", "dec.");
    memo.emplace(key.str(), dec);
    return dec;
  };

  std::vector<AblationRow> rows;
  for (const std::string& setting : grid) {
    for (int s = 0; s < n_seeds; ++s) {
      AblationRow row;
      row.setting = setting;
      row.seed = base.seed + static_cast<std::uint64_t>(s);
      try {
        TrainConfig cfg = base;
        cfg.seed = row.seed;
        std::shared_ptr<Decoder> init;
        if (kind == "lambda") {
          cfg.lambda = std::stod(setting);
          init = dptr_decoder(cfg);
        } else if (kind == "l_u") {
          if (setting == "w/o") {
            cfg.merge = MergeMode::none;
          } else {
            cfg.l_u = std::stoi(setting);
          }
          init = dptr_decoder(cfg);
        } else if (kind == "merge") {
          cfg.merge = merge_from_string(setting);
          init = dptr_decoder(cfg);
        } else if (kind == "pretrain_source") {
          if (setting == "base") {
            init = nullptr;
          } else if (setting == "synth" || setting == "synth_freeze") {
            init = synth_decoder(cfg);
            cfg.freeze_decoder = setting == "synth_freeze";
          } else if (setting == "dptr" || setting == "dptr_freeze") {
            init = dptr_decoder(cfg);
            cfg.freeze_decoder = setting == "dptr_freeze";
          } else {
            fail("unknown pretrain_source: " + setting);
          }
        } else {
          fail("unknown ablation kind: " + kind);
        }
        const FullModel model = finetune(*inputs.manifest, init.get(), cfg);
        row.acc_train = evaluate(model, *inputs.manifest, Split::train).accuracy;
        row.acc_test = evaluate(model, *inputs.manifest, Split::test).accuracy;
      } catch (const std::exception& e) {
        row.status = std::string("error: ") + e.what();
        for (char& c : row.status)
          if (c == ',' || c == '\n') c = ';';
      }
      rows.push_back(std::move(row));
    }
  }
  write_rows(csv, rows);
}

SimilarityStudy similarity_study(const LabelCorpus& corpus, const DatasetManifest& clean,
                                 const DatasetManifest& cluttered, const DualEncoder& encoder,
                                 int threads) {
  std::unordered_map<std::string, std::vector<const ManifestEntry*>> clean_of, clut_of;
  for (const auto& e : clean.entries) clean_of[e.label].push_back(&e);
  for (const auto& e : cluttered.entries) clut_of[e.label].push_back(&e);

  const int n = static_cast<int>(corpus.labels.size());
  std::vector<double> scores(static_cast<size_t>(n), -1.0);  // -1 = skipped
  ThreadPool pool(threads > 0 ? threads : default_thread_count());
  pool.run_indexed(n, [&](int i) {
    const std::string& label = corpus.labels[static_cast<size_t>(i)];
    const auto ci = clean_of.find(label);
    const auto ui = clut_of.find(label);
    if (ci == clean_of.end() || ui == clut_of.end()) return;
    const EmbeddingMatrix text =
        text_encode(encoder, tokenize_prompt(make_prompt(label), encoder.cfg.l_t - 1));
    std::vector<EmbeddingMatrix> embs;
    std::vector<int> groups;
    for (const ManifestEntry* e : ci->second) {
      TextImage img;
      img.pixels = read_pgm(e->path);
      embs.push_back(image_encode(encoder, img));
      groups.push_back(0);
    }
    for (const ManifestEntry* e : ui->second) {
      TextImage img;
      img.pixels = read_pgm(e->path);
      embs.push_back(image_encode(encoder, img));
      groups.push_back(1);
    }
    std::vector<const EmbeddingMatrix*> ptrs;
    for (const auto& e : embs) ptrs.push_back(&e);
    scores[static_cast<size_t>(i)] = similarity_probe(text, ptrs, groups, 2)[1];
  });

  SimilarityStudy study;
  study.histogram.assign(20, 0);
  int above = 0;
  for (double s : scores) {
    if (s < 0.0) {
      ++study.skipped;
      continue;
    }
    ++study.labels_used;
    study.scores.push_back(s);
    const int bin = std::min(19, static_cast<int>(s * 20.0));
    ++study.histogram[static_cast<size_t>(bin)];
    if (s > 0.5) ++above;
  }
  require(study.labels_used > 0, "degenerate sample");
  study.fraction = static_cast<double>(above) / study.labels_used;
  return study;
}

void write_similarity_csv(const SimilarityStudy& study, const std::string& path) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count\n" << std::fixed << std::setprecision(2);
  for (size_t b = 0; b < study.histogram.size(); ++b) {
    out << (0.05 * static_cast<double>(b)) << "," << (0.05 * static_cast<double>(b + 1)) << ","
        << study.histogram[b] << "\n";
  }
  atomic_write(path, out.str());
}

}  // namespace dptr
