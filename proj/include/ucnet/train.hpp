#pragma once
// Pair-constrained training over cover/stego manifests: every batch holds
// each selected cover together with its own stego. SGD with momentum and
// step decay; per-epoch validation accuracy and P_E; the model snapshot with
// the best validation P_E is returned.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ucnet/channelrep.hpp"
#include "ucnet/jpeg.hpp"
#include "ucnet/metrics.hpp"
#include "ucnet/model.hpp"
#include "ucnet/ppm.hpp"
#include "ucnet/rng.hpp"

namespace ucnet {

struct PairRecord {
  std::string cover_path, stego_path;
  Domain domain = Domain::SpatialRgb;
  double alpha = 0.0;
  uint64_t seed = 0;
};

// Manifest line: cover<TAB>stego<TAB>domain<TAB>alpha<TAB>seed
inline std::vector<PairRecord> parse_manifest(const std::string& text) {
  std::vector<PairRecord> out;
  size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    size_t nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    start = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t fs = 0;
    while (true) {
      const size_t tab = line.find('\t', fs);
      fields.push_back(line.substr(fs, tab == std::string::npos ? tab : tab - fs));
      if (tab == std::string::npos) break;
      fs = tab + 1;
    }
    require(fields.size() == 5, Errc::bad_format,
            "manifest line " + std::to_string(line_no) + ": expected 5 tab-separated fields");
    PairRecord r;
    r.cover_path = fields[0];
    r.stego_path = fields[1];
    r.domain = domain_from_name(fields[2]);
    try {
      r.alpha = std::stod(fields[3]);
      r.seed = std::stoull(fields[4]);
    } catch (const std::exception&) {
      fail(Errc::bad_format, "manifest line " + std::to_string(line_no) + ": bad number");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<PairRecord> read_manifest(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

inline std::string manifest_line(const PairRecord& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", r.alpha);
  return r.cover_path + "\t" + r.stego_path + "\t" + domain_name(r.domain) + "\t" + buf + "\t" +
         std::to_string(r.seed);
}

inline ColorPlanes load_image_planes(const std::string& path, Domain domain) {
  if (domain == Domain::SpatialRgb) return split_rgb(read_ppm(path));
  return decompress_to_ycbcr(parse_jpeg(read_file_bytes(path)));
}

struct LoadedPair {
  ColorPlanes cover, stego;
};

// Loads and validates all pairs; parallel, slot-per-pair (deterministic).
inline std::vector<LoadedPair> load_pairs(const std::vector<PairRecord>& records, int workers) {
  require(!records.empty(), Errc::invalid_argument, "empty manifest");
  std::vector<LoadedPair> out(records.size());
  std::vector<std::string> errors(records.size());
  parallel_for(int(records.size()), workers, [&](int i) {
    try {
      const PairRecord& r = records[size_t(i)];
      out[size_t(i)].cover = load_image_planes(r.cover_path, r.domain);
      out[size_t(i)].stego = load_image_planes(r.stego_path, r.domain);
    } catch (const std::exception& e) {
      errors[size_t(i)] = e.what();
    }
  });
  for (size_t i = 0; i < records.size(); ++i)
    require(errors[i].empty(), Errc::io,
            "pair " + std::to_string(i) + " (" + records[i].cover_path + "): " + errors[i]);
  const int h = out[0].cover.height, w = out[0].cover.width;
  for (size_t i = 0; i < out.size(); ++i) {
    require(out[i].cover.height == h && out[i].cover.width == w &&
                out[i].stego.height == h && out[i].stego.width == w,
            Errc::invalid_argument, "pair " + std::to_string(i) + ": dimension mismatch");
    require(out[i].cover.domain == out[i].stego.domain, Errc::invalid_argument,
            "pair " + std::to_string(i) + ": domain mismatch");
  }
  return out;
}

struct TrainConfig {
  int epochs = 30;
  int batch_pairs = 16;  // batch = 2 * batch_pairs images
  double lr = 0.05;
  double momentum = 0.9;
  double lr_decay_factor = 0.5;
  int lr_decay_step = 10;  // epochs between decays
  uint64_t seed = 1;
  double eval_fraction = 0.2;
  int workers = 1;
  bool augment = false;
  bool verbose = false;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_pe = 0.0;
};

struct TrainResult {
  Model<float> model;
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val_pe = 1.0;
};

namespace traindetail {

inline void rot90_plane(Plane& p) {
  Plane out(p.w, p.h);
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x) out.at(x, p.h - 1 - y) = p.at(y, x);
  p = std::move(out);
}

inline void flip_plane(Plane& p) {
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w / 2; ++x) std::swap(p.at(y, x), p.at(y, p.w - 1 - x));
}

// Seeded flip/quarter-turn applied identically to both pair members so the
// pair alignment is never broken.
inline void augment_pair(LoadedPair& pair, uint64_t seed) {
  Rng rng(seed);
  const int quarter_turns = int(rng.below(4));
  const bool flip = rng.coin();
  for (auto* cp : {&pair.cover, &pair.stego}) {
    for (auto& plane : cp->planes) {
      for (int q = 0; q < quarter_turns; ++q) rot90_plane(plane);
      if (flip) flip_plane(plane);
    }
    cp->height = cp->planes[0].h;
    cp->width = cp->planes[0].w;
  }
}

// Momentum buffers mirroring the trainable parameters in visit order.
struct SgdState {
  std::vector<std::vector<float>> velocity;
};

inline void sgd_step(Model<float>& m, SgdState& state, double lr, double momentum) {
  size_t slot = 0;
  visit_params<float>(m, [&](const ParamRef<float>& p) {
    if (!p.trainable) return;
    if (state.velocity.size() <= slot) state.velocity.emplace_back(p.count, 0.0f);
    auto& vel = state.velocity[slot++];
    for (size_t i = 0; i < p.count; ++i) {
      vel[i] = float(momentum) * vel[i] - float(lr) * p.grad[i];
      p.data[i] += vel[i];
    }
  });
}

}  // namespace traindetail

// Channel representations for a list of images, stacked into a batch tensor.
inline Tensor<float> rep_batch(const std::vector<const ChannelRep*>& reps) {
  require(!reps.empty(), Errc::invalid_argument, "empty batch");
  const int h = reps[0]->h, w = reps[0]->w;
  Tensor<float> out(int(reps.size()), kRepPlanes, h, w);
  for (size_t i = 0; i < reps.size(); ++i) {
    require(reps[i]->h == h && reps[i]->w == w, Errc::invalid_argument,
            "batch images must share dimensions");
    std::copy(reps[i]->maps.begin(), reps[i]->maps.end(), out.plane(int(i), 0));
  }
  return out;
}

// Forward scores (stego-class probability) for a set of reps, EVAL mode.
inline std::vector<double> score_reps(Model<float>& m, const std::vector<ChannelRep>& reps,
                                      int batch_images, int workers) {
  std::vector<double> scores;
  scores.reserve(reps.size());
  for (size_t start = 0; start < reps.size(); start += size_t(batch_images)) {
    const size_t end = std::min(reps.size(), start + size_t(batch_images));
    std::vector<const ChannelRep*> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(&reps[i]);
    Tensor<float> x = rep_batch(batch);
    Tensor<float> logits =
        forward(m, x, Mode::Eval, static_cast<ForwardCache<float>*>(nullptr), workers);
    for (int n = 0; n < logits.n; ++n) {
      const double z0 = logits.at(n, 0, 0, 0), z1 = logits.at(n, 1, 0, 0);
      const double mx = std::max(z0, z1);
      const double e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
      scores.push_back(e1 / (e0 + e1));
    }
  }
  return scores;
}

inline TrainResult train(const std::vector<PairRecord>& records, const TrainConfig& tc,
                         const UcnetConfig& model_cfg) {
  require(records.size() >= 2, Errc::invalid_argument, "need at least 2 pairs to train");
  require(tc.lr > 0, Errc::invalid_argument, "lr must be > 0");
  require(tc.eval_fraction > 0 && tc.eval_fraction < 1, Errc::invalid_argument,
          "eval_fraction must be in (0, 1)");
  require(tc.batch_pairs >= 1 && tc.epochs >= 1, Errc::invalid_argument,
          "epochs and batch_pairs must be >= 1");
  for (const auto& r : records)
    require(r.domain == model_cfg.domain, Errc::invalid_argument,
            "manifest domain does not match model domain");
  validate_config(model_cfg);

  std::vector<LoadedPair> pairs = load_pairs(records, tc.workers);

  // Seeded train/validation split over pairs.
  std::vector<int> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  Rng split_rng(tc.seed);
  split_rng.shuffle(order);
  int n_val = int(std::lround(tc.eval_fraction * double(pairs.size())));
  n_val = std::max(1, std::min(n_val, int(pairs.size()) - 1));
  std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());

  const FilterBank bank = full_bank();
  const ResidualConfig rc{model_cfg.truncation_t, PadMode::Zero};

  // Without augmentation the representation of every image is fixed, so it is
  // computed once. With augmentation the planes change per epoch and reps are
  // rebuilt per batch.
  auto make_rep = [&](const ColorPlanes& cp) { return channel_representation(cp, bank, rc); };
  std::vector<ChannelRep> cover_reps(pairs.size()), stego_reps(pairs.size());
  if (!tc.augment) {
    parallel_for(int(pairs.size()), tc.workers, [&](int i) {
      cover_reps[size_t(i)] = make_rep(pairs[size_t(i)].cover);
      stego_reps[size_t(i)] = make_rep(pairs[size_t(i)].stego);
    });
  }

  std::vector<ChannelRep> val_reps;  // cover, stego per val pair
  std::vector<int> val_labels;
  if (!tc.augment) {
    for (int vi : val_idx) {
      val_reps.push_back(cover_reps[size_t(vi)]);
      val_labels.push_back(0);
      val_reps.push_back(stego_reps[size_t(vi)]);
      val_labels.push_back(1);
    }
  } else {
    for (int vi : val_idx) {
      val_reps.push_back(make_rep(pairs[size_t(vi)].cover));
      val_labels.push_back(0);
      val_reps.push_back(make_rep(pairs[size_t(vi)].stego));
      val_labels.push_back(1);
    }
  }

  Model<float> model = build_model<float>(model_cfg, tc.seed);
  traindetail::SgdState sgd;
  TrainResult result;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr =
        tc.lr * std::pow(tc.lr_decay_factor, double(epoch / std::max(1, tc.lr_decay_step)));

    std::vector<int> perm = train_idx;
    Rng epoch_rng(derive_seed(tc.seed, uint64_t(epoch) + 1));
    epoch_rng.shuffle(perm);

    double loss_sum = 0.0;
    long loss_items = 0;
    for (size_t start = 0; start < perm.size(); start += size_t(tc.batch_pairs)) {
      const size_t end = std::min(perm.size(), start + size_t(tc.batch_pairs));
      std::vector<ChannelRep> aug_reps;  // storage when augmenting
      std::vector<const ChannelRep*> batch;
      std::vector<int> labels;
      if (tc.augment) {
        aug_reps.reserve(2 * (end - start));
        for (size_t i = start; i < end; ++i) {
          LoadedPair p = pairs[size_t(perm[i])];
          traindetail::augment_pair(
              p, derive_seed(tc.seed, (uint64_t(epoch) << 24) ^ uint64_t(perm[i])));
          aug_reps.push_back(make_rep(p.cover));
          aug_reps.push_back(make_rep(p.stego));
        }
        for (const auto& r : aug_reps) batch.push_back(&r);
        for (size_t i = start; i < end; ++i) {
          labels.push_back(0);
          labels.push_back(1);
        }
      } else {
        for (size_t i = start; i < end; ++i) {
          batch.push_back(&cover_reps[size_t(perm[i])]);
          labels.push_back(0);
          batch.push_back(&stego_reps[size_t(perm[i])]);
          labels.push_back(1);
        }
      }

      Tensor<float> x = rep_batch(batch);
      ForwardCache<float> cache;
      Tensor<float> logits = forward(model, x, Mode::Train, &cache, tc.workers);
      SoftmaxLoss<float> sm = softmax_cross_entropy(logits, labels);
      backward(model, cache, sm.grad_logits, tc.workers);
      traindetail::sgd_step(model, sgd, lr, tc.momentum);

      loss_sum += double(sm.loss) * double(labels.size());
      loss_items += long(labels.size());
    }

    const std::vector<double> val_scores =
        score_reps(model, val_reps, 2 * tc.batch_pairs, tc.workers);
    std::vector<ItemScore> items;
    for (size_t i = 0; i < val_scores.size(); ++i)
      items.push_back({"", val_labels[i], val_scores[i]});
    const Metrics vm = metrics_from_items(std::move(items));

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_items ? loss_sum / double(loss_items) : 0.0;
    stats.val_accuracy = vm.accuracy;
    stats.val_pe = vm.p_e;
    result.history.push_back(stats);
    if (tc.verbose) {
      std::printf("epoch %3d lr %.5f loss %.5f val_acc %.4f val_pe %.4f\n", epoch, lr,
                  stats.train_loss, stats.val_accuracy, stats.val_pe);
      std::fflush(stdout);
    }

    if (result.best_epoch < 0 || stats.val_pe < result.best_val_pe) {
      result.best_epoch = epoch;
      result.best_val_pe = stats.val_pe;
      result.model = model;  // snapshot (parameters + BN running stats)
    }
  }
  return result;
}

// Scores every cover and stego in the manifest with the given model.
inline Metrics evaluate(Model<float>& model, const std::vector<PairRecord>& records,
                        int workers = 1, int batch_images = 32) {
  require(!records.empty(), Errc::invalid_argument, "empty manifest");
  for (const auto& r : records)
    require(r.domain == model.config.domain, Errc::invalid_argument,
            "manifest domain does not match model domain");
  std::vector<LoadedPair> pairs = load_pairs(records, workers);
  const FilterBank bank = full_bank();
  const ResidualConfig rc{model.config.truncation_t, PadMode::Zero};

  std::vector<ChannelRep> reps(2 * pairs.size());
  parallel_for(int(pairs.size()), workers, [&](int i) {
    reps[size_t(2 * i)] = channel_representation(pairs[size_t(i)].cover, bank, rc);
    reps[size_t(2 * i + 1)] = channel_representation(pairs[size_t(i)].stego, bank, rc);
  });
  const std::vector<double> scores = score_reps(model, reps, batch_images, workers);

  std::vector<ItemScore> items;
  for (size_t i = 0; i < pairs.size(); ++i) {
    items.push_back({records[i].cover_path, 0, scores[2 * i]});
    items.push_back({records[i].stego_path, 1, scores[2 * i + 1]});
  }
  return metrics_from_items(std::move(items));
}

}  // namespace ucnet
