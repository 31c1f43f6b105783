#include "ucnet/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "ucnet/stegosim.hpp"
#include "ucnet/texture.hpp"

using namespace ucnet;
namespace fs = std::filesystem;

namespace {

// Brute-force P_E: every midpoint between sorted scores plus both extremes,
// same candidate-value formula as the implementation so equality is exact.
double pe_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  size_t nc = 0, ns = 0;
  for (int l : labels) (l == 0 ? nc : ns)++;
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);  // flag nothing
  thresholds.insert(thresholds.begin(), thresholds.front() - 1.0);  // flag everything
  double best = 1.0;
  for (const double t : thresholds) {
    size_t fa = 0, md = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      const bool flagged = scores[i] >= t;
      if (labels[i] == 0 && flagged) ++fa;
      if (labels[i] == 1 && !flagged) ++md;
    }
    best = std::min(best, 0.5 * (double(fa) / double(nc) + double(md) / double(ns)));
  }
  return best;
}

struct TempTree {
  fs::path root;
  explicit TempTree(const std::string& tag) {
    root = fs::temp_directory_path() / (tag + "_" + std::to_string(::getpid()));
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
  std::string path(const std::string& name) const { return (root / name).string(); }
};

std::vector<PairRecord> make_spatial_dataset(const TempTree& tree, int pairs, int size,
                                             double beta, uint64_t seed) {
  std::vector<PairRecord> records;
  for (int i = 0; i < pairs; ++i) {
    const Image8 cover = synth_textured_cover(size, size, derive_seed(seed, uint64_t(i)));
    const std::string cover_path = tree.path("c" + std::to_string(i) + ".ppm");
    write_ppm(cover, cover_path);
    const EmbedSpec spec = embed_spec_from_beta(beta, derive_seed(seed ^ 0xFFFF, uint64_t(i)));
    const ColorPlanes stego = lsbm_embed(split_rgb(cover), spec);
    Image8 stego_img(size, size, 3);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c)
          stego_img.at(y, x, c) = uint8_t(std::lround(stego.planes[size_t(c)].at(y, x)));
    const std::string stego_path = tree.path("s" + std::to_string(i) + ".ppm");
    write_ppm(stego_img, stego_path);
    records.push_back({cover_path, stego_path, Domain::SpatialRgb, spec.payload_alpha, spec.seed});
  }
  return records;
}

UcnetConfig micro_config() {
  UcnetConfig cfg;
  cfg.stem_width = 8;
  cfg.stages = {{LayerKind::Type3, 8, 8, 2}, {LayerKind::Type2, 8, 16, 1}};
  return cfg;
}

}  // namespace

TEST(Pe, TrivialCases) {
  EXPECT_DOUBLE_EQ(p_e({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(p_e({0.5, 0.5, 0.5, 0.5}, {0, 0, 1, 1}), 0.5);
  EXPECT_DOUBLE_EQ(p_e({0.9, 0.1}, {0, 1}), 0.5);  // perfectly inverted, 1 pair
}

TEST(Pe, RejectsSingleClass) {
  EXPECT_THROW(p_e({0.1, 0.2}, {0, 0}), Error);
  EXPECT_THROW(p_e({0.1, 0.2}, {1, 1}), Error);
  EXPECT_THROW(p_e({0.1}, {2}), Error);
}

TEST(Pe, MatchesExhaustiveOracle) {
  Rng rng(100);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + int(rng.below(19));
    std::vector<double> scores;
    std::vector<int> labels = {0, 1};  // both classes present
    scores.push_back(rng.uniform01());
    scores.push_back(rng.uniform01());
    for (int i = 2; i < n; ++i) {
      // Quantized scores provoke ties.
      scores.push_back(double(rng.below(8)) / 8.0);
      labels.push_back(int(rng.below(2)));
    }
    ASSERT_EQ(p_e(scores, labels), pe_oracle(scores, labels)) << "trial " << trial;
  }
}

TEST(Pe, InvariantUnderMonotoneTransformAndBounded) {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const int pairs = 2 + int(rng.below(15));
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < pairs; ++i) {
      scores.push_back(rng.uniform01());
      labels.push_back(0);
      scores.push_back(rng.uniform01());
      labels.push_back(1);
    }
    const double base = p_e(scores, labels);
    EXPECT_LE(base, 0.5 + 1.0 / double(scores.size()));
    std::vector<double> warped = scores;
    for (auto& s : warped) s = std::exp(3.0 * s) - 0.5;  // strictly monotone
    EXPECT_DOUBLE_EQ(p_e(warped, labels), base);
  }
}

TEST(Metrics, PerfectSeparationAndSinglePair) {
  Metrics m = metrics_from_items({{"c", 0, 0.1}, {"s", 1, 0.9}});
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.p_e, 0.0);
  EXPECT_EQ(m.tp, 1);
  EXPECT_EQ(m.tn, 1);
  const std::string report = metrics_report(m);
  EXPECT_NE(report.find("accuracy=1.000000"), std::string::npos);
  EXPECT_NE(report.find("p_e=0.000000"), std::string::npos);
  EXPECT_NE(report.find("item\tc\t0\t"), std::string::npos);
}

TEST(Metrics, LabelIndependentScoresGiveHalfPe) {
  Rng rng(102);
  std::vector<ItemScore> items;
  for (int i = 0; i < 2000; ++i) items.push_back({"", i % 2, rng.uniform01()});
  const Metrics m = metrics_from_items(std::move(items));
  EXPECT_NEAR(m.p_e, 0.5, 0.05);
  EXPECT_NEAR(m.accuracy, 0.5, 0.05);
}

TEST(Manifest, RoundTripAndErrors) {
  const PairRecord r{"a/cover.ppm", "b/stego.ppm", Domain::JpegYcbcr, 0.4, 12345};
  const auto parsed = parse_manifest(manifest_line(r) + "\n");
  ASSERT_EQ(parsed.size(), 1u);
  EXPECT_EQ(parsed[0].cover_path, r.cover_path);
  EXPECT_EQ(parsed[0].stego_path, r.stego_path);
  EXPECT_EQ(parsed[0].domain, r.domain);
  EXPECT_DOUBLE_EQ(parsed[0].alpha, r.alpha);
  EXPECT_EQ(parsed[0].seed, r.seed);

  EXPECT_THROW(parse_manifest("only\tthree\tfields\n"), Error);
  EXPECT_THROW(parse_manifest("a\tb\tbaddomain\t0.4\t1\n"), Error);
  EXPECT_THROW(parse_manifest("a\tb\tspatial\tnotanumber\t1\n"), Error);
}

TEST(Train, DeterministicAcrossRuns) {
  TempTree tree("ucnet_det");
  const auto records = make_spatial_dataset(tree, 8, 32, 0.25, 41);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_pairs = 2;
  tc.lr = 0.02;
  tc.seed = 5;
  tc.workers = 1;
  const TrainResult a = train(records, tc, micro_config());
  const TrainResult b = train(records, tc, micro_config());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_accuracy, b.history[i].val_accuracy);
    EXPECT_EQ(a.history[i].val_pe, b.history[i].val_pe);
  }
  const std::string pa = tree.path("a.ckpt"), pb = tree.path("b.ckpt");
  Model<float> ma = a.model, mb = b.model;
  save_checkpoint(ma, pa);
  save_checkpoint(mb, pb);
  EXPECT_EQ(read_file_bytes(pa), read_file_bytes(pb));
}

TEST(Train, WorkerCountDoesNotChangeHistory) {
  TempTree tree("ucnet_workers");
  const auto records = make_spatial_dataset(tree, 6, 32, 0.25, 43);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_pairs = 3;
  tc.lr = 0.02;
  tc.seed = 9;
  tc.workers = 1;
  const TrainResult a = train(records, tc, micro_config());
  tc.workers = 4;
  const TrainResult b = train(records, tc, micro_config());
  for (size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_pe, b.history[i].val_pe);
  }
}

TEST(Train, BestModelHasMinimalValPe) {
  TempTree tree("ucnet_best");
  const auto records = make_spatial_dataset(tree, 8, 32, 0.3, 44);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_pairs = 2;
  tc.lr = 0.03;
  tc.seed = 2;
  const TrainResult r = train(records, tc, micro_config());
  double min_pe = 1.0;
  for (const auto& h : r.history) min_pe = std::min(min_pe, h.val_pe);
  EXPECT_EQ(r.best_val_pe, min_pe);
  EXPECT_EQ(r.history[size_t(r.best_epoch)].val_pe, min_pe);
}

TEST(Train, IdenticalCoverStegoStaysAtChance) {
  TempTree tree("ucnet_beta0");
  const auto records = make_spatial_dataset(tree, 10, 32, 0.0, 45);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_pairs = 2;
  tc.lr = 0.02;
  tc.seed = 3;
  const TrainResult r = train(records, tc, micro_config());
  for (const auto& h : r.history) {
    // Identical pair members score identically: exactly one of the two is
    // right at any threshold.
    EXPECT_NEAR(h.val_accuracy, 0.5, 0.1);
    EXPECT_TRUE(std::isfinite(h.train_loss));
  }
}

TEST(Train, RejectsBadInputs) {
  TempTree tree("ucnet_bad");
  const auto records = make_spatial_dataset(tree, 2, 32, 0.2, 46);
  TrainConfig tc;
  EXPECT_THROW(train({}, tc, micro_config()), Error);
  EXPECT_THROW(train({records[0]}, tc, micro_config()), Error);
  std::vector<PairRecord> missing = records;
  missing[0].cover_path = tree.path("nope.ppm");
  EXPECT_THROW(train(missing, tc, micro_config()), Error);
  UcnetConfig wrong_domain = micro_config();
  wrong_domain.domain = Domain::JpegYcbcr;
  EXPECT_THROW(train(records, tc, wrong_domain), Error);
}

TEST(Train, AugmentationKeepsPairsAlignedAndLearns) {
  TempTree tree("ucnet_aug");
  const auto records = make_spatial_dataset(tree, 8, 32, 0.3, 47);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_pairs = 2;
  tc.lr = 0.02;
  tc.seed = 4;
  tc.augment = true;
  const TrainResult r = train(records, tc, micro_config());
  for (const auto& h : r.history) EXPECT_TRUE(std::isfinite(h.train_loss));
}

TEST(Evaluate, ScoresEveryItemAndMatchesManifestOrder) {
  TempTree tree("ucnet_eval");
  const auto records = make_spatial_dataset(tree, 4, 32, 0.25, 48);
  Model<float> m = build_model<float>(micro_config(), 6);
  const Metrics metrics = evaluate(m, records, 2);
  ASSERT_EQ(metrics.items.size(), 8u);
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(metrics.items[2 * i].path, records[i].cover_path);
    EXPECT_EQ(metrics.items[2 * i].label, 0);
    EXPECT_EQ(metrics.items[2 * i + 1].path, records[i].stego_path);
    EXPECT_EQ(metrics.items[2 * i + 1].label, 1);
    EXPECT_GE(metrics.items[2 * i].score, 0.0);
    EXPECT_LE(metrics.items[2 * i].score, 1.0);
  }
  EXPECT_EQ(metrics.tp + metrics.fp + metrics.tn + metrics.fn, 8);
}
