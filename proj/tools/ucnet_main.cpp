// Command-line entry point: gen-filters, simulate, preprocess, train, eval,
// info. Every run prints its resolved configuration; all randomness is
// controlled by --seed; errors map to distinct exit codes (see --help).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ucnet/channelrep.hpp"
#include "ucnet/container.hpp"
#include "ucnet/filterbank.hpp"
#include "ucnet/jpeg.hpp"
#include "ucnet/model.hpp"
#include "ucnet/ppm.hpp"
#include "ucnet/stegosim.hpp"
#include "ucnet/train.hpp"

namespace fs = std::filesystem;
using namespace ucnet;

namespace {

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return 3;
    case Errc::io: return 4;
    case Errc::bad_format: return 5;
    case Errc::jpeg_progressive:
    case Errc::jpeg_arithmetic:
    case Errc::jpeg_unsupported: return 6;
    case Errc::jpeg_truncated: return 7;
    case Errc::jpeg_bad_marker: return 8;
    case Errc::config_mismatch: return 9;
    case Errc::digest_mismatch: return 10;
  }
  return 1;
}

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0 success           2 bad usage          3 invalid argument\n"
    "  4 I/O error          5 bad file format    6 unsupported JPEG feature\n"
    "  7 truncated JPEG     8 bad JPEG marker    9 config mismatch\n"
    "  10 digest mismatch   1 unexpected error\n";

void print_config(const std::string& sub,
                  const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string line = "config: subcommand=" + sub;
  for (const auto& [k, v] : kv) line += " " + k + "=" + v;
  std::puts(line.c_str());
}

std::vector<std::string> list_covers(const std::string& dir, Domain domain) {
  require(fs::is_directory(dir), Errc::io, "cover directory not found: " + dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    const bool spatial = ext == ".ppm";
    const bool jpeg = ext == ".jpg" || ext == ".jpeg";
    if ((domain == Domain::SpatialRgb && spatial) || (domain == Domain::JpegYcbcr && jpeg))
      names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  require(!names.empty(), Errc::invalid_argument,
          "no covers with the expected extension in " + dir);
  return names;
}

Image8 planes_to_image(const ColorPlanes& cp) {
  Image8 img(cp.height, cp.width, 3);
  for (int y = 0; y < cp.height; ++y)
    for (int x = 0; x < cp.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const long v = std::lround(cp.planes[size_t(c)].at(y, x));
        require(v >= 0 && v <= 255, Errc::invalid_argument, "plane value out of 8-bit range");
        img.at(y, x, c) = uint8_t(v);
      }
  return img;
}

int cmd_gen_filters(const std::string& out_path) {
  print_config("gen-filters", {{"out", out_path}});
  std::ostringstream ss;
  write_filter_bank_text(ss, full_bank());
  const std::string text = ss.str();
  write_file_bytes(out_path, std::vector<uint8_t>(text.begin(), text.end()));
  std::printf("wrote %s (62 kernels)\n", out_path.c_str());
  return 0;
}

int cmd_simulate(const std::string& cover_dir, const std::string& domain_str, double alpha,
                 uint64_t seed, const std::string& out_dir, const std::string& manifest_path) {
  print_config("simulate", {{"cover_dir", cover_dir},
                            {"domain", domain_str},
                            {"alpha", std::to_string(alpha)},
                            {"seed", std::to_string(seed)},
                            {"out_dir", out_dir},
                            {"manifest", manifest_path}});
  const Domain domain = domain_from_name(domain_str);
  const auto names = list_covers(cover_dir, domain);
  fs::create_directories(out_dir);

  std::string manifest;
  for (size_t i = 0; i < names.size(); ++i) {
    const std::string cover_path = (fs::path(cover_dir) / names[i]).string();
    const std::string stego_path = (fs::path(out_dir) / names[i]).string();
    const EmbedSpec spec = embed_spec_from_alpha(alpha, derive_seed(seed, i));
    if (domain == Domain::SpatialRgb) {
      const ColorPlanes cover = split_rgb(read_ppm(cover_path));
      write_ppm(planes_to_image(lsbm_embed(cover, spec)), stego_path);
    } else {
      const JpegImage cover = parse_jpeg(read_file_bytes(cover_path));
      write_file_bytes(stego_path, serialize_jpeg(jpeg_embed(cover, spec)));
    }
    PairRecord r{cover_path, stego_path, domain, alpha, spec.seed};
    manifest += manifest_line(r) + "\n";
  }
  write_file_bytes(manifest_path, std::vector<uint8_t>(manifest.begin(), manifest.end()));
  std::printf("simulated %zu pairs (beta=%.6f), manifest: %s\n", names.size(),
              inverse_ternary_entropy(alpha), manifest_path.c_str());
  return 0;
}

int cmd_preprocess(const std::string& in_path, const std::string& domain_str,
                   const std::string& out_path, double truncation, const std::string& pad) {
  print_config("preprocess", {{"in", in_path},
                              {"domain", domain_str},
                              {"out", out_path},
                              {"truncation", std::to_string(truncation)},
                              {"pad", pad}});
  const Domain domain = domain_from_name(domain_str);
  require(pad == "zero" || pad == "reflect", Errc::invalid_argument, "pad must be zero|reflect");
  const ResidualConfig rc{truncation, pad == "zero" ? PadMode::Zero : PadMode::Reflect};
  const ColorPlanes cp = load_image_planes(in_path, domain);
  const ChannelRep rep = channel_representation(cp, full_bank(), rc);

  Container c;
  char tbuf[32];
  std::snprintf(tbuf, sizeof tbuf, "%.9g", truncation);
  c.config = {{"kind", "channelrep"},
              {"domain", domain_name(domain)},
              {"truncation_t", tbuf},
              {"pad", pad}};
  TensorRecord t;
  t.name = "channelrep";
  t.dims = {uint32_t(kRepPlanes), uint32_t(rep.h), uint32_t(rep.w)};
  t.data = rep.maps;
  c.tensors.push_back(std::move(t));
  write_container(out_path, c);
  std::printf("wrote %s (%d planes of %dx%d)\n", out_path.c_str(), kRepPlanes, rep.h, rep.w);
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& model_out, TrainConfig tc) {
  print_config("train", {{"manifest", manifest_path},
                         {"model_out", model_out},
                         {"epochs", std::to_string(tc.epochs)},
                         {"batch_pairs", std::to_string(tc.batch_pairs)},
                         {"lr", std::to_string(tc.lr)},
                         {"momentum", std::to_string(tc.momentum)},
                         {"lr_decay_factor", std::to_string(tc.lr_decay_factor)},
                         {"lr_decay_step", std::to_string(tc.lr_decay_step)},
                         {"eval_fraction", std::to_string(tc.eval_fraction)},
                         {"seed", std::to_string(tc.seed)},
                         {"workers", std::to_string(tc.workers)},
                         {"augment", tc.augment ? "1" : "0"}});
  const auto records = read_manifest(manifest_path);
  require(!records.empty(), Errc::invalid_argument, "manifest is empty: " + manifest_path);
  const Domain domain = records[0].domain;
  for (const auto& r : records)
    require(r.domain == domain, Errc::invalid_argument, "manifest mixes domains");
  tc.verbose = true;
  const UcnetConfig cfg = desk_config(domain);
  TrainResult result = train(records, tc, cfg);
  save_checkpoint(result.model, model_out);
  std::printf("best epoch %d (val P_E %.4f), checkpoint: %s\n", result.best_epoch,
              result.best_val_pe, model_out.c_str());
  return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& model_path,
             const std::string& report_path, int workers) {
  print_config("eval", {{"manifest", manifest_path},
                        {"model", model_path},
                        {"report", report_path},
                        {"workers", std::to_string(workers)}});
  const auto records = read_manifest(manifest_path);
  require(!records.empty(), Errc::invalid_argument, "manifest is empty: " + manifest_path);
  Model<float> model = load_checkpoint(model_path);
  const Metrics m = evaluate(model, records, workers);
  const std::string report = metrics_report(m);
  write_file_bytes(report_path, std::vector<uint8_t>(report.begin(), report.end()));
  std::printf("accuracy=%.4f p_e=%.4f (report: %s)\n", m.accuracy, m.p_e, report_path.c_str());
  return 0;
}

int cmd_info(const std::string& jpeg_path, const std::string& model_path) {
  require(jpeg_path.empty() != model_path.empty(), Errc::invalid_argument,
          "info needs exactly one of --jpeg or --model");
  if (!jpeg_path.empty()) {
    print_config("info", {{"jpeg", jpeg_path}});
    const JpegImage j = parse_jpeg(read_file_bytes(jpeg_path));
    std::printf("dimensions: %dx%d\ncomponents: %d\n", j.width, j.height, j.num_components());
    for (int c = 0; c < j.num_components(); ++c) {
      const auto& comp = j.components[size_t(c)];
      std::printf("component %d: id=%d sampling=%dx%d quant_table=%d blocks=%dx%d\n", c,
                  comp.id, comp.h_samp, comp.v_samp, comp.quant_idx, comp.blocks_w,
                  comp.blocks_h);
    }
    for (int t = 0; t < 4; ++t)
      if (j.quant_present[size_t(t)])
        std::printf("quant table %d digest: %016llx\n", t,
                    (unsigned long long)quant_table_digest(j.quant_tables[size_t(t)]));
  } else {
    print_config("info", {{"model", model_path}});
    Model<float> m = load_checkpoint(model_path);
    std::printf("domain: %s\ntruncation_t: %g\nstem_width: %d\nstages: %s\nclasses: %d\n",
                domain_name(m.config.domain), m.config.truncation_t, m.config.stem_width,
                stages_to_string(m.config.stages).c_str(), m.config.classes);
    std::printf("trainable parameters: %zu\n", param_count(m));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Color-image steganalysis toolkit"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  // gen-filters
  auto* gen = app.add_subcommand("gen-filters", "Export the 62 fixed high-pass kernels");
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output text file")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Embed a payload into every cover in a directory");
  std::string sim_cover_dir, sim_domain, sim_out_dir, sim_manifest;
  double sim_alpha = 0.0;
  uint64_t sim_seed = 1;
  sim->add_option("--cover-dir", sim_cover_dir, "Directory of covers (.ppm or .jpg)")->required();
  sim->add_option("--domain", sim_domain, "spatial|jpeg")->required();
  sim->add_option("--alpha", sim_alpha, "Payload (bpp / bpnzac)")->required();
  sim->add_option("--seed", sim_seed, "Base seed");
  sim->add_option("--out-dir", sim_out_dir, "Stego output directory")->required();
  sim->add_option("--manifest", sim_manifest, "Manifest output path")->required();

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Write the 186-plane channel representation");
  std::string pre_in, pre_domain, pre_out, pre_pad = "zero";
  double pre_trunc = 3.0;
  pre->add_option("--in", pre_in, "Input image")->required();
  pre->add_option("--domain", pre_domain, "spatial|jpeg")->required();
  pre->add_option("--out", pre_out, "Output container path")->required();
  pre->add_option("--truncation", pre_trunc, "Residual clamp bound T");
  pre->add_option("--pad", pre_pad, "zero|reflect");

  // train
  auto* tr = app.add_subcommand("train", "Train a detector on a cover/stego manifest");
  std::string tr_manifest, tr_model_out;
  TrainConfig tc;
  tr->add_option("--manifest", tr_manifest, "Manifest path")->required();
  tr->add_option("--model-out", tr_model_out, "Checkpoint output path")->required();
  tr->add_option("--epochs", tc.epochs, "Training epochs");
  tr->add_option("--batch-pairs", tc.batch_pairs, "Pairs per batch (batch = 2x images)");
  tr->add_option("--lr", tc.lr, "Initial learning rate");
  tr->add_option("--momentum", tc.momentum, "SGD momentum");
  tr->add_option("--lr-decay-factor", tc.lr_decay_factor, "Multiplicative LR decay");
  tr->add_option("--lr-decay-step", tc.lr_decay_step, "Epochs between LR decays");
  tr->add_option("--eval-fraction", tc.eval_fraction, "Validation fraction of pairs");
  tr->add_option("--seed", tc.seed, "Seed for split/init/shuffles");
  tr->add_option("--workers", tc.workers, "Worker threads (1 = strictly serial)");
  tr->add_flag("--augment", tc.augment, "Seeded flip/rot90 augmentation (pair-aligned)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  std::string ev_manifest, ev_model, ev_report;
  int ev_workers = 1;
  ev->add_option("--manifest", ev_manifest, "Manifest path")->required();
  ev->add_option("--model", ev_model, "Checkpoint path")->required();
  ev->add_option("--report", ev_report, "Report output path")->required();
  ev->add_option("--workers", ev_workers, "Worker threads");

  // info
  auto* in = app.add_subcommand("info", "Inspect a JPEG file or a checkpoint");
  std::string in_jpeg, in_model;
  in->add_option("--jpeg", in_jpeg, "JPEG file");
  in->add_option("--model", in_model, "Checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_filters(gen_out);
    if (sim->parsed())
      return cmd_simulate(sim_cover_dir, sim_domain, sim_alpha, sim_seed, sim_out_dir,
                          sim_manifest);
    if (pre->parsed()) return cmd_preprocess(pre_in, pre_domain, pre_out, pre_trunc, pre_pad);
    if (tr->parsed()) return cmd_train(tr_manifest, tr_model_out, tc);
    if (ev->parsed()) return cmd_eval(ev_manifest, ev_model, ev_report, ev_workers);
    if (in->parsed()) return cmd_info(in_jpeg, in_model);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: code=%s msg=\"%s\"\n", errc_name(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: code=UNEXPECTED msg=\"%s\"\n", e.what());
    return 1;
  }
  return 2;
}
