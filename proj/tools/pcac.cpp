// Command-line front end: train / compress / decompress / eval / report.
// Every command is deterministic given its flags; exit code 0 iff no error.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcac/checkpoint.hpp"
#include "pcac/evalmetrics.hpp"
#include "pcac/pipeline.hpp"
#include "pcac/ply.hpp"
#include "pcac/training.hpp"

namespace {

using Scalar = float;  // working precision; files store float32 either way

int log_level() {
  static const int level = [] {
    const char* v = std::getenv("A2C_LOG");
    if (!v || !*v) return 1;
    return std::atoi(v);
  }();
  return level;
}

void logln(int level, const std::string& msg) {
  if (log_level() >= level) std::printf("%s\n", msg.c_str());
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw pcac::FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw pcac::FormatError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw pcac::FormatError("short write to " + path);
}

std::string label_from_path(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

struct CodecFlags {
  pcac::CodecConfig cfg;
  void attach(CLI::App* cmd) {
    cmd->add_option("--scales", cfg.num_scales, "downsampling stages");
    cmd->add_option("--ratio", cfg.sample_ratio, "per-stage subsampling ratio");
    cmd->add_option("--layers", cfg.layers_per_block, "attention layers per stage");
    cmd->add_option("--channels", cfg.channels, "feature width");
    cmd->add_option("--k", cfg.k_neighbors, "neighborhood size");
    cmd->add_option("--latent", cfg.latent_channels, "bottleneck channels");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point cloud attribute codec"};
  app.require_subcommand(1);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "fit a model on synthetic patches");
  std::string train_out, train_log;
  double lambda = 0, lr = 5e-4, lr_final = 0;
  uint64_t seed = 0;
  pcac::Index steps = 5000, batch = 8, n_patches = 512, points = pcac::kDefaultPatchSize;
  CodecFlags train_flags;
  train_cmd->add_option("--output", train_out, "checkpoint path")->required();
  train_cmd->add_option("--lambda", lambda, "rate weight")->required();
  train_cmd->add_option("--steps", steps, "optimizer steps");
  train_cmd->add_option("--seed", seed, "master seed");
  train_cmd->add_option("--batch", batch, "patches per step");
  train_cmd->add_option("--lr", lr, "learning rate");
  train_cmd->add_option("--lr-final", lr_final, "cosine-decay the rate to this value (0 = constant)");
  train_cmd->add_option("--patches", n_patches, "synthetic dataset size");
  train_cmd->add_option("--points", points, "points per synthetic patch");
  train_cmd->add_option("--log", train_log, "training log CSV path");
  train_flags.attach(train_cmd);

  // ---- compress ----
  auto* comp_cmd = app.add_subcommand("compress", "encode a PLY's colors");
  std::string comp_model, comp_in, comp_out;
  pcac::Index patch_size = pcac::kDefaultPatchSize;
  int jobs = 1;
  comp_cmd->add_option("--model", comp_model, "checkpoint path")->required();
  comp_cmd->add_option("--input", comp_in, "input PLY")->required();
  comp_cmd->add_option("--output", comp_out, "output stream path")->required();
  comp_cmd->add_option("--patch-size", patch_size, "coding unit size");
  comp_cmd->add_option("--jobs", jobs, "worker threads");

  // ---- decompress ----
  auto* dec_cmd = app.add_subcommand("decompress", "decode a stream against its geometry");
  std::string dec_model, dec_in, dec_geo, dec_out;
  int dec_jobs = 1;
  dec_cmd->add_option("--model", dec_model, "checkpoint path")->required();
  dec_cmd->add_option("--input", dec_in, "compressed stream")->required();
  dec_cmd->add_option("--geometry", dec_geo, "PLY supplying the positions")->required();
  dec_cmd->add_option("--output", dec_out, "reconstructed PLY")->required();
  dec_cmd->add_option("--jobs", dec_jobs, "worker threads");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "in-memory round trip, prints rate/quality");
  std::string eval_model, eval_in, eval_out, eval_label;
  double eval_lambda = 0;
  pcac::Index eval_patch_size = pcac::kDefaultPatchSize;
  int eval_jobs = 1;
  eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
  eval_cmd->add_option("--input", eval_in, "input PLY")->required();
  eval_cmd->add_option("--output", eval_out, "CSV to append the point to");
  eval_cmd->add_option("--label", eval_label, "curve label for the CSV row");
  eval_cmd->add_option("--lambda", eval_lambda, "rate weight recorded in the CSV");
  eval_cmd->add_option("--patch-size", eval_patch_size, "coding unit size");
  eval_cmd->add_option("--jobs", eval_jobs, "worker threads");

  // ---- report ----
  auto* rep_cmd = app.add_subcommand("report", "render RD CSVs into a plot + BD table");
  std::vector<std::string> rep_in;
  std::string rep_out;
  rep_cmd->add_option("--input", rep_in, "RD CSV files")->required()->expected(-1);
  rep_cmd->add_option("--output", rep_out, "report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      pcac::validate(train_flags.cfg, points);
      pcac::Model<Scalar> model = pcac::make_model<Scalar>(train_flags.cfg);
      pcac::model_init(model, seed);
      pcac::EntropyModel<Scalar> em =
          pcac::make_entropy_model<Scalar>(train_flags.cfg.latent_channels, seed);
      logln(2, "generating " + std::to_string(n_patches) + " synthetic patches");
      const std::vector<pcac::Patch> dataset =
          pcac::synth_dataset(n_patches, pcac::mix64(seed ^ 0x64617461736574ull), points);
      pcac::TrainConfig tc;
      tc.lambda = lambda;
      tc.steps = steps;
      tc.lr = lr;
      tc.lr_final = lr_final;
      tc.batch = batch;
      tc.seed = seed;
      const std::vector<pcac::TrainLogRow> log = pcac::train(model, em, dataset, tc);
      if (log_level() >= 2)
        for (size_t i = 0; i < log.size(); i += 100)
          logln(2, "step " + std::to_string(log[i].step) + " loss " + fmt("%.6g", log[i].loss) +
                       " est_bpp " + fmt("%.6g", log[i].est_bpp));
      pcac::save_checkpoint(model, em, train_out);
      if (!train_log.empty()) pcac::write_train_log(log, train_log);
      logln(1, "trained " + std::to_string(steps) + " steps; final loss " +
                   fmt("%.6g", log.back().loss) + "; wrote " + train_out);
    } else if (*comp_cmd) {
      pcac::Model<Scalar> model = pcac::make_model<Scalar>({});
      pcac::EntropyModel<Scalar> em;
      pcac::load_checkpoint(comp_model, model, em);
      const pcac::PointCloud pc = pcac::read_ply(comp_in);
      const pcac::Bitstream bs =
          pcac::compress_cloud(pc, model, em, patch_size, 0, jobs);
      const std::vector<uint8_t> bytes = pcac::pack_bitstream(bs);
      write_file(comp_out, bytes);
      logln(1, "bpp=" + fmt("%.6f", pcac::bpp(bytes.size(), pc.size())) +
                   " bytes=" + std::to_string(bytes.size()) +
                   " points=" + std::to_string(pc.size()) +
                   " patches=" + std::to_string(bs.patches.size()));
    } else if (*dec_cmd) {
      pcac::Model<Scalar> model = pcac::make_model<Scalar>({});
      pcac::EntropyModel<Scalar> em;
      pcac::load_checkpoint(dec_model, model, em);
      const pcac::Bitstream bs = pcac::unpack_bitstream(read_file(dec_in));
      const pcac::PointCloud geometry = pcac::read_ply(dec_geo);
      const pcac::PointCloud rec = pcac::decompress_cloud(bs, geometry, model, em, dec_jobs);
      pcac::write_ply(rec, dec_out);
      logln(1, "decoded " + std::to_string(rec.size()) + " points to " + dec_out);
    } else if (*eval_cmd) {
      pcac::Model<Scalar> model = pcac::make_model<Scalar>({});
      pcac::EntropyModel<Scalar> em;
      pcac::load_checkpoint(eval_model, model, em);
      const pcac::PointCloud pc = pcac::read_ply(eval_in);
      const pcac::RDPoint pt =
          pcac::evaluate_model(pc, model, em, eval_patch_size, eval_jobs);
      logln(1, "bpp=" + fmt("%.6f", pt.bpp) + " psnr_y=" + fmt("%.4f", pt.psnr_y) +
                   " psnr_yuv=" + fmt("%.4f", pt.psnr_yuv));
      if (!eval_out.empty()) {
        const std::string label =
            eval_label.empty() ? label_from_path(eval_model) : eval_label;
        pcac::append_rd_csv(eval_out, label, eval_lambda, pt);
      }
    } else if (*rep_cmd) {
      std::vector<pcac::RDCurve> curves;
      for (const std::string& path : rep_in) {
        std::vector<pcac::RDCurve> part = pcac::read_rd_csv(path);
        curves.insert(curves.end(), part.begin(), part.end());
      }
      pcac::rd_report(curves, rep_out);
      if (curves.size() > 1) {
        for (size_t i = 1; i < curves.size(); ++i) {
          const pcac::BDResult bd = pcac::bd_metrics(curves[0], curves[i]);
          logln(1, curves[i].label + " vs " + curves[0].label + ": bd_br=" +
                       fmt("%.4f", bd.bd_br_percent) + "% bd_psnr=" +
                       fmt("%.4f", bd.bd_psnr_db) + " dB" +
                       (bd.flagged ? " (flagged: |bd_br| > 999%)" : ""));
        }
      }
      logln(1, "report written to " + rep_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
