// upsam: pansharpening pipeline driver.
//
// Subcommands: sharpen, degrade, evaluate, evaluate-fr, toy, attention.
// Every run emits a JSON report (stdout, or --report PATH).  Exit codes:
// 0 success, 1 usage error, 2 runtime error.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "upsam/attnet.hpp"
#include "upsam/errors.hpp"
#include "upsam/fusion.hpp"
#include "upsam/metrics.hpp"
#include "upsam/protocol.hpp"
#include "upsam/raster.hpp"
#include "upsam/synth.hpp"

using nlohmann::ordered_json;

namespace {

void emit_report(const ordered_json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw upsam::IoError("cannot open report file: " + path);
  f << text;
  if (!f) throw upsam::IoError("failed writing report file: " + path);
}

ordered_json image_info(const std::string& path, const upsam::RasterImage& img) {
  ordered_json j;
  j["path"] = upsam::raster_stem(path);
  j["width"] = img.width;
  j["height"] = img.height;
  j["bands"] = img.bands;
  return j;
}

std::array<int, 3> preview_bands(int bands) {
  return {0, bands / 2, bands - 1};
}

upsam::RasterImage stack_to_raster(const upsam::AttentionStack& s) {
  upsam::RasterImage img(s.width, s.height, s.maps);
  img.samples = s.data;
  return img;
}

upsam::RasterImage labels_to_raster(const upsam::IndexMap& m) {
  upsam::RasterImage img(m.width, m.height, 1);
  for (std::size_t i = 0; i < img.size(); ++i)
    img.samples[i] = static_cast<double>(m.values[i]);
  return img;
}

ordered_json loss_json(const std::vector<upsam::LossLogEntry>& history) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : history) {
    ordered_json row;
    row["iteration"] = e.iteration;
    row["reconstruction"] = e.recon;
    row["sparsity"] = e.sparsity;
    arr.push_back(std::move(row));
  }
  return arr;
}

ordered_json gains_json(const upsam::GainTable& g) {
  ordered_json j;
  j["mode"] = g.mode == upsam::GainTable::Mode::Variant ? "variant" : "global";
  j["maps"] = g.maps;
  j["regions"] = g.regions;
  ordered_json values = ordered_json::array();
  for (int m = 0; m < g.maps; ++m) {
    ordered_json row = ordered_json::array();
    for (int t = 0; t < g.regions; ++t) row.push_back(g.at(m, t));
    values.push_back(std::move(row));
  }
  j["values"] = std::move(values);
  ordered_json degen = ordered_json::array();
  for (int t = 0; t < g.regions; ++t)
    if (g.degenerate[t]) degen.push_back(t);
  j["degenerate_regions"] = std::move(degen);
  return j;
}

std::string kernel_name(upsam::UpsampleKernel k) {
  return k == upsam::UpsampleKernel::Nearest ? "nearest" : "bicubic";
}

// ---------------------------------------------------------------- sharpen

struct SharpenArgs {
  std::string msi, pan, out, report, preview;
  std::string injection = "msim";
  std::string domain = "maps";
  std::string kernel = "bicubic";
  int maps = 10;
  double lambda = 0.001;
  int iters = 2000;
  int batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool timings = false;
};

int run_sharpen(const SharpenArgs& a) {
  const upsam::RasterImage msi = upsam::load_raster(a.msi);
  const upsam::RasterImage pan = upsam::load_raster(a.pan);
  const upsam::MsiPanPair pair = upsam::make_msi_pan_pair(msi, pan);

  upsam::FusionConfig cfg;
  cfg.injection = a.injection == "global" ? upsam::InjectionMode::Global
                                          : upsam::InjectionMode::Msim;
  cfg.domain = a.domain == "bands" ? upsam::InjectDomain::Bands
                                   : upsam::InjectDomain::Maps;
  cfg.kernel = a.kernel == "nearest" ? upsam::UpsampleKernel::Nearest
                                     : upsam::UpsampleKernel::Bicubic;
  cfg.net = upsam::NetworkConfig::defaults(msi.bands);
  cfg.net.c2 = a.maps;
  cfg.net.lambda = a.lambda;
  cfg.net.iterations = a.iters;
  cfg.net.batch = a.batch;
  cfg.net.lr = a.lr;
  cfg.seed = a.seed;

  upsam::RunReport run;
  const upsam::RasterImage fused = upsam::pansharpen(pair, cfg, &run);
  upsam::save_raster(fused, a.out);
  if (!a.preview.empty())
    upsam::export_preview(fused, preview_bands(fused.bands), a.preview);

  ordered_json j;
  j["schema"] = 1;
  j["command"] = "sharpen";
  j["seed"] = a.seed;
  j["factor"] = pair.factor;
  j["injection"] = a.injection;
  j["inject_domain"] = a.domain;
  j["kernel"] = a.kernel;
  ordered_json net;
  net["maps"] = cfg.net.c2;
  net["lambda"] = cfg.net.lambda;
  net["iterations"] = cfg.net.iterations;
  net["batch"] = cfg.net.batch;
  net["learning_rate"] = cfg.net.lr;
  j["network"] = std::move(net);
  j["loss"] = loss_json(run.loss_history);
  ordered_json reg;
  reg["alpha"] = run.coeffs.alpha;
  reg["intercept"] = run.coeffs.intercept;
  j["regression"] = std::move(reg);
  j["gains"] = gains_json(run.gains);
  j["output"] = image_info(a.out, fused);
  if (a.timings) {
    ordered_json t = ordered_json::array();
    for (const auto& s : run.timings) {
      ordered_json row;
      row["stage"] = s.name;
      row["ms"] = s.ms;
      t.push_back(std::move(row));
    }
    j["timings_ms"] = std::move(t);
  } else {
    for (const auto& s : run.timings)
      std::fprintf(stderr, "[timing] %-16s %10.2f ms\n", s.name.c_str(), s.ms);
  }
  emit_report(j, a.report);
  return 0;
}

// ---------------------------------------------------------------- degrade

struct DegradeArgs {
  std::string msi, pan, out_msi, out_pan, out_ref, report, config;
  int factor = 4;
  std::vector<double> gains;
  int pan_taps = 41;
  std::string kernel = "bicubic";
  bool factor_set = false, gains_set = false, taps_set = false,
       kernel_set = false;
};

upsam::DegradeConfig degrade_config_from_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw upsam::IoError("cannot open config file: " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw upsam::FormatError("config " + path + ": " + e.what());
  }
  upsam::DegradeConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "factor")
      cfg.factor = value.get<int>();
    else if (key == "mtf_gains")
      cfg.mtf_gains = value.get<std::vector<double>>();
    else if (key == "pan_taps")
      cfg.pan_taps = value.get<int>();
    else if (key == "kernel") {
      const std::string k = value.get<std::string>();
      if (k == "bicubic")
        cfg.kernel = upsam::UpsampleKernel::Bicubic;
      else if (k == "nearest")
        cfg.kernel = upsam::UpsampleKernel::Nearest;
      else
        throw upsam::ConfigError("unknown kernel in config: " + k);
    } else {
      throw upsam::ConfigError("unknown config key: " + key);
    }
  }
  return cfg;
}

int run_degrade(const DegradeArgs& a) {
  upsam::DegradeConfig cfg;
  if (!a.config.empty()) cfg = degrade_config_from_json(a.config);
  if (a.factor_set || a.config.empty()) cfg.factor = a.factor;
  if (a.gains_set) cfg.mtf_gains = a.gains;
  if (a.taps_set || a.config.empty()) cfg.pan_taps = a.pan_taps;
  if (a.kernel_set || a.config.empty())
    cfg.kernel = a.kernel == "nearest" ? upsam::UpsampleKernel::Nearest
                                       : upsam::UpsampleKernel::Bicubic;

  const upsam::RasterImage msi = upsam::load_raster(a.msi);
  const upsam::RasterImage pan = upsam::load_raster(a.pan);
  const upsam::MsiPanPair pair = upsam::make_msi_pan_pair(msi, pan);
  const upsam::WaldReduced reduced = upsam::wald_reduce(pair, cfg);

  upsam::save_raster(reduced.pair.msi, a.out_msi);
  upsam::save_raster(reduced.pair.pan, a.out_pan);
  if (!a.out_ref.empty()) upsam::save_raster(reduced.reference, a.out_ref);

  ordered_json j;
  j["schema"] = 1;
  j["command"] = "degrade";
  j["factor"] = cfg.factor;
  j["mtf_gains"] = cfg.mtf_gains;
  j["pan_taps"] = cfg.pan_taps;
  j["kernel"] = kernel_name(cfg.kernel);
  j["msi"] = image_info(a.out_msi, reduced.pair.msi);
  j["pan"] = image_info(a.out_pan, reduced.pair.pan);
  if (!a.out_ref.empty())
    j["reference"] = image_info(a.out_ref, reduced.reference);
  emit_report(j, a.report);
  return 0;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string ref, report;
  std::vector<std::string> tests, labels;
  int factor = 4;
  int block = 32;
};

std::string path_label(const std::string& path) {
  return std::filesystem::path(upsam::raster_stem(path)).filename().string();
}

void print_table(const std::vector<std::string>& columns,
                 const std::vector<std::pair<std::string, std::vector<double>>>&
                     rows) {
  std::size_t w0 = 6;
  for (const auto& r : rows) w0 = std::max(w0, r.first.size());
  std::printf("%-*s", static_cast<int>(w0 + 2), "method");
  for (const auto& c : columns) std::printf("  %12s", c.c_str());
  std::printf("\n");
  std::printf("%s", std::string(w0 + 2, '-').c_str());
  for (std::size_t i = 0; i < columns.size(); ++i)
    std::printf("  %s", std::string(12, '-').c_str());
  std::printf("\n");
  for (const auto& r : rows) {
    std::printf("%-*s", static_cast<int>(w0 + 2), r.first.c_str());
    for (double v : r.second) std::printf("  %12.6f", v);
    std::printf("\n");
  }
}

int run_evaluate(const EvaluateArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.tests.size())
    throw CLI::ValidationError("--label count must match --test count");
  const upsam::RasterImage ref = upsam::load_raster(a.ref);

  ordered_json results = ordered_json::array();
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (std::size_t i = 0; i < a.tests.size(); ++i) {
    const upsam::RasterImage test = upsam::load_raster(a.tests[i]);
    const std::string label =
        a.labels.empty() ? path_label(a.tests[i]) : a.labels[i];
    upsam::MetricsReport m;
    m.psnr = upsam::psnr(ref, test);
    m.sam = upsam::sam(ref, test);
    m.ergas = upsam::ergas(ref, test, a.factor);
    m.q2n = upsam::q2n(ref, test, a.block, a.block);
    ordered_json row;
    row["label"] = label;
    row["path"] = upsam::raster_stem(a.tests[i]);
    row["psnr"] = m.psnr;
    row["sam"] = m.sam;
    row["ergas"] = m.ergas;
    row["q2n"] = m.q2n;
    results.push_back(std::move(row));
    rows.push_back({label, {m.psnr, m.sam, m.ergas, m.q2n}});
  }

  print_table({"PSNR(dB)", "SAM(deg)", "ERGAS", "Q2n"}, rows);

  ordered_json j;
  j["schema"] = 1;
  j["command"] = "evaluate";
  j["reference"] = upsam::raster_stem(a.ref);
  j["factor"] = a.factor;
  j["block"] = a.block;
  j["results"] = std::move(results);
  emit_report(j, a.report);
  return 0;
}

// ------------------------------------------------------------ evaluate-fr

struct EvaluateFrArgs {
  std::string msi, pan, pan_lr, report;
  std::vector<std::string> fused, labels;
  int block = 32;
  int pan_taps = 41;
};

int run_evaluate_fr(const EvaluateFrArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.fused.size())
    throw CLI::ValidationError("--label count must match --fused count");
  const upsam::RasterImage msi = upsam::load_raster(a.msi);
  const upsam::RasterImage pan = upsam::load_raster(a.pan);

  upsam::RasterImage pan_lr;
  if (!a.pan_lr.empty()) {
    pan_lr = upsam::load_raster(a.pan_lr);
  } else {
    if (msi.width < 1 || pan.width % msi.width != 0 ||
        pan.height % msi.height != 0 ||
        pan.width / msi.width != pan.height / msi.height)
      throw upsam::DimensionError(
          "pan dimensions are not an integer multiple of msi dimensions");
    upsam::DegradeConfig cfg;
    cfg.factor = pan.width / msi.width;
    cfg.pan_taps = a.pan_taps;
    pan_lr = upsam::downsample_pan(pan, cfg);
  }

  ordered_json results = ordered_json::array();
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (std::size_t i = 0; i < a.fused.size(); ++i) {
    const upsam::RasterImage fused = upsam::load_raster(a.fused[i]);
    const std::string label =
        a.labels.empty() ? path_label(a.fused[i]) : a.labels[i];
    const upsam::QnrResult q = upsam::qnr(fused, msi, pan, pan_lr, a.block);
    ordered_json row;
    row["label"] = label;
    row["path"] = upsam::raster_stem(a.fused[i]);
    row["d_lambda"] = q.d_lambda;
    row["d_s"] = q.d_s;
    row["qnr"] = q.qnr;
    results.push_back(std::move(row));
    rows.push_back({label, {q.d_lambda, q.d_s, q.qnr}});
  }

  print_table({"D_lambda", "D_S", "QNR"}, rows);

  ordered_json j;
  j["schema"] = 1;
  j["command"] = "evaluate-fr";
  j["msi"] = upsam::raster_stem(a.msi);
  j["pan"] = upsam::raster_stem(a.pan);
  j["block"] = a.block;
  j["results"] = std::move(results);
  emit_report(j, a.report);
  return 0;
}

// -------------------------------------------------------------------- toy

struct ToyArgs {
  std::string out_dir = "toy";
  std::string report;
  std::uint64_t seed = 0;
  int maps = 4;
  double lambda = 0.001;
  int iters = 2000;
  int batch = 256;
  double lr = 1e-3;
  bool timings = false;
};

void save_with_preview(const upsam::RasterImage& img,
                       const std::filesystem::path& stem) {
  upsam::save_raster(img, stem.string());
  upsam::export_preview(img, preview_bands(img.bands),
                        stem.string() + ".png");
}

int run_toy(const ToyArgs& a) {
  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);

  const upsam::ToyFixture fx = upsam::gen_toy(a.seed);
  save_with_preview(fx.msi, dir / "msi");
  save_with_preview(fx.abundance, dir / "abundance");
  save_with_preview(labels_to_raster(fx.labels), dir / "labels_true");

  const upsam::IndexMap km = upsam::kmeans_labels(fx.msi, 3, a.seed);
  save_with_preview(labels_to_raster(km), dir / "labels_kmeans");

  upsam::NetworkConfig cfg = upsam::NetworkConfig::defaults(fx.msi.bands);
  cfg.c2 = a.maps;
  cfg.lambda = a.lambda;
  cfg.iterations = a.iters;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  const upsam::TrainedModel model = upsam::train(fx.msi, cfg);
  const upsam::AttentionStack s = upsam::encode_image(model, fx.msi);
  const upsam::Msim msim = upsam::compute_msim(s);
  save_with_preview(stack_to_raster(s), dir / "attention");
  save_with_preview(labels_to_raster(msim), dir / "msim");

  const double agree_msim = upsam::best_permutation_agreement(msim, fx.labels);
  const double agree_km = upsam::best_permutation_agreement(km, fx.labels);
  std::vector<std::int64_t> counts(a.maps, 0);
  for (int v : msim.values) ++counts[v];
  int least = 0;
  for (int m = 1; m < a.maps; ++m)
    if (counts[m] < counts[least]) least = m;

  ordered_json j;
  j["schema"] = 1;
  j["command"] = "toy";
  j["seed"] = a.seed;
  j["out_dir"] = a.out_dir;
  ordered_json net;
  net["maps"] = cfg.c2;
  net["lambda"] = cfg.lambda;
  net["iterations"] = cfg.iterations;
  net["batch"] = cfg.batch;
  net["learning_rate"] = cfg.lr;
  j["network"] = std::move(net);
  j["agreement_msim"] = agree_msim;
  j["agreement_kmeans"] = agree_km;
  j["msim_counts"] = counts;
  j["least_selected_map"] = least;
  j["loss"] = loss_json(model.loss_history);
  emit_report(j, a.report);
  return 0;
}

// -------------------------------------------------------------- attention

struct AttentionArgs {
  std::string msi, out_stack, out_msim, out_model, report;
  std::uint64_t seed = 0;
  int maps = 10;
  double lambda = 0.001;
  int iters = 2000;
  int batch = 256;
  double lr = 1e-3;
  bool preview = false;
};

int run_attention(const AttentionArgs& a) {
  const upsam::RasterImage msi = upsam::load_raster(a.msi);
  upsam::NetworkConfig cfg = upsam::NetworkConfig::defaults(msi.bands);
  cfg.c2 = a.maps;
  cfg.lambda = a.lambda;
  cfg.iterations = a.iters;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.seed;

  const upsam::TrainedModel model = upsam::train(msi, cfg);
  const upsam::AttentionStack s = upsam::encode_image(model, msi);
  const upsam::Msim msim = upsam::compute_msim(s);

  const upsam::RasterImage stack_img = stack_to_raster(s);
  const upsam::RasterImage msim_img = labels_to_raster(msim);
  upsam::save_raster(stack_img, a.out_stack);
  upsam::save_raster(msim_img, a.out_msim);
  if (a.preview) {
    upsam::export_preview(stack_img, preview_bands(stack_img.bands),
                          upsam::raster_stem(a.out_stack) + ".png");
    upsam::export_preview(msim_img, {0, 0, 0},
                          upsam::raster_stem(a.out_msim) + ".png");
  }
  if (!a.out_model.empty()) upsam::save_model(model, a.out_model);

  std::vector<std::int64_t> counts(a.maps, 0);
  for (int v : msim.values) ++counts[v];

  ordered_json j;
  j["schema"] = 1;
  j["command"] = "attention";
  j["seed"] = a.seed;
  ordered_json net;
  net["maps"] = cfg.c2;
  net["lambda"] = cfg.lambda;
  net["iterations"] = cfg.iterations;
  net["batch"] = cfg.batch;
  net["learning_rate"] = cfg.lr;
  j["network"] = std::move(net);
  j["loss"] = loss_json(model.loss_history);
  j["msim_counts"] = counts;
  j["stack"] = image_info(a.out_stack, stack_img);
  j["msim"] = image_info(a.out_msim, msim_img);
  emit_report(j, a.report);
  return 0;
}

void add_net_flags(CLI::App* cmd, int* maps, double* lambda, int* iters,
                   int* batch, double* lr) {
  cmd->add_option("--maps", *maps, "Attention map count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--lambda", *lambda, "Sparsity (entropy) weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--iters", *iters, "Training iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--batch", *batch, "Minibatch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--lr", *lr, "Learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"upsam: unsupervised attention-driven pansharpening"};
  app.require_subcommand(1);

  SharpenArgs sh;
  CLI::App* sharpen =
      app.add_subcommand("sharpen", "Fuse an LR MSI with an HR PAN");
  sharpen->add_option("--msi", sh.msi, "Low-resolution MSI raster")
      ->required();
  sharpen->add_option("--pan", sh.pan, "High-resolution PAN raster")
      ->required();
  sharpen->add_option("--out", sh.out, "Output raster stem")->required();
  sharpen->add_option("--report", sh.report, "JSON report path (default stdout)");
  sharpen->add_option("--preview", sh.preview, "Write a PNG preview here");
  sharpen
      ->add_option("--injection", sh.injection,
                   "Gain estimation: one set or per MSIM region")
      ->check(CLI::IsMember({"global", "msim"}))
      ->capture_default_str();
  sharpen
      ->add_option("--inject-domain", sh.domain,
                   "Add detail to attention maps or directly to bands")
      ->check(CLI::IsMember({"maps", "bands"}))
      ->capture_default_str();
  sharpen->add_option("--kernel", sh.kernel, "Upsampling kernel")
      ->check(CLI::IsMember({"bicubic", "nearest"}))
      ->capture_default_str();
  add_net_flags(sharpen, &sh.maps, &sh.lambda, &sh.iters, &sh.batch, &sh.lr);
  sharpen->add_option("--seed", sh.seed, "RNG seed")->capture_default_str();
  sharpen->add_flag("--timings", sh.timings,
                    "Record stage wall-times in the report (report is then "
                    "not run-to-run identical)");
  sharpen->callback([&sh] { run_sharpen(sh); });

  DegradeArgs dg;
  CLI::App* degrade = app.add_subcommand(
      "degrade", "Reduce an MSI/PAN pair one resolution level");
  degrade->add_option("--msi", dg.msi, "MSI raster")->required();
  degrade->add_option("--pan", dg.pan, "PAN raster")->required();
  degrade->add_option("--out-msi", dg.out_msi, "Reduced MSI stem")->required();
  degrade->add_option("--out-pan", dg.out_pan, "Reduced PAN stem")->required();
  degrade->add_option("--out-ref", dg.out_ref,
                      "Also write the original MSI as reference");
  degrade->add_option("--report", dg.report, "JSON report path (default stdout)");
  degrade->add_option("--config", dg.config, "Degradation config JSON file");
  degrade->add_option("--factor", dg.factor, "Resolution ratio")
      ->check(CLI::Range(2, 64))
      ->capture_default_str();
  degrade
      ->add_option("--gain", dg.gains,
                   "MTF Nyquist gain (one value, or one per band)")
      ->check(CLI::Range(1e-6, 0.999999));
  degrade->add_option("--pan-taps", dg.pan_taps, "PAN lowpass tap count")
      ->check(CLI::Range(3, 399))
      ->capture_default_str();
  degrade->add_option("--kernel", dg.kernel, "Upsampling kernel tag")
      ->check(CLI::IsMember({"bicubic", "nearest"}))
      ->capture_default_str();
  degrade->callback([&dg, degrade] {
    dg.factor_set = degrade->count("--factor") > 0;
    dg.gains_set = degrade->count("--gain") > 0;
    dg.taps_set = degrade->count("--pan-taps") > 0;
    dg.kernel_set = degrade->count("--kernel") > 0;
    run_degrade(dg);
  });

  EvaluateArgs ev;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Full-reference metrics against a ground-truth raster");
  evaluate->add_option("--ref", ev.ref, "Reference raster")->required();
  evaluate->add_option("--test", ev.tests, "Raster(s) under test")
      ->required();
  evaluate->add_option("--label", ev.labels,
                       "Method name per --test (default: file stem)");
  evaluate->add_option("--factor", ev.factor, "Resolution ratio (scales ERGAS)")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  evaluate->add_option("--block", ev.block, "Q2n block size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_option("--report", ev.report,
                       "JSON report path (default stdout)");
  evaluate->callback([&ev] { run_evaluate(ev); });

  EvaluateFrArgs fr;
  CLI::App* evaluate_fr = app.add_subcommand(
      "evaluate-fr", "No-reference quality (QNR) at full resolution");
  evaluate_fr->add_option("--fused", fr.fused, "Fused raster(s)")->required();
  evaluate_fr->add_option("--label", fr.labels,
                          "Method name per --fused (default: file stem)");
  evaluate_fr->add_option("--msi", fr.msi, "Original LR MSI")->required();
  evaluate_fr->add_option("--pan", fr.pan, "Original HR PAN")->required();
  evaluate_fr->add_option("--pan-lr", fr.pan_lr,
                          "Reduced PAN (computed if omitted)");
  evaluate_fr->add_option("--pan-taps", fr.pan_taps,
                          "Tap count when reducing the PAN here")
      ->check(CLI::Range(3, 399))
      ->capture_default_str();
  evaluate_fr->add_option("--block", fr.block, "UIQI block size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate_fr->add_option("--report", fr.report,
                          "JSON report path (default stdout)");
  evaluate_fr->callback([&fr] { run_evaluate_fr(fr); });

  ToyArgs ty;
  CLI::App* toy = app.add_subcommand(
      "toy", "Generate the 3-signature study scene and run the attention "
             "network on it");
  toy->add_option("--out", ty.out_dir, "Output directory")
      ->capture_default_str();
  toy->add_option("--seed", ty.seed, "RNG seed")->capture_default_str();
  add_net_flags(toy, &ty.maps, &ty.lambda, &ty.iters, &ty.batch, &ty.lr);
  toy->add_option("--report", ty.report, "JSON report path (default stdout)");
  toy->callback([&ty] { run_toy(ty); });

  AttentionArgs at;
  CLI::App* attention = app.add_subcommand(
      "attention", "Train on an MSI and dump attention maps + MSIM");
  attention->add_option("--msi", at.msi, "Input MSI raster")->required();
  attention->add_option("--out-stack", at.out_stack, "Attention stack stem")
      ->required();
  attention->add_option("--out-msim", at.out_msim, "MSIM raster stem")
      ->required();
  attention->add_option("--out-model", at.out_model,
                        "Also save the trained model at this stem");
  attention->add_flag("--preview", at.preview, "Write PNG previews too");
  add_net_flags(attention, &at.maps, &at.lambda, &at.iters, &at.batch,
                &at.lr);
  attention->add_option("--seed", at.seed, "RNG seed")->capture_default_str();
  attention->add_option("--report", at.report,
                        "JSON report path (default stdout)");
  attention->callback([&at] { run_attention(at); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n"
              << app.help() << std::flush;
    return 1;
  } catch (const upsam::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
