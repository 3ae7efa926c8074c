#include "pepsi/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>

#include "pepsi/checkpoint.hpp"
#include "pepsi/config.hpp"
#include "pepsi/datasets.hpp"
#include "pepsi/gradcheck_suite.hpp"
#include "pepsi/image_io.hpp"
#include "pepsi/metrics.hpp"
#include "pepsi/synth.hpp"

namespace pepsi {

namespace fs = std::filesystem;

namespace {

struct MaskgenArgs {
  std::string mode = "freeform";
  int height = 256;
  int width = 256;
  std::uint64_t seed = 1;
  std::string out;
};

int run_maskgen(const MaskgenArgs& a, std::ostream& out) {
  std::mt19937_64 rng(a.seed);
  Mask m = a.mode == "square" ? gen_square_mask(a.height, a.width, rng)
                              : gen_freeform_mask(FreeFormParams::defaults(a.height, a.width), rng);
  write_mask(a.out, m);
  out << a.out << ": " << m.hole_count() << " hole pixels (" << std::setprecision(4) << m.hole_fraction() * 100
      << "%)\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_config(a.config);
  for (const std::string& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  const Datasets data = load_datasets(cfg);
  Trainer t(cfg);
  if (!cfg.resume.empty()) {
    restore(load_checkpoint(cfg.resume), t.gen, &t.red, &t.state);
    if (t.state.k_max != cfg.k_max) {
      throw ConfigError("resume: checkpoint k_max " + std::to_string(t.state.k_max) + " differs from config k_max " +
                        std::to_string(cfg.k_max));
    }
    out << "resumed at k = " << t.state.k << "\n";
  }
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ofstream(fs::path(cfg.out_dir) / "config.txt") << serialize_config(cfg);
  }
  const std::vector<LogRow> rows = train_loop(t, data.train, data.holdout);
  out << kLogHeader << "\n";
  for (const LogRow& r : rows) {
    out << r.k << ',' << r.losses.loss_d << ',' << r.losses.loss_g << ',' << r.losses.loss_coarse << ','
        << r.eval.psnr_local << ',' << r.eval.psnr_global << ',' << r.eval.ssim << "\n";
  }
  return kExitOk;
}

struct InferArgs {
  std::string checkpoint, image, mask, out;
};

int run_infer(const InferArgs& a, std::ostream& out) {
  const CheckpointData ckpt = load_checkpoint(a.checkpoint);
  GeneratorConfig cfg = generator_config(ckpt.header);
  cfg.cam_lambda = std::bit_cast<double>(ckpt.counter("meta.cam_lambda"));
  Generator<float> gen(cfg, 0);
  restore(ckpt, gen, nullptr, nullptr);
  const Tensor<float> image = read_image(a.image);
  const Mask mask = read_mask(a.mask);
  if (mask.height() != image.shape().h || mask.width() != image.shape().w) {
    throw ContractError("mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                        " does not match image " + to_string(image.shape()));
  }
  const Tensor<float> m = mask_tensor<float>(mask);
  Graph<float> g(false);
  const GenOutput<float> result = gen.forward(g, image, m, GenMode::kInfer);
  write_image(a.out, composite_output(result.inpaint.value(), image, m));
  out << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string results, refs, masks, out;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.results))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .ppm results in '" + a.results + "'");

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write '" + a.out + "'");
  }
  std::ostream& csv = a.out.empty() ? out : file;
  csv << "name,psnr_local,psnr_global,ssim,hole_pixels,total_pixels\n" << std::setprecision(9);
  EvalReport mean;
  for (const fs::path& p : files) {
    const std::string stem = p.stem().string();
    const Tensor<float> result = read_image(p.string());
    const Tensor<float> ref = read_image((fs::path(a.refs) / p.filename()).string());
    const Mask mask = read_mask((fs::path(a.masks) / (stem + ".pgm")).string());
    const EvalReport r = evaluate(result, ref, mask);
    csv << stem << ',' << r.psnr_local << ',' << r.psnr_global << ',' << r.ssim << ',' << r.hole_pixels << ','
        << r.total_pixels << '\n';
    mean.psnr_local += r.psnr_local;
    mean.psnr_global += r.psnr_global;
    mean.ssim += r.ssim;
    mean.hole_pixels += r.hole_pixels;
    mean.total_pixels += r.total_pixels;
  }
  const double n = static_cast<double>(files.size());
  csv << "mean," << mean.psnr_local / n << ',' << mean.psnr_global / n << ',' << mean.ssim / n << ','
      << mean.hole_pixels << ',' << mean.total_pixels << '\n';
  return kExitOk;
}

struct AuditArgs {
  std::string variant = "pepsi";
  int groups = 1;
  std::string bias = "off";
  int width_divisor = 1;
  int size = 256;
  bool per_tensor = false;
};

// Parameter tensors are built at full size; no forward pass is run.
int run_audit(const AuditArgs& a, std::ostream& out) {
  const Variant v = parse_variant(a.variant);
  const bool bias = a.bias == "on";
  ParamCount count;
  if (v == Variant::kRed) {
    Discriminator<float> red(a.size, a.size, a.width_divisor, 0);
    count = count_params(red.params(), bias);
  } else {
    GeneratorConfig cfg;
    cfg.variant = v;
    cfg.width_divisor = a.width_divisor;
    cfg.dpu.groups = a.groups;
    Generator<float> gen(cfg, 0);
    count = count_params(gen.params(), bias);
  }
  out << "variant " << to_string(v) << ", groups " << a.groups << ", bias " << (bias ? "on" : "off") << "\n";
  if (a.per_tensor)
    for (const auto& [name, n] : count.per_tensor) out << "  " << std::left << std::setw(24) << name << n << "\n";
  for (const auto& [name, n] : count.subtotals) out << std::left << std::setw(16) << name << n << "\n";
  out << std::left << std::setw(16) << "total" << count.total << "\n";
  return kExitOk;
}

struct GradArgs {
  std::uint64_t seed = 7;
  bool quick = false;
};

int run_gradcheck(const GradArgs& a, std::ostream& out) {
  GradSuiteOptions opt;
  opt.seed = a.seed;
  opt.networks = !a.quick;
  int failed = 0;
  for (const GradCheckCase& c : run_gradcheck_suite(opt)) {
    out << (c.passed ? "ok   " : "FAIL ") << std::left << std::setw(48) << c.name << std::scientific
        << std::setprecision(3) << c.result.max_rel_error << std::defaultfloat << "\n";
    failed += c.passed ? 0 : 1;
  }
  out << (failed ? std::to_string(failed) + " check(s) failed" : std::string("all checks passed")) << "\n";
  return failed ? kExitRuntime : kExitOk;
}

struct SynthArgs {
  std::string pattern = "stripes";
  int size = 32;
  int count = 200;
  std::uint64_t seed = 1;
  std::string out_dir;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  SyntheticSpec spec;
  spec.pattern = parse_pattern(a.pattern);
  spec.size = a.size;
  spec.count = a.count;
  spec.seed = a.seed;
  write_synthetic(spec, a.out_dir);
  out << a.count << " images in " << a.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Image inpainting networks: training, inference and audits"};
  app.require_subcommand(1);

  MaskgenArgs mg;
  auto* maskgen = app.add_subcommand("maskgen", "Write a random hole mask as PGM");
  maskgen->add_option("--mode", mg.mode, "square or freeform")->check(CLI::IsMember({"square", "freeform"}));
  maskgen->add_option("--height", mg.height)->check(CLI::PositiveNumber);
  maskgen->add_option("--width", mg.width)->check(CLI::PositiveNumber);
  maskgen->add_option("--seed", mg.seed);
  maskgen->add_option("--out", mg.out)->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Adversarial training run");
  train->add_option("--config", tr.config, "key = value config file")->check(CLI::ExistingFile);
  train->add_option("--set", tr.overrides, "override one key (key=value)");

  InferArgs in;
  auto* infer = app.add_subcommand("infer", "Inpaint one image");
  infer->add_option("--checkpoint", in.checkpoint)->required()->check(CLI::ExistingFile);
  infer->add_option("--image", in.image)->required()->check(CLI::ExistingFile);
  infer->add_option("--mask", in.mask)->required()->check(CLI::ExistingFile);
  infer->add_option("--out", in.out)->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "PSNR / SSIM of results against references");
  eval->add_option("--results-dir", ev.results)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--refs-dir", ev.refs)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--masks-dir", ev.masks)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", ev.out, "CSV path (default stdout)");

  AuditArgs au;
  auto* audit = app.add_subcommand("audit-params", "Parameter-count breakdown");
  audit->add_option("--variant", au.variant)->check(CLI::IsMember({"pepsi", "diet_pepsi", "red"}));
  audit->add_option("--g", au.groups, "DPU groups")->check(CLI::IsMember({1, 2, 4}));
  audit->add_option("--bias", au.bias)->check(CLI::IsMember({"on", "off"}));
  audit->add_option("--width-divisor", au.width_divisor)->check(CLI::PositiveNumber);
  audit->add_option("--size", au.size, "RED input extent")->check(CLI::PositiveNumber);
  audit->add_flag("--per-tensor", au.per_tensor);

  GradArgs gc;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad->add_option("--seed", gc.seed);
  grad->add_flag("--quick", gc.quick, "skip the end-to-end networks");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Write a synthetic image set");
  synth->add_option("--pattern", sy.pattern)->check(CLI::IsMember({"stripes", "checker", "gradient-blobs"}));
  synth->add_option("--size", sy.size)->check(CLI::PositiveNumber);
  synth->add_option("--count", sy.count)->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", sy.seed);
  synth->add_option("--out-dir", sy.out_dir)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*maskgen) return run_maskgen(mg, out);
    if (*train) return run_train(tr, out);
    if (*infer) return run_infer(in, out);
    if (*eval) return run_eval(ev, out);
    if (*audit) return run_audit(au, out);
    if (*grad) return run_gradcheck(gc, out);
    if (*synth) return run_synth(sy, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int cli_dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace pepsi
