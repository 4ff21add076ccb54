#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <cmath>
#include <fstream>
#include <set>

#include "msv/checkpoint.hpp"
#include "msv/config_file.hpp"
#include "msv/dataset.hpp"
#include "msv/metrics_csv.hpp"
#include "msv/pgm.hpp"
#include "msv/trainer.hpp"

namespace msv::cli {

namespace {

// Six significant digits for console logs; the CSV keeps full precision.
std::string brief(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, r.ptr);
}

std::vector<std::string> splits_in(const Dataset& data) {
  std::vector<std::string> order{"train", "val", "test"};
  std::set<std::string> present;
  for (const auto& s : data.samples) present.insert(s.split);
  std::vector<std::string> out;
  for (const auto& name : order) {
    if (present.count(name)) out.push_back(name);
  }
  for (const auto& name : present) {
    if (std::find(order.begin(), order.end(), name) == order.end()) out.push_back(name);
  }
  return out;
}

void print_eval(const EvalResult& r, const std::string& split) {
  std::cout << split << ": mean dice " << brief(r.mean_dice);
  for (std::size_t k = 0; k < r.class_dice.size(); ++k) {
    std::cout << "  class " << k + 1 << " " << brief(r.class_dice[k]);
  }
  std::cout << "  loss " << brief(r.loss_total) << "\n";
}

MsvMamba model_from_checkpoint(const Checkpoint& ckpt) {
  const RunConfig config = parse_config(ckpt.config_text);
  MsvMamba model = MsvMamba::create(config.model);
  import_parameters(model.parameters(), ckpt);
  return model;
}

}  // namespace

int run_synth(const SynthArgs& args) {
  if (args.size % 16 != 0) {
    throw ConfigError("--size must be a multiple of 16, got " + std::to_string(args.size));
  }
  SynthOptions o;
  o.count = args.count;
  o.seed = args.seed;
  o.classes = args.classes;
  o.height = o.width = args.size;
  const Dataset d = make_phantom_dataset(o);
  write_dataset(args.out, d, o);
  std::cout << "wrote " << d.size() << " phantoms (" << args.classes
            << " classes) to " << args.out.string() << "\n";
  return 0;
}

int run_train(const TrainArgs& args) {
  const Dataset all = load_dataset(args.data);
  RunConfig base;
  base.model.num_classes = all.classes;
  RunConfig config = load_config(args.config, base);
  if (args.no_lms) config.model.use_lms = false;
  if (args.no_aux) config.model.use_aux = false;
  if (args.no_msaa) config.model.use_msaa = false;
  if (args.steps) config.train.steps = *args.steps;
  if (!config.model.use_aux) config.model.epsilon = 0;

  Dataset train = all.subset("train");
  if (train.empty()) throw DataError("dataset has no train split");
  std::filesystem::create_directories(args.out);

  std::cout << "train samples " << train.size() << ", task "
            << task_name(config.model.task) << ", classes "
            << config.model.num_classes << "\n"
            << "use_lms = " << (config.model.use_lms ? "true" : "false")
            << ", use_aux = " << (config.model.use_aux ? "true" : "false")
            << ", use_msaa = " << (config.model.use_msaa ? "true" : "false")
            << "\nepsilon = " << brief(config.model.effective_epsilon())
            << "\n";

  Trainer trainer(config, train);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < config.train.steps; ++i) {
    const StepResult r = trainer.step();
    if (r.step % config.train.log_every == 0 || r.step == config.train.steps) {
      const double secs = std::chrono::duration<double>(
          std::chrono::steady_clock::now() - start).count();
      std::printf("step %llu loss_total %.6f loss_main %.6f loss_aux_sum %.6f grad_norm %.4g (%.1fs)\n",
                  static_cast<unsigned long long>(r.step), r.loss_total,
                  r.loss_main, r.loss_aux_sum, r.grad_norm, secs);
      std::fflush(stdout);
    }
  }
  save_checkpoint(args.out / "checkpoint.msvm", trainer.checkpoint());
  std::ofstream(args.out / "config.txt") << format_config(trainer.config());

  std::vector<MetricsRow> rows;
  for (const std::string& split : splits_in(all)) {
    if (split == "test") continue;
    const EvalResult r =
        evaluate(trainer.model(), all.subset(split), split, trainer.steps_done());
    print_eval(r, split);
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  }
  write_metrics_csv(args.out / "metrics.csv", rows);
  std::cout << "wrote " << (args.out / "checkpoint.msvm").string() << " and "
            << (args.out / "metrics.csv").string() << "\n";
  return 0;
}

int run_eval(const EvalArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  MsvMamba model = model_from_checkpoint(ckpt);
  const Dataset all = load_dataset(args.data);
  if (all.classes != model.config().num_classes) {
    throw ConfigError("dataset has " + std::to_string(all.classes) +
                      " classes, checkpoint expects " +
                      std::to_string(model.config().num_classes));
  }
  std::vector<MetricsRow> rows;
  const std::vector<std::string> splits =
      args.split.empty() ? splits_in(all) : std::vector<std::string>{args.split};
  for (const std::string& split : splits) {
    const Dataset part = all.subset(split);
    if (part.empty()) throw DataError("dataset has no '" + split + "' samples");
    const EvalResult r = evaluate(model, part, split, ckpt.step);
    print_eval(r, split);
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  }
  write_metrics_csv(args.csv, rows);
  return 0;
}

int run_predict(const PredictArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  MsvMamba model = model_from_checkpoint(ckpt);
  const GrayImage image = read_pgm(args.image);
  if (image.height % 16 != 0 || image.width % 16 != 0) {
    throw ShapeError("image extents " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " must be divisible by 16");
  }
  model.set_mode(NormMode::kEval);
  Labels pred;
  {
    NoGradGuard no_grad;
    pred = predict_classes(model.forward(image_to_tensor(image)).logits_main,
                           model.config().task);
  }
  GrayImage mask{image.width, image.height, {}};
  GrayImage overlay{image.width, image.height, {}};
  const double step = 255.0 / double(model.config().num_classes - 1);
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const auto cls = static_cast<std::uint8_t>(pred.values[i]);
    mask.pixels.push_back(cls);
    overlay.pixels.push_back(static_cast<std::uint8_t>(
        std::lround(0.5 * image.pixels[i] + 0.5 * step * cls)));
  }
  write_pgm(args.mask_out, mask);
  auto overlay_path = args.mask_out;
  overlay_path.replace_filename(args.mask_out.stem().string() + "_overlay.pgm");
  write_pgm(overlay_path, overlay);
  std::cout << "wrote " << args.mask_out.string() << " and "
            << overlay_path.string() << "\n";
  return 0;
}

int run_gradcheck(bool f64, std::size_t seeds) {
  const auto report = [](const GradcheckCase& c) {
    std::printf("%-24s seed %llu  rel_err %.3e  kinks %zu/%zu  %s%s\n", c.op.c_str(),
                static_cast<unsigned long long>(c.seed), c.rel_error, c.nonsmooth, c.coords,
                c.passed ? "ok" : "FAIL", c.passed ? "" : ("  (" + c.worst_tensor + ")").c_str());
    std::fflush(stdout);
  };
  const GradcheckSuiteResult r =
      f64 ? run_gradcheck_f64(seeds, report) : msv::run_gradcheck_suite(seeds, report);
  std::size_t failed = 0;
  for (const auto& c : r.cases) failed += !c.passed;
  std::printf("%s: %zu checks, %zu failed, tolerance %.0e\n", r.precision.c_str(),
              r.cases.size(), failed, r.tolerance);
  return r.passed() ? 0 : 1;
}

}  // namespace msv::cli
