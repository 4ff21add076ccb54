#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace msv::cli;
  CLI::App app{"MSV-Mamba echocardiography segmentation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a phantom dataset with a manifest");
  s->add_option("--count", synth.count, "Number of samples")->required()->check(CLI::PositiveNumber);
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.seed, "Base seed; sample i uses seed + i")->required();
  s->add_option("--classes", synth.classes, "2 (cavity) or 3 (cavity + ring)")
      ->check(CLI::IsMember({2, 3}));
  s->add_option("--size", synth.size, "Square canvas extent, a multiple of 16")
      ->check(CLI::PositiveNumber);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train on the train split of a dataset");
  t->add_option("--data", train.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--config", train.config, "key = value config file")->required()->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_flag("--no-lms", train.no_lms, "Replace LMS blocks with residual conv blocks");
  t->add_flag("--no-aux", train.no_aux, "Drop auxiliary heads (epsilon = 0)");
  t->add_flag("--no-msaa", train.no_msaa, "Feed the last decoder stage straight to the head");
  t->add_option("--steps", train.steps, "Override the configured step count");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint and write metrics CSV");
  e->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--csv", ev.csv, "Metrics CSV output")->required();
  e->add_option("--split", ev.split, "Only this split (train, val or test)");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Segment one PGM image");
  p->add_option("--image", pr.image, "Input P5 PGM")->required()->check(CLI::ExistingFile);
  p->add_option("--ckpt", pr.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  p->add_option("--mask-out", pr.mask_out, "Class-index PGM; the overlay goes next to it")->required();

  bool f64 = false;
  std::size_t seeds = 5;
  auto* g = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  g->add_flag("--f64", f64, "Double precision with the tight tolerance");
  g->add_option("--seeds", seeds, "Seeds per operation")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (s->parsed()) return run_synth(synth);
    if (t->parsed()) return run_train(train);
    if (e->parsed()) return run_eval(ev);
    if (p->parsed()) return run_predict(pr);
    if (g->parsed()) return run_gradcheck(f64, seeds);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
