#include "acceptance/criteria.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include "msv/checkpoint.hpp"
#include "msv/config_file.hpp"
#include "msv/dataset.hpp"
#include "msv/lms.hpp"
#include "msv/losses.hpp"
#include "msv/metrics_csv.hpp"
#include "msv/nn.hpp"
#include "msv/ops.hpp"
#include "msv/ssm.hpp"
#include "msv/trainer.hpp"
#include "support/naive_scan.hpp"

namespace msv::acceptance {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  }
  return worst;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

Dataset phantoms(std::size_t count, std::uint64_t seed, const std::string& split,
                 std::size_t size = 112) {
  SynthOptions so;
  so.count = count;
  so.seed = seed;
  so.classes = 3;
  so.height = so.width = size;
  so.split = split;
  return make_phantom_dataset(so);
}

RunConfig desk_config() {
  RunConfig rc;
  rc.model.num_classes = 3;
  rc.model.channels = {8, 16, 32, 64};
  rc.model.seed = 0;
  rc.train.batch_size = 4;
  return rc;
}

// ---- criterion 1 -----------------------------------------------------------

std::string suite_summary(const GradcheckSuiteResult& r) {
  std::size_t failed = 0;
  double worst = 0;
  std::string worst_case;
  for (const auto& c : r.cases) {
    failed += !c.passed;
    if (c.rel_error > worst) {
      worst = c.rel_error;
      worst_case = c.op + "/" + std::to_string(c.seed);
    }
  }
  return r.precision + " " + std::to_string(r.cases.size() - failed) + "/" +
         std::to_string(r.cases.size()) + " (worst " + fmt("%.2e", worst) + " " +
         worst_case + ", tol " + fmt("%.0e", r.tolerance) + ")";
}

}  // namespace

Outcome gradient_suite() {
  constexpr std::size_t kSeeds = 5;
  const auto t0 = Clock::now();
  const GradcheckSuiteResult f32 = run_gradcheck_suite(kSeeds);
  const GradcheckSuiteResult f64 = run_f64_suite(kSeeds);
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.passed = f32.passed() && f64.passed() && elapsed < 300 &&
             f32.tolerance <= 1e-3 && f64.tolerance <= 1e-5;
  o.detail = std::to_string(gradcheck_suite_ops().size()) + " ops x " +
             std::to_string(kSeeds) + " seeds; " + suite_summary(f32) + "; " +
             suite_summary(f64) + "; " + fmt("%.1f s", elapsed) + " (limit 300 s)";
  return o;
}

// ---- criterion 2 -----------------------------------------------------------

Outcome scan_oracle() {
  std::mt19937_64 gen(20240607);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 1 + gen() % 64;
    const std::size_t dm = 1 + gen() % 8;
    const std::size_t ds = 1 + gen() % 8;
    const std::size_t nb = 1 + gen() % 2;
    Rng rng(gen());
    SsmParams p = SsmParams::create(dm, ds, rng);
    for (auto& v : p.a_log.mutable_data()) {
      v = std::uniform_real_distribution<real>(-1, 1)(rng);
    }
    p.b_dt.mutable_data()[0] = std::uniform_real_distribution<real>(-2, 1)(rng);
    const Tensor x = Tensor::uniform(Shape{nb, len, dm}, rng, -1, 1);
    const bool reverse = trial % 2 == 1;
    const Tensor y = selective_scan(
        x, p, reverse ? ScanDirection::kReverse : ScanDirection::kForward);
    const auto ref = oracle::naive_scan(x, p, reverse);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      worst = std::max(worst, std::abs(double(y[i]) - ref[i]));
    }
  }

  SsmParams p;
  p.a_log = Tensor(Shape{1, 1}, {0});
  p.w_b = Tensor(Shape{1, 1}, {1});
  p.w_c = Tensor(Shape{1, 1}, {1});
  p.w_dt = Tensor(Shape{1, 1}, {0});
  p.b_dt = Tensor::scalar(0);
  p.d_skip = Tensor(Shape{1}, {0});
  const Tensor y = selective_scan(Tensor(Shape{1, 3, 1}, {1, 1, 1}), p,
                                  ScanDirection::kForward);
  const double expect[] = {0.693147, 1.039721, 1.213007};
  double hand = 0;
  for (int i = 0; i < 3; ++i) hand = std::max(hand, std::abs(double(y[i]) - expect[i]));

  Outcome o;
  o.passed = worst < 1e-5 && hand < 1e-5;
  o.detail = "1000 configs max |diff| " + fmt("%.2e", worst) +
             " (tol 1e-5); hand case [" + fmt("%.6f", y[0]) + ", " +
             fmt("%.6f", y[1]) + ", " + fmt("%.6f", y[2]) + "] max |diff| " +
             fmt("%.1e", hand);
  return o;
}

// ---- criterion 3 -----------------------------------------------------------

Outcome structural_identities() {
  Rng rng(3);
  std::vector<std::string> failures;

  double partition = 0;
  const std::size_t shapes[][4] = {{8, 8, 4, 4}, {14, 14, 7, 7}, {12, 10, 3, 2}, {10, 9, 4, 4}};
  for (const auto& s : shapes) {
    const Tensor f = Tensor::uniform(Shape{2, 3, s[0], s[1]}, rng, -1, 1);
    const WindowPartition part = window_partition(f, s[2], s[3]);
    partition = std::max(partition, max_abs_diff(window_merge(part.tokens, part), f));
  }
  if (partition != 0) failures.push_back("partition/merge");

  const Tensor coarse = Tensor::uniform(Shape{2, 4, 5, 6}, rng, -1, 1);
  const double pool = max_abs_diff(avg_pool(unpool(coarse, 2, 3), 2, 3), coarse);
  if (pool != 0) failures.push_back("avg_pool/unpool");

  LmsConfig cfg;
  cfg.channels = 4;
  cfg.win_h = cfg.win_w = 4;
  cfg.d_state = 4;
  const SpatialScanParams params = SpatialScanParams::create(cfg, rng);
  const Tensor scale = Tensor::scalar(1);
  const Tensor f = Tensor::uniform(Shape{1, 4, 8, 8}, rng, -1, 1);
  Tensor f2 = f.detach();
  f2.mutable_data()[1 * 8 + 2] += real(0.5);  // channel 0 only; layer norm cancels uniform shifts
  auto outside_window0 = [](const Tensor& a, const Tensor& b) {
    double total = 0;
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          if (y < 4 && x < 4) continue;
          const std::size_t i = (c * 8 + y) * 8 + x;
          total += std::abs(double(a[i]) - double(b[i]));
        }
    return total;
  };
  const double pim_cross = outside_window0(pim(f, cfg, params, scale), pim(f2, cfg, params, scale));
  const double pam_cross = outside_window0(pam(f, cfg, params, scale), pam(f2, cfg, params, scale));
  if (pim_cross != 0) failures.push_back("PiM independence");
  if (!(pam_cross > 0)) failures.push_back("PaM coupling");

  MambaConfig mc;
  mc.d_model = 6;
  mc.d_state = 4;
  mc.tied = true;
  const MambaBlock block = MambaBlock::create(mc, rng);
  const Tensor seq = Tensor::uniform(Shape{2, 13, 6}, rng, -1, 1);
  const double equivariance =
      max_abs_diff(bimamba(flip(seq, 1), block), flip(bimamba(seq, block), 1));
  if (!(equivariance <= 1e-6)) failures.push_back("BiMamba equivariance");

  Outcome o;
  o.passed = failures.empty();
  o.detail = "partition/merge " + fmt("%.0e", partition) + ", pool/unpool " +
             fmt("%.0e", pool) + ", PiM cross-window " + fmt("%.0e", pim_cross) +
             ", PaM cross-window " + fmt("%.3e", pam_cross) +
             ", tied BiMamba reversal " + fmt("%.1e", equivariance) + " (tol 1e-6)";
  for (const auto& f : failures) o.detail += "; FAILED " + f;
  return o;
}

// ---- criterion 4 -----------------------------------------------------------

Outcome loss_identities() {
  Rng rng(4);
  std::vector<std::string> failures;
  auto random_labels = [&](std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
    std::vector<std::int32_t> v(n * h * w);
    for (auto& x : v) x = std::int32_t(rng() % c);
    return Labels(n, h, w, std::move(v));
  };

  // eps = 0: total is exactly the main loss.
  PredictionSet preds;
  preds.logits_main = Tensor::uniform(Shape{2, 3, 8, 8}, rng, -2, 2);
  for (int i = 0; i < 4; ++i) {
    preds.logits_aux.push_back(Tensor::uniform(Shape{2, 3, 8, 8}, rng, -2, 2));
  }
  const Labels labels = random_labels(2, 8, 8, 3);
  LossConfig cfg;
  cfg.epsilon = 0;
  cfg.raw_omega = Tensor::uniform(Shape{4}, rng, -1, 1, true);
  const LossOutput zero_eps = total_loss(preds, labels, cfg);
  const double eps0 = std::abs(double(zero_eps.total.item()) - zero_eps.l_main.item());
  if (eps0 != 0) failures.push_back("eps=0");

  // Equal auxiliary losses: total independent of omega.
  PredictionSet equal = preds;
  for (auto& aux : equal.logits_aux) aux = preds.logits_aux[0];
  cfg.epsilon = real(0.4);
  double omega_spread = 0;
  double first = 0;
  for (int trial = 0; trial < 6; ++trial) {
    cfg.raw_omega = Tensor::uniform(Shape{4}, rng, -3, 3, true);
    const double t = total_loss(equal, labels, cfg).total.item();
    if (trial == 0) first = t;
    omega_spread = std::max(omega_spread, std::abs(t - first));
  }
  if (!(omega_spread <= 1e-6)) failures.push_back("omega independence");

  // Perfect prediction.
  std::vector<real> onehot(2 * 3 * 64, 0);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 64; ++i)
      onehot[(b * 3 + std::size_t(labels.values[b * 64 + i])) * 64 + i] = 1;
  const double perfect_dice_loss =
      soft_dice_loss(Tensor(Shape{2, 3, 8, 8}, onehot), labels, Task::kMulticlass).item();
  double perfect_hard = 1;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::int32_t k = 1; k < 3; ++k)
      perfect_hard = std::min(perfect_hard, hard_dice(labels, labels, b, k));
  if (perfect_hard != 1.0 || std::abs(perfect_dice_loss) > 1e-6) failures.push_back("perfect prediction");

  // Disjoint 4-pixel case.
  std::vector<real> p(16, 0);
  std::vector<std::int32_t> g(16, 0);
  for (int i = 0; i < 4; ++i) {
    p[i] = 1;
    g[8 + i] = 1;
  }
  const double disjoint =
      soft_dice_loss(Tensor(Shape{1, 1, 4, 4}, p), Labels(1, 4, 4, g), Task::kBinary, 1).item();
  const double disjoint_err = std::abs(disjoint - (1.0 - 1.0 / 9.0));
  if (!(disjoint_err <= 1e-6)) failures.push_back("disjoint dice");

  // Uniform two-class cross-entropy.
  const double xce = xce_loss(Tensor::full(Shape{1, 2, 8, 8}, real(0.7)),
                              random_labels(1, 8, 8, 2), Task::kMulticlass)
                         .item();
  const double xce_err = std::abs(xce - std::log(2.0));
  if (!(xce_err <= 1e-6)) failures.push_back("uniform XCE");

  Outcome o;
  o.passed = failures.empty();
  o.detail = "eps=0 |total-main| " + fmt("%.0e", eps0) + ", omega spread " +
             fmt("%.1e", omega_spread) + ", perfect hard dice " + fmt("%.1f", perfect_hard) +
             " / dice_loss " + fmt("%.1e", perfect_dice_loss) + ", disjoint " +
             fmt("%.7f", disjoint) + " (1-1/9), uniform XCE " + fmt("%.7f", xce) + " (ln 2)";
  for (const auto& f : failures) o.detail += "; FAILED " + f;
  return o;
}

// ---- criterion 5 -----------------------------------------------------------

Outcome overfit(const fs::path& workdir) {
  constexpr std::size_t kMaxSteps = 500;
  const Dataset train = phantoms(8, 7, "train");
  RunConfig rc = desk_config();
  rc.train.steps = kMaxSteps;
  const auto t0 = Clock::now();
  Trainer trainer(rc, train);
  EvalResult r;
  bool reached = false;
  while (trainer.steps_done() < kMaxSteps) {
    trainer.step();
    const std::uint64_t s = trainer.steps_done();
    if (s >= 200 && (s % 50 == 0 || s == kMaxSteps)) {
      r = evaluate(trainer.model(), train, "train", s);
      std::printf("  [overfit] step %llu mean dice %.4f (%.0f s)\n",
                  static_cast<unsigned long long>(s), r.mean_dice, seconds_since(t0));
      std::fflush(stdout);
      if (r.mean_dice >= 0.95) {
        reached = true;
        break;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  fs::create_directories(workdir / "overfit");
  write_metrics_csv(workdir / "overfit" / "metrics.csv", r.rows);

  Outcome o;
  o.passed = reached && elapsed < 600;
  o.detail = "8 phantoms 112x112, channels [8,16,32,64], " +
             std::to_string(trainer.steps_done()) + " steps (max 500): train mean Dice " +
             fmt("%.4f", r.mean_dice) + " (need >= 0.95), " + fmt("%.0f s", elapsed) +
             " (limit 600 s)";
  return o;
}

// ---- criterion 6 -----------------------------------------------------------

Outcome ablation_direction(const fs::path& workdir) {
  constexpr std::size_t kBudget = 600;
  constexpr double kMargin = 0.005;
  const Dataset train = phantoms(64, 1000, "train");
  const Dataset val = phantoms(32, 5000, "val");

  struct Variant {
    const char* name;
    bool lms, aux, msaa;
  };
  const Variant variants[] = {{"full", true, true, true},
                              {"no_lms", false, true, true},
                              {"no_aux", true, false, true},
                              {"no_msaa", true, true, false}};
  std::vector<double> dice;
  std::set<std::string> schemas;
  std::string detail;
  for (const Variant& v : variants) {
    RunConfig rc = desk_config();
    rc.train.steps = kBudget;
    rc.model.use_lms = v.lms;
    rc.model.use_aux = v.aux;
    rc.model.use_msaa = v.msaa;
    if (!v.aux) rc.model.epsilon = 0;
    const auto t0 = Clock::now();
    Trainer trainer(rc, train);
    for (std::size_t s = 0; s < kBudget; ++s) trainer.step();
    const EvalResult r = evaluate(trainer.model(), val, "val", kBudget);
    const fs::path dir = workdir / "ablation" / v.name;
    fs::create_directories(dir);
    write_metrics_csv(dir / "metrics.csv", r.rows);
    // Schema: the header plus the (split, class) key of every row.
    std::ifstream in(dir / "metrics.csv");
    const auto rows = parse_metrics_csv(in);
    std::string schema = kMetricsHeader;
    for (const auto& row : rows) schema += "|" + row.split + ":" + row.cls;
    schemas.insert(schema);
    dice.push_back(r.mean_dice);
    std::printf("  [ablation] %s val mean dice %.4f (%.0f s)\n", v.name, r.mean_dice,
                seconds_since(t0));
    std::fflush(stdout);
    detail += std::string(detail.empty() ? "" : ", ") + v.name + " " + fmt("%.4f", r.mean_dice);
  }
  bool direction = true;
  for (std::size_t i = 1; i < dice.size(); ++i) direction &= dice[0] >= dice[i] - kMargin;

  Outcome o;
  o.passed = direction && schemas.size() == 1 && dice.size() == 4;
  o.detail = "64 train phantoms, val mean Dice on 32 phantoms after " + std::to_string(kBudget) +
             " steps: " + detail + " (full must be >= each - 0.005); CSV schemas " +
             (schemas.size() == 1 ? "identical" : "DIFFER");
  return o;
}

// ---- criterion 7 -----------------------------------------------------------

namespace {

#ifdef MSV_CLI_PATH
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MSV_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace

Outcome persistence_and_cli(const fs::path& workdir) {
  std::vector<std::string> failures;
  const fs::path dir = workdir / "persistence";
  fs::remove_all(dir);
  fs::create_directories(dir);

  RunConfig rc = desk_config();
  rc.model.channels = {4, 8, 8, 16};
  rc.train.batch_size = 2;
  const Dataset data = phantoms(4, 300, "train", 32);

  // Save -> load -> save is bitwise identical.
  Trainer trainer(rc, data);
  for (int i = 0; i < 3; ++i) trainer.step();
  save_checkpoint(dir / "a.msvm", trainer.checkpoint());
  save_checkpoint(dir / "b.msvm", load_checkpoint(dir / "a.msvm"));
  const bool bitwise = slurp(dir / "a.msvm") == slurp(dir / "b.msvm");
  if (!bitwise) failures.push_back("save/load/save bytes differ");

  // A flipped byte is reported, not crashed on.
  auto bytes = encode_checkpoint(trainer.checkpoint());
  bytes[bytes.size() / 3] ^= 0x01;
  bool corruption_caught = false;
  try {
    decode_checkpoint(bytes);
  } catch (const IntegrityError&) {
    corruption_caught = true;
  }
  if (!corruption_caught) failures.push_back("corruption not detected");

  // Steps 0-10 straight vs 0-5, save, load, 5-10.
  Trainer straight(rc, data);
  double loss_straight = 0;
  for (int i = 0; i < 10; ++i) loss_straight = straight.step().loss_total;
  Trainer first(rc, data);
  for (int i = 0; i < 5; ++i) first.step();
  save_checkpoint(dir / "step5.msvm", first.checkpoint());
  Trainer resumed = Trainer::resume(load_checkpoint(dir / "step5.msvm"), data);
  double loss_resumed = 0;
  for (int i = 0; i < 5; ++i) loss_resumed = resumed.step().loss_total;
  const bool resume_ok = loss_resumed == loss_straight;
  if (!resume_ok) failures.push_back("resume diverged");

  std::string cli;
#ifdef MSV_CLI_PATH
  const fs::path sa = dir / "synth_a", sb = dir / "synth_b";
  const int rc_a = run_cli("synth --count 4 --seed 7 --out " + sa.string(), dir / "synth_a.log");
  const int rc_b = run_cli("synth --count 4 --seed 7 --out " + sb.string(), dir / "synth_b.log");
  bool synth_same = rc_a == 0 && rc_b == 0;
  std::size_t files = 0;
  if (synth_same) {
    for (const auto& e : fs::recursive_directory_iterator(sa)) {
      if (!e.is_regular_file()) continue;
      ++files;
      synth_same &= slurp(e.path()) == slurp(sb / fs::relative(e.path(), sa));
    }
    synth_same &= files > 0;
  }
  if (!synth_same) failures.push_back("synth not deterministic");
  const int gc = run_cli("gradcheck --f64", dir / "gradcheck_f64.log");
  if (gc != 0) failures.push_back("gradcheck --f64 exit " + std::to_string(gc));
  cli = std::string(", synth x2 ") + (synth_same ? "identical" : "DIFFERENT") + " (" +
        std::to_string(files) + " files), gradcheck --f64 exit " + std::to_string(gc);
#else
  failures.push_back("CLI not built");
#endif

  Outcome o;
  o.passed = failures.empty();
  o.detail = std::string("checkpoint save/load/save ") + (bitwise ? "bitwise" : "DIFFERENT") +
             ", corrupted byte " + (corruption_caught ? "-> IntegrityError" : "MISSED") +
             ", resume@5 step-10 loss " + fmt("%.9g", loss_resumed) + " vs " +
             fmt("%.9g", loss_straight) + cli;
  for (const auto& f : failures) o.detail += "; FAILED " + f;
  return o;
}

}  // namespace msv::acceptance
