// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Optional arguments select criteria by name.

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>

#include "httplib.h"
#include "json.hpp"
#include "pseg/base64.hpp"
#include "pseg/checkpoint.hpp"
#include "pseg/data.hpp"
#include "pseg/io.hpp"
#include "pseg/metrics.hpp"
#include "pseg/train.hpp"
#include "support/gradcheck.hpp"
#include "support/process.hpp"
#include "support/rle_oracle.hpp"
#include "support/tempdir.hpp"

using namespace pseg;
using nlohmann::json;
using nn::Tensor;
namespace fs = std::filesystem;
namespace pt = pseg::testing;

namespace {

const std::string kCli = PSEG_CLI;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// Shared scratch space; the overfit checkpoint feeds the service criterion.
struct Workspace {
  pt::TempDir dir{"pseg_accept"};
  data::SyntheticConfig synth{16, 64, 0.3f, 0.05f, 7};
  fs::path overfit_ckpt;
};

// ---------------------------------------------------------------- overfit

Outcome overfit(Workspace& ws) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = ws.dir / "synth";
  const auto idx = data::generate_synthetic(ws.synth, ds);

  model::ModelConfig mc;
  mc.depth = 2;
  mc.base_channels = 8;
  mc.seed = 1;
  model::UNet net(mc);
  train::TrainConfig tc;
  tc.lr = 1e-3f;
  tc.batch_size = 16;
  tc.max_steps = 500;
  tc.max_epochs = 500;
  tc.patience = 500;
  tc.seed = 3;
  // Validation runs on the training set: the criterion is a train-set fit.
  auto res = train::train(net, idx, idx, tc);
  ws.overfit_ckpt = ws.dir / "overfit.pseg";
  io::write_file(ws.overfit_ckpt, res.best.serialize());
  const double secs = seconds_since(t0);

  // Score through the CLI as a user would.
  const auto r = pt::run({kCli, "eval", "--checkpoint", ws.overfit_ckpt.string(), "--data",
                          ds.string()},
                         ws.dir.path());
  if (r.exit_code != 0) return {false, "pseg eval failed: " + r.err};
  std::istringstream head(r.out.substr(0, r.out.find('\n')));
  int n = 0, min_area = 0;
  double theta = 0, dice = 0, iou = 0;
  head >> n >> theta >> min_area >> dice >> iou;

  const bool ok = n == 16 && res.history.steps <= 500 && dice >= 0.95 && iou >= 0.90 &&
                  secs <= 600.0;
  return {ok, fmt::format("n={} steps={} mean_dice={:.4f} (>=0.95) mean_iou={:.4f} (>=0.90) "
                          "train_time={:.1f}s (<=600s)",
                          n, res.history.steps, dice, iou, secs)};
}

// -------------------------------------------------------------- gradients

Outcome gradients(Workspace&) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-3;
  using F = std::function<Tensor(const std::vector<Tensor>&)>;
  using Inputs = std::function<std::vector<Tensor>(int, std::mt19937_64&)>;
  struct Case {
    std::string name;
    std::function<F(int)> make;
    Inputs inputs;
  };
  auto r = [](nn::Shape s, std::mt19937_64& g, float lo = -1, float hi = 1) {
    return pt::random_tensor(std::move(s), g, lo, hi);
  };
  auto unary = [](Tensor (*op)(const Tensor&)) {
    return [op](int) -> F { return [op](const std::vector<Tensor>& t) { return op(t[0]); }; };
  };
  auto bn = [](nn::Mode mode) {
    return [mode](int) -> F {
      auto stats = std::make_shared<nn::RunningStats>(3);
      stats->mean.data()[1] = 0.2f;
      stats->var.data()[2] = 0.5f;
      return [=](const std::vector<Tensor>& t) {
        return nn::batch_norm(t[0], t[1], t[2], *stats, mode);
      };
    };
  };
  auto bn_inputs = [r](int, std::mt19937_64& g) {
    return std::vector<Tensor>{r({2, 3, 3, 3}, g, -2, 2), r({3}, g, 0.5f, 1.5f), r({3}, g)};
  };

  const std::vector<Case> cases{
      {"conv2d",
       [](int i) -> F {
         const int stride = 1 + i % 2, pad = (i / 2) % 2;
         return [=](const std::vector<Tensor>& t) { return nn::conv2d(t[0], t[1], t[2], stride, pad); };
       },
       [r](int i, std::mt19937_64& g) {
         const int k = i % 3 == 0 ? 1 : 3;
         return std::vector<Tensor>{r({2, 2, 5, 5}, g), r({3, 2, k, k}, g), r({3}, g)};
       }},
      {"max_pool2", unary(nn::max_pool2),
       [](int, std::mt19937_64& g) { return std::vector<Tensor>{pt::spaced_tensor({1, 2, 4, 4}, g)}; }},
      {"upsample2_nearest", unary(nn::upsample2_nearest),
       [r](int, std::mt19937_64& g) { return std::vector<Tensor>{r({2, 2, 3, 2}, g)}; }},
      {"concat_channels",
       [](int) -> F { return [](const std::vector<Tensor>& t) { return nn::concat_channels(t[0], t[1]); }; },
       [r](int i, std::mt19937_64& g) {
         return std::vector<Tensor>{r({2, 1 + i % 3, 3, 3}, g), r({2, 2, 3, 3}, g)};
       }},
      {"slice_channels",
       [](int i) -> F {
         return [i](const std::vector<Tensor>& t) { return nn::slice_channels(t[0], i % 2, 2 + i % 3); };
       },
       [r](int, std::mt19937_64& g) { return std::vector<Tensor>{r({2, 5, 3, 3}, g)}; }},
      {"batch_norm(train)", bn(nn::Mode::train), bn_inputs},
      {"batch_norm(eval)", bn(nn::Mode::eval), bn_inputs},
      {"relu", unary(nn::relu),
       [](int, std::mt19937_64& g) { return std::vector<Tensor>{pt::spaced_tensor({1, 1, 5, 5}, g)}; }},
      {"sigmoid", unary(nn::sigmoid),
       [r](int, std::mt19937_64& g) { return std::vector<Tensor>{r({1, 1, 5, 5}, g, -4, 4)}; }},
      {"add", [](int) -> F { return [](const std::vector<Tensor>& t) { return nn::add(t[0], t[1]); }; },
       [r](int, std::mt19937_64& g) { return std::vector<Tensor>{r({3, 4}, g), r({3, 4}, g)}; }},
      {"mul", [](int) -> F { return [](const std::vector<Tensor>& t) { return nn::mul(t[0], t[1]); }; },
       [r](int, std::mt19937_64& g) { return std::vector<Tensor>{r({3, 4}, g), r({3, 4}, g)}; }},
      {"sum", unary(nn::sum),
       [r](int, std::mt19937_64& g) { return std::vector<Tensor>{r({2, 3, 2}, g)}; }},
      {"mean", unary(nn::mean),
       [r](int, std::mt19937_64& g) { return std::vector<Tensor>{r({2, 3, 2}, g)}; }},
      {"bce_loss",
       [](int) -> F { return [](const std::vector<Tensor>& t) { return metrics::bce_loss(t[0], t[1]); }; },
       [r](int, std::mt19937_64& g) {
         return std::vector<Tensor>{r({2, 1, 3, 3}, g, 0.05f, 0.95f), r({2, 1, 3, 3}, g, 0.0f, 1.0f)};
       }},
  };

  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::string worst_op, failures;
  for (const auto& c : cases) {
    for (int i = 0; i < kInstances; ++i) {
      const auto res = pt::grad_check(c.make(i), c.inputs(i, rng), rng);
      if (res.max_rel_error > worst) {
        worst = res.max_rel_error;
        worst_op = c.name;
      }
      if (!(res.max_rel_error < kTol))
        failures += fmt::format(" {}#{}={:.2e}", c.name, i, res.max_rel_error);
    }
  }
  const double secs = seconds_since(t0);
  return {failures.empty() && secs <= 60.0,
          fmt::format("{} ops x {} instances, worst rel err {:.2e} ({}) (<1e-3), time={:.1f}s "
                      "(<=60s){}",
                      cases.size(), kInstances, worst, worst_op, secs,
                      failures.empty() ? "" : "; failing:" + failures)};
}

// -------------------------------------------------------------------- rle

Outcome rle_suite(Workspace&) {
  int checked = 0;
  std::string first_bad;
  auto check = [&](const std::string& r, int w, int h) {
    ++checked;
    const auto canonical = rle::canonicalize(r, w, h);
    const auto oracle = pt::naive_encode(pt::naive_paint(r, w, h));
    const auto round_trip = rle::encode(rle::decode(r, w, h));
    if ((round_trip != canonical || canonical != oracle) && first_bad.empty())
      first_bad = fmt::format("{}x{} '{}'", w, h, r.substr(0, 60));
  };

  for (int bits = 0; bits < 512; ++bits) {
    std::vector<int> flat(9);
    for (int i = 0; i < 9; ++i) flat[i] = (bits >> i) & 1;
    check(pt::naive_encode(flat), 3, 3);
  }
  std::mt19937_64 rng(512);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    if (i % 2 == 0) {
      const auto m = pt::random_mask(256, 256, rng, density(rng) * density(rng));
      check(pt::naive_encode(pt::flatten_cm(m)), 256, 256);
    } else {
      check(pt::random_rle(256, 256, rng), 256, 256);  // non-canonical spellings
    }
  }
  return {first_bad.empty() && checked == 1512,
          fmt::format("{} strings (512 exhaustive 3x3 + 1000 random 256x256) encode(decode(r)) == "
                      "canonical(r){}",
                      checked, first_bad.empty() ? "" : "; mismatch at " + first_bad)};
}

// ---------------------------------------------------------------- metrics

Outcome metric_identities(Workspace&) {
  std::mt19937_64 rng(1000);
  std::uniform_int_distribution<int> side(1, 48);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int w = side(rng), h = side(rng);
    const auto a = pt::random_mask(w, h, rng, i % 10 == 0 ? 0.0 : density(rng));
    const auto b = pt::random_mask(w, h, rng, density(rng));
    const double d = metrics::dice(a, b), j = metrics::iou(a, b);
    worst = std::max(worst, std::abs(d - 2 * j / (1 + j)));
  }
  const BinaryMask e1(7, 5), e2(7, 5);
  const bool empty_ok = metrics::dice(e1, e2) == 1.0 && metrics::iou(e1, e2) == 1.0;

  BinaryMask x(4, 4), y(4, 4);
  for (int c = 0; c < 4; ++c) x.set(0, c, 1);      // |x| = 4
  for (int c = 1; c < 4; ++c) y.set(0, c, 1);      // overlap 3
  for (int c = 0; c < 3; ++c) y.set(2, c, 1);      // |y| = 6
  const double wd = metrics::dice(x, y), wi = metrics::iou(x, y);
  const bool worked_ok = std::abs(wd - 0.6) < 1e-12 && std::abs(wi - 3.0 / 7.0) < 1e-12;

  return {worst <= 1e-6 && empty_ok && worked_ok,
          fmt::format("1000 pairs max |dice - 2iou/(1+iou)| = {:.1e} (<=1e-6); both-empty {}; "
                      "worked pair dice={:.6f} iou={:.6f}",
                      worst, empty_ok ? "1.0/1.0" : "WRONG", wd, wi)};
}

// ------------------------------------------------------------- early stop

Outcome early_stop(Workspace& ws) {
  const auto idx = data::generate_synthetic({12, 16, 0.3f, 0.05f, 5}, ws.dir / "es");
  const std::vector<double> seq{0.5, 0.4, 0.41, 0.42, 0.43, 0.44, 0.45, 0.46, 0.47};
  model::ModelConfig mc;
  mc.depth = 2;
  mc.base_channels = 4;
  mc.blocks_per_stage = 1;
  model::UNet net(mc);
  train::TrainConfig tc;
  tc.lr = 1e-3f;
  tc.batch_size = 4;
  tc.max_epochs = static_cast<int>(seq.size());
  tc.patience = 5;
  tc.val_fraction = 0.25f;
  tc.min_area = 4;
  tc.seed = 9;
  train::TrainHooks hooks;
  // The stopper sees the scripted sequence; weights still train for real.
  hooks.monitor = [&](int epoch, double) { return seq.at(epoch - 1); };
  const auto res = train::train(net, idx, tc, hooks);

  const auto [tr, va] = data::split(idx, tc.val_fraction, tc.seed);
  const auto reloaded = model::load_checkpoint(res.best.serialize());
  const double replay = train::validate(reloaded, va, tc.theta, tc.min_area, tc.batch_size).loss;
  const int epochs = static_cast<int>(res.history.per_epoch.size());
  const double recorded = epochs >= 2 ? res.history.per_epoch[1].val_loss : NAN;
  const double diff = std::abs(replay - recorded);
  return {epochs == 7 && res.history.stopped_early && res.history.best_epoch == 2 && diff <= 1e-6,
          fmt::format("stopped after epoch {} (7), best_epoch {} (2), checkpoint val_loss {:.9f} vs "
                      "epoch-2 {:.9f}, |diff|={:.1e} (<=1e-6)",
                      epochs, res.history.best_epoch, replay, recorded, diff)};
}

// ------------------------------------------------------------ determinism

Outcome determinism(Workspace& ws) {
  std::string history[2], report[2];
  for (int k = 0; k < 2; ++k) {
    const auto root = ws.dir / ("det" + std::to_string(k));
    fs::create_directories(root);
    const auto ds = (root / "ds").string(), ckpt = (root / "m.pseg").string(),
               hist = (root / "history.csv").string();
    const std::vector<std::vector<std::string>> steps{
        {kCli, "synth", "--out", ds, "--n", "12", "--size", "32", "--seed", "11"},
        {kCli, "train", "--data", ds, "--image-size", "32", "--depth", "2", "--base", "8",
         "--max-epochs", "3", "--batch-size", "4", "--lr", "1e-3", "--augment", "--seed", "5",
         "--min-area", "8", "--out", ckpt, "--history", hist},
        {kCli, "eval", "--checkpoint", ckpt, "--data", ds, "--min-area", "8"}};
    for (const auto& argv : steps) {
      const auto r = pt::run(argv, root);
      if (r.exit_code != 0) return {false, "pseg " + argv[1] + " failed: " + r.err};
      if (argv[1] == "eval") report[k] = r.out;
    }
    history[k] = pt::slurp(hist);
  }
  const auto rows = std::count(history[0].begin(), history[0].end(), '\n') - 1;
  const bool same = history[0] == history[1] && !history[0].empty();
  return {same && rows == 3 && report[0] == report[1],
          fmt::format("history CSVs {} ({} bytes, {} epochs); eval reports {}",
                      same ? "byte-identical" : "DIFFER", history[0].size(), rows,
                      report[0] == report[1] ? "identical" : "DIFFER")};
}

// ------------------------------------------------------------- checkpoint

Outcome checkpoint_round_trip(Workspace&) {
  model::ModelConfig mc;
  mc.depth = 3;
  mc.base_channels = 8;
  mc.seed = 21;
  model::UNet net(mc);
  std::mt19937_64 rng(5);
  {
    // Move the batch-norm running statistics off their init values.
    nn::NoGradGuard g;
    net.forward(pt::random_tensor({2, 1, 32, 32}, rng, 0, 1, false), nn::Mode::train);
  }
  const auto probe = pt::random_tensor({3, 1, 32, 32}, rng, 0, 1, false);
  nn::NoGradGuard g;
  const auto before = net.forward(probe, nn::Mode::eval);
  auto loaded = model::load_checkpoint(model::save_checkpoint(net));
  const auto after = loaded.forward(probe, nn::Mode::eval);
  const bool forward_same = bit_equal(before.data(), after.data());

  model::ModelConfig src_cfg = mc, dst_cfg = mc;
  src_cfg.seed = 100;
  dst_cfg.seed = 200;
  const model::UNet source(src_cfg), fresh(dst_cfg);
  model::UNet target(dst_cfg);
  auto enc = model::Checkpoint::from_model(source);
  std::erase_if(enc.arrays,
                [](const model::NamedArray& a) { return !a.name.starts_with(model::kEncoderPrefix); });
  model::load_weights(target, model::Checkpoint::parse(enc.serialize()),
                      model::LoadMode::encoder_only);
  const auto got = target.named_arrays(), src = source.named_arrays(), init = fresh.named_arrays();
  std::size_t n_enc = 0, n_rest = 0, bad = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const bool is_enc = got[i].name.starts_with(model::kEncoderPrefix);
    const auto& want = is_enc ? src[i] : init[i];
    bad += !bit_equal(got[i].tensor.data(), want.tensor.data());
    (is_enc ? n_enc : n_rest) += got[i].tensor.data().size();
  }
  return {forward_same && bad == 0 && n_enc > 0 && n_rest > 0,
          fmt::format("forward {} on {} outputs; encoder-only load: {} encoder values copied, {} "
                      "other values at seeded init, {} mismatching arrays",
                      forward_same ? "bit-identical" : "DIFFERS", before.data().size(), n_enc,
                      n_rest, bad)};
}

// ---------------------------------------------------------------- service

// Offline recompute of the served mask from the 8-bit probability map.
// theta * 255 sits halfway between two levels, so q >= theta*255 matches
// the server's p >= theta exactly.
std::string recompute_rle(const imaging::Gray8& q, float theta, int min_area) {
  const int w = q.width, h = q.height;
  std::vector<int> on(static_cast<std::size_t>(w) * h), keep(on.size(), 0), seen(on.size(), 0);
  for (std::size_t i = 0; i < on.size(); ++i) on[i] = q.pixels[i] >= theta * 255.0f;
  for (int start = 0; start < w * h; ++start) {
    if (!on[start] || seen[start]) continue;
    std::vector<int> comp{start};
    seen[start] = 1;
    for (std::size_t k = 0; k < comp.size(); ++k) {
      const int r = comp[k] / w, c = comp[k] % w;
      const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& p : nb) {
        if (p[0] < 0 || p[0] >= h || p[1] < 0 || p[1] >= w) continue;
        const int j = p[0] * w + p[1];
        if (on[j] && !seen[j]) {
          seen[j] = 1;
          comp.push_back(j);
        }
      }
    }
    if (static_cast<int>(comp.size()) >= min_area)
      for (int j : comp) keep[j] = 1;
  }
  std::vector<int> flat;  // column-major
  for (int c = 0; c < w; ++c)
    for (int r = 0; r < h; ++r) flat.push_back(keep[r * w + c]);
  return pt::naive_encode(flat);
}

struct Server {
  std::unique_ptr<pt::Child> child;
  int port = 0;
};

Server start_server(const Workspace& ws, const fs::path& store, int generation) {
  Server s;
  const auto tag = "serve" + std::to_string(generation);
  s.child = std::make_unique<pt::Child>(
      std::vector<std::string>{kCli, "serve", "--checkpoint", ws.overfit_ckpt.string(), "--host",
                               "127.0.0.1", "--port", "0", "--data-dir", store.string()},
      ws.dir / (tag + ".out"), ws.dir / (tag + ".err"));
  const auto banner = s.child->wait_for_output("\n", std::chrono::seconds(30));
  const auto colon = banner.rfind(':', banner.find(" (data dir"));
  s.port = std::stoi(banner.substr(colon + 1));
  return s;
}

Outcome service_round_trip(Workspace& ws) {
  const auto idx = data::load_index_file(ws.dir / "synth" / "index.csv", ws.dir / "synth" / "images",
                                         ws.synth.image_size);
  const data::IndexEntry* positive = nullptr;
  for (const auto& e : idx.entries)
    if (e.rle != rle::kEmpty) {
      positive = &e;
      break;
    }
  if (!positive) return {false, "synthetic set has no positive sample"};
  const auto png = io::read_file(idx.image_path(*positive));
  const std::string body(png.begin(), png.end());
  const auto store = ws.dir / "store";
  constexpr float kTheta = 0.5f;  // 127.5 / 255: midway between two 8-bit levels
  constexpr int kMinArea = 32;

  auto srv = start_server(ws, store, 1);
  httplib::Client cli("127.0.0.1", srv.port);
  cli.set_read_timeout(30);

  double worst_latency = 0.0;
  json pred;
  for (int i = 0; i < 3; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = cli.Post(fmt::format("/predict?theta={}&min_area={}", kTheta, kMinArea), body,
                              "image/png");
    worst_latency = std::max(worst_latency, seconds_since(t0));
    if (!res || res->status != 200)
      return {false, "predict failed: " + (res ? res->body : httplib::to_string(res.error()))};
    if (i == 0) pred = json::parse(res->body);
  }
  const std::string id = pred["study_id"], rle_text = pred["rle"];
  const auto prob = imaging::decode_png(base64::decode(pred["prob_map"].get<std::string>()));
  const auto offline = recompute_rle(prob, kTheta, kMinArea);
  const bool consistent = offline == rle_text && prob.width == pred["width"] &&
                          prob.height == pred["height"];

  const json decision{{"verdict", "accept"}, {"theta", kTheta}, {"note", "acceptance run"}};
  const auto dres = cli.Post("/studies/" + id + "/decision", decision.dump(), "application/json");
  const auto after = cli.Get("/studies/" + id);
  const bool flipped = pred["status"] == "pending" && dres && dres->status == 200 && after &&
                       json::parse(after->body)["status"] == "reviewed";

  const auto before_restart = cli.Get("/studies");
  if (!before_restart) return {false, "GET /studies failed"};
  const int stop_code = srv.child->terminate();
  auto srv2 = start_server(ws, store, 2);
  httplib::Client cli2("127.0.0.1", srv2.port);
  const auto after_restart = cli2.Get("/studies");
  const bool preserved = after_restart && stop_code == 0 &&
                         json::parse(before_restart->body) == json::parse(after_restart->body) &&
                         json::parse(after_restart->body).size() == 3;
  srv2.child->terminate();

  return {rle_text != rle::kEmpty && consistent && flipped && preserved && worst_latency <= 2.0,
          fmt::format("rle {} ({} chars), offline recompute {}, decision {}, restart {}, "
                      "predict latency max {:.3f}s over 3 (<=2s)",
                      rle_text == rle::kEmpty ? "EMPTY" : "non-empty", rle_text.size(),
                      consistent ? "matches" : "DIFFERS", flipped ? "flips status" : "NO FLIP",
                      preserved ? "preserves /studies" : "LOSES STATE", worst_latency)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome(Workspace&)>>> criteria{
      {"overfit", overfit},
      {"gradients", gradients},
      {"rle", rle_suite},
      {"metrics", metric_identities},
      {"early_stop", early_stop},
      {"determinism", determinism},
      {"checkpoint", checkpoint_round_trip},
      {"service", service_round_trip},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted)
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == w; })) {
      std::cerr << "unknown criterion '" << w << "'\n";
      return 2;
    }
  // The service criterion serves the overfit checkpoint.
  if (wanted.count("service")) wanted.insert("overfit");

  Workspace ws;
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    Outcome o;
    try {
      o = fn(ws);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    fmt::print("{} {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
