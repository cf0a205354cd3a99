// Command-line front end: dataset generation, training, evaluation,
// prediction, RLE conversion and the HTTP service.

#include <fmt/format.h>

#include <csignal>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "pseg/io.hpp"
#include "pseg/service.hpp"
#include "pseg/train.hpp"

namespace fs = std::filesystem;
using namespace pseg;

namespace {

// Usage problems exit 2, everything else 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

model::Checkpoint read_checkpoint(const fs::path& path) {
  try {
    return model::Checkpoint::parse(io::read_file(path));
  } catch (const model::CheckpointError& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

struct DataArgs {
  std::string data;
  std::string index;
  std::string images;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--data", data, "Dataset directory holding index.csv and images/");
    cmd->add_option("--index", index, "Index CSV (ImageId,EncodedPixels); default <data>/index.csv");
    cmd->add_option("--images", images, "Image directory; default <data>/images");
  }

  data::DatasetIndex load(int image_size) const {
    if (data.empty() && (index.empty() || images.empty()))
      throw UsageError("give --data, or both --index and --images");
    const fs::path csv = index.empty() ? fs::path(data) / "index.csv" : fs::path(index);
    const fs::path root = images.empty() ? fs::path(data) / "images" : fs::path(images);
    auto idx = data::load_index_file(csv, root, image_size);
    for (const auto& s : idx.skipped) fmt::print(stderr, "skipped {}: {}\n", s.id, s.reason);
    return idx;
  }
};

void run_synth(const data::SyntheticConfig& cfg, const std::string& out) {
  const auto idx = data::generate_synthetic(cfg, out);
  std::size_t positives = 0;
  for (const auto& e : idx.entries) positives += e.rle != rle::kEmpty;
  fmt::print("wrote {} samples ({} positive) to {}\n", idx.entries.size(), positives, out);
}

struct TrainArgs {
  DataArgs data;
  model::ModelConfig model;
  train::TrainConfig cfg;
  int image_size = data::kDefaultImageSize;
  std::string out = "model.pseg";
  std::string history = "history.csv";
};

void run_train(const TrainArgs& a) {
  const auto idx = a.data.load(a.image_size);
  model::UNet net(a.model);
  train::TrainHooks hooks;
  hooks.on_epoch = [](const train::EpochRecord& r) {
    fmt::print(stderr, "epoch {} train_loss {:.6f} val_loss {:.6f} val_dice {:.4f} val_iou {:.4f}\n",
               r.epoch, r.train_loss, r.val_loss, r.val_dice, r.val_iou);
  };
  auto res = train::train(net, idx, a.cfg, hooks);
  io::write_file(a.out, res.best.serialize());
  io::write_file(a.history, res.history.to_csv());
  fmt::print("best_epoch {} epochs {} stopped_early {} checkpoint {}\n", res.history.best_epoch,
             res.history.per_epoch.size(), res.history.stopped_early ? 1 : 0, a.out);
}

void run_eval(const std::string& ckpt_path, const DataArgs& data, float theta, int min_area,
              int batch_size, bool as_json) {
  const auto ckpt = read_checkpoint(ckpt_path);
  const auto net = model::load_checkpoint(ckpt);
  const auto idx = data.load(train::checkpoint_image_size(ckpt));
  const auto report = train::evaluate(net, idx, theta, min_area, batch_size);
  std::cout << (as_json ? report.to_json() + "\n" : report.to_text());
}

void run_predict(const std::string& ckpt_path, const std::string& image, float theta,
                 int min_area, const std::string& overlay, const std::string& prob) {
  const auto ckpt = read_checkpoint(ckpt_path);
  const auto net = model::load_checkpoint(ckpt);
  train::Prediction p;
  try {
    p = train::predict(net, imaging::decode_png_file(image), theta, min_area,
                       train::checkpoint_image_size(ckpt));
  } catch (const imaging::ImageError& e) {
    // decode_png_file already names the file.
    throw std::runtime_error(e.what());
  }
  if (!overlay.empty()) io::write_file(overlay, imaging::encode_png(p.overlay));
  if (!prob.empty()) io::write_file(prob, imaging::encode_png(imaging::to_gray8(p.prob)));
  std::cout << p.rle << "\n";
}

void run_encode(const std::string& mask_path) {
  std::cout << rle::encode(imaging::mask_from_gray8(imaging::decode_png_file(mask_path))) << "\n";
}

void run_decode(const std::string& text, int width, int height, const std::string& out) {
  const auto mask = rle::decode(text, width, height);
  io::write_file(out, imaging::encode_png(imaging::to_gray8(mask)));
  fmt::print("{} pixels set\n", mask.count());
}

service::Service* g_service = nullptr;

void run_serve(const std::string& ckpt_path, const std::string& host, int port,
               const std::string& data_dir) {
  service::Service svc(read_checkpoint(ckpt_path), {data_dir, {}});
  const int bound = svc.bind(host, port);
  g_service = &svc;
  std::signal(SIGINT, [](int) { g_service->stop(); });
  std::signal(SIGTERM, [](int) { g_service->stop(); });
  fmt::print("listening on http://{}:{} (data dir {})\n", host, bound, data_dir);
  std::fflush(stdout);
  svc.run();
  g_service = nullptr;
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chest X-ray pneumothorax segmentation toolkit", "pseg"};
  app.require_subcommand(1);

  data::SyntheticConfig synth_cfg;
  std::string synth_out = "synthetic";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic ellipse dataset");
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
  synth->add_option("--n", synth_cfg.n_samples, "Number of samples")->capture_default_str();
  synth->add_option("--size", synth_cfg.image_size, "Image side in pixels")->capture_default_str();
  synth->add_option("--empty-fraction", synth_cfg.empty_fraction, "Fraction without a lesion")
      ->capture_default_str();
  synth->add_option("--noise-std", synth_cfg.noise_std, "Gaussian noise std")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "RNG seed")->capture_default_str();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a U-Net and write the best checkpoint");
  ta.data.add_to(trn);
  trn->add_option("--out", ta.out, "Checkpoint path")->capture_default_str();
  trn->add_option("--history", ta.history, "History CSV path")->capture_default_str();
  trn->add_option("--image-size", ta.image_size, "Model input side")->capture_default_str();
  trn->add_option("--depth", ta.model.depth, "Encoder stages")->capture_default_str();
  trn->add_option("--base", ta.model.base_channels, "Channels of the first stage")->capture_default_str();
  trn->add_option("--blocks", ta.model.blocks_per_stage, "Residual blocks per encoder stage")
      ->capture_default_str();
  trn->add_option("--model-seed", ta.model.seed, "Weight init seed")->capture_default_str();
  trn->add_option("--lr", ta.cfg.lr, "Adam learning rate")->capture_default_str();
  trn->add_option("--batch-size", ta.cfg.batch_size, "Mini-batch size")->capture_default_str();
  trn->add_option("--max-epochs", ta.cfg.max_epochs, "Epoch limit")->required();
  trn->add_option("--patience", ta.cfg.patience, "Early-stop patience")->capture_default_str();
  trn->add_option("--val-fraction", ta.cfg.val_fraction, "Validation share")->capture_default_str();
  trn->add_option("--theta", ta.cfg.theta, "Binarization threshold")->capture_default_str();
  trn->add_option("--min-area", ta.cfg.min_area, "Smallest kept component")->capture_default_str();
  trn->add_flag("--augment", ta.cfg.augment, "Random crop augmentation");
  trn->add_option("--seed", ta.cfg.seed, "Split/shuffle seed")->capture_default_str();
  trn->add_option("--max-steps", ta.cfg.max_steps, "Optimizer step budget (0 = none)")
      ->capture_default_str();

  std::string ckpt;
  DataArgs eval_data;
  float theta = imaging::kDefaultTheta;
  int min_area = imaging::kDefaultMinArea;
  int eval_batch = 8;
  bool as_json = false;
  auto* evl = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  evl->add_option("--checkpoint", ckpt, "Checkpoint path")->required();
  eval_data.add_to(evl);
  evl->add_option("--theta", theta, "Binarization threshold")->capture_default_str();
  evl->add_option("--min-area", min_area, "Smallest kept component")->capture_default_str();
  evl->add_option("--batch-size", eval_batch, "Inference batch size")->capture_default_str();
  evl->add_flag("--json", as_json, "Print the report as JSON");

  std::string image, overlay = "overlay.png", prob_out;
  auto* prd = app.add_subcommand("predict", "Segment one image");
  prd->add_option("--checkpoint", ckpt, "Checkpoint path")->required();
  prd->add_option("--image", image, "Input PNG")->required();
  prd->add_option("--theta", theta, "Binarization threshold")->capture_default_str();
  prd->add_option("--min-area", min_area, "Smallest kept component")->capture_default_str();
  prd->add_option("--overlay", overlay, "Overlay PNG output (empty to skip)")->capture_default_str();
  prd->add_option("--prob", prob_out, "Probability map PNG output");

  std::string mask_path;
  auto* enc = app.add_subcommand("encode", "Print the RLE of a mask PNG (nonzero = set)");
  enc->add_option("--mask", mask_path, "Mask PNG")->required();

  std::string rle_text, out_png = "mask.png";
  int width = 0, height = 0;
  auto* dec = app.add_subcommand("decode", "Render an RLE string as a mask PNG");
  dec->add_option("--rle", rle_text, "RLE string")->required();
  dec->add_option("--width", width, "Mask width")->required();
  dec->add_option("--height", height, "Mask height")->required();
  dec->add_option("--out", out_png, "Output PNG")->capture_default_str();

  std::string host = "127.0.0.1", data_dir = "pseg-data";
  int port = 8080;
  auto* srv = app.add_subcommand("serve", "Run the HTTP inference and review service");
  srv->add_option("--checkpoint", ckpt, "Checkpoint path")->required();
  srv->add_option("--host", host, "Bind address")->envname("PSEG_HOST")->capture_default_str();
  srv->add_option("--port", port, "Port (0 = any free port)")->envname("PSEG_PORT")->capture_default_str();
  srv->add_option("--data-dir", data_dir, "Study store directory")
      ->envname("PSEG_DATA_DIR")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n" << app.help();
    return 2;
  }

  try {
    if (*synth) run_synth(synth_cfg, synth_out);
    if (*trn) run_train(ta);
    if (*evl) run_eval(ckpt, eval_data, theta, min_area, eval_batch, as_json);
    if (*prd) run_predict(ckpt, image, theta, min_area, overlay, prob_out);
    if (*enc) run_encode(mask_path);
    if (*dec) run_decode(rle_text, width, height, out_png);
    if (*srv) run_serve(ckpt, host, port, data_dir);
  } catch (const UsageError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
