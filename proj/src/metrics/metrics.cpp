#include "pseg/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include "json.hpp"
#include <stdexcept>

namespace pseg::metrics {

namespace {

struct Counts {
  std::int64_t x = 0, y = 0, both = 0;
};

Counts count(const BinaryMask& x, const BinaryMask& y, const char* what) {
  if (x.width() != y.width() || x.height() != y.height())
    throw std::invalid_argument(fmt::format("{}: mask dims {}x{} vs {}x{}", what, x.width(),
                                            x.height(), y.width(), y.height()));
  Counts c;
  const auto a = x.pixels(), b = y.pixels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.x += a[i];
    c.y += b[i];
    c.both += a[i] & b[i];
  }
  return c;
}

}  // namespace

double dice(const BinaryMask& x, const BinaryMask& y) {
  const auto c = count(x, y, "dice");
  if (c.x + c.y == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.x + c.y);
}

double iou(const BinaryMask& x, const BinaryMask& y) {
  const auto c = count(x, y, "iou");
  const auto uni = c.x + c.y - c.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.both) / static_cast<double>(uni);
}

nn::Tensor bce_loss(const nn::Tensor& p, const nn::Tensor& y, float eps) {
  if (p.shape() != y.shape())
    throw nn::ShapeError("bce_loss: " + nn::shape_str(p.shape()) + " vs " +
                         nn::shape_str(y.shape()));
  if (p.numel() == 0) throw nn::ShapeError("bce_loss: empty input");
  const auto pd = p.data(), yd = y.data();
  const double lo = eps, hi = 1.0 - static_cast<double>(eps);
  double total = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double q = std::clamp(static_cast<double>(pd[i]), lo, hi);
    total -= yd[i] * std::log(q) + (1.0 - yd[i]) * std::log(1.0 - q);
  }
  const double n = static_cast<double>(pd.size());
  return nn::make_result(
      nn::Shape{1}, {static_cast<float>(total / n)}, {p.impl(), y.impl()},
      [lo, hi, n](nn::TensorImpl& self) {
        auto& pi = *self.parents[0];
        const auto& yv = self.parents[1]->data;
        if (pi.requires_grad) {
          auto& d = pi.ensure_grad();
          const double g = self.grad[0] / n;
          for (std::size_t i = 0; i < d.size(); ++i) {
            const double q = pi.data[i];
            if (q < lo || q > hi) continue;  // flat outside the clamp
            d[i] += static_cast<float>(g * (-yv[i] / q + (1.0 - yv[i]) / (1.0 - q)));
          }
        }
        auto& yi = *self.parents[1];
        if (yi.requires_grad) {
          auto& d = yi.ensure_grad();
          const double g = self.grad[0] / n;
          for (std::size_t i = 0; i < d.size(); ++i) {
            const double q = std::clamp(static_cast<double>(pi.data[i]), lo, hi);
            d[i] += static_cast<float>(g * (std::log(1.0 - q) - std::log(q)));
          }
        }
      });
}

std::string EvalReport::to_text() const {
  std::string out = fmt::format("{} {:.6f} {} {:.6f} {:.6f}\n", n_samples, theta, min_area,
                                mean_dice, mean_iou);
  for (const auto& s : per_sample) out += fmt::format("{} {:.6f} {:.6f}\n", s.id, s.dice, s.iou);
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["n_samples"] = n_samples;
  j["theta"] = theta;
  j["min_area"] = min_area;
  j["mean_dice"] = mean_dice;
  j["mean_iou"] = mean_iou;
  auto& rows = j["per_sample"] = nlohmann::json::array();
  for (const auto& s : per_sample) rows.push_back({{"id", s.id}, {"dice", s.dice}, {"iou", s.iou}});
  return j.dump();
}

EvalReport aggregate(std::vector<SampleScore> entries, float theta, int min_area) {
  if (entries.empty()) throw std::invalid_argument("aggregate: no samples to report");
  EvalReport r;
  double sd = 0.0, si = 0.0;
  for (const auto& e : entries) {
    sd += e.dice;
    si += e.iou;
  }
  r.n_samples = static_cast<int>(entries.size());
  r.mean_dice = sd / r.n_samples;
  r.mean_iou = si / r.n_samples;
  r.theta = theta;
  r.min_area = min_area;
  r.per_sample = std::move(entries);
  return r;
}

}  // namespace pseg::metrics
