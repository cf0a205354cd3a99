#include <fmt/format.h>

#include <charconv>
#include <chrono>
#include <random>

#include "httplib.h"
#include "json.hpp"
#include "pseg/base64.hpp"
#include "pseg/io.hpp"
#include "pseg/service.hpp"

namespace pseg::service {

using nlohmann::json;

namespace {

// Maps to a 4xx response with a JSON {"error": ...} body.
struct HttpError : std::runtime_error {
  int status;
  HttpError(int s, const std::string& msg) : std::runtime_error(msg), status(s) {}
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string b64_file(const std::filesystem::path& p) { return base64::encode(io::read_file(p)); }

json config_json(const model::ModelConfig& c) {
  return {{"in_channels", c.in_channels}, {"out_channels", c.out_channels},
          {"depth", c.depth},             {"base_channels", c.base_channels},
          {"blocks_per_stage", c.blocks_per_stage}, {"seed", c.seed}};
}

json decision_json(const DecisionRecord& d) {
  return {{"timestamp", d.timestamp}, {"study_id", d.study_id},
          {"verdict", to_string(d.verdict)}, {"theta", d.theta}, {"note", d.note}};
}

json study_json(const StudyEntry& s) {
  json j{{"study_id", s.study_id}, {"created", s.created}, {"status", to_string(s.status)},
         {"rle", s.rle},           {"theta", s.theta},     {"min_area", s.min_area},
         {"width", s.width},       {"height", s.height}};
  j["decision"] = s.decision ? decision_json(*s.decision) : json(nullptr);
  return j;
}

float theta_param(const httplib::Request& req) {
  if (!req.has_param("theta")) return imaging::kDefaultTheta;
  const auto v = req.get_param_value("theta");
  float t = 0.0f;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), t);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !(t > 0.0f && t < 1.0f))
    throw HttpError(400, "theta must be a number in (0,1), got '" + v + "'");
  return t;
}

int min_area_param(const httplib::Request& req) {
  if (!req.has_param("min_area")) return imaging::kDefaultMinArea;
  const auto v = req.get_param_value("min_area");
  int m = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), m);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || m < 0)
    throw HttpError(400, "min_area must be a non-negative integer, got '" + v + "'");
  return m;
}

std::string hex_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  return fmt::format("{:016x}", rng());
}

}  // namespace

struct Service::Impl {
  model::Checkpoint checkpoint;
  model::UNet model;
  int image_size;
  StudyStore store;
  std::function<std::int64_t()> clock;
  httplib::Server server;

  Impl(model::Checkpoint ckpt, ServiceOptions opts)
      : checkpoint(std::move(ckpt)),
        model(model::load_checkpoint(checkpoint)),
        image_size(train::checkpoint_image_size(checkpoint)),
        store(opts.data_dir),
        clock(opts.clock ? std::move(opts.clock) : [] {
          return static_cast<std::int64_t>(std::chrono::duration_cast<std::chrono::seconds>(
                                               std::chrono::system_clock::now().time_since_epoch())
                                               .count());
        }) {
    checkpoint.arrays.clear();  // weights live in `model`; keep config + metadata only
    for (const auto& w : store.warnings()) fmt::print(stderr, "[pseg] warning: {}\n", w);
    routes();
  }

  // Wraps a handler so HttpError and the store's state errors become 4xx.
  template <class F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        send_json(res, e.status, {{"error", e.what()}});
      } catch (const StudyNotFound& e) {
        send_json(res, 404, {{"error", e.what()}});
      } catch (const AlreadyReviewed& e) {
        send_json(res, 409, {{"error", e.what()}});
      }
    };
  }

  void routes() {
    server.set_payload_max_length(64u << 20);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server.set_exception_handler([](const httplib::Request& req, httplib::Response& res,
                                    std::exception_ptr ep) {
      const auto id = hex_id();
      std::string what = "unknown exception";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      fmt::print(stderr, "[pseg] error {} on {} {}: {}\n", id, req.method, req.path, what);
      send_json(res, 500, {{"error", "internal error"}, {"error_id", id}});
    });

    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200,
                {{"status", "ok"},
                 {"model_config", config_json(checkpoint.config)},
                 {"checkpoint_meta", checkpoint.metadata},
                 {"image_size", image_size},
                 {"image_encoding", "png+base64"}});
    }));

    server.Post("/predict", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const float theta = theta_param(req);
      const int min_area = min_area_param(req);
      std::string body;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("image")) throw HttpError(400, "multipart upload lacks an 'image' field");
        body = req.get_file_value("image").content;
      } else {
        body = req.body;
      }
      if (body.empty()) throw HttpError(400, "empty image upload");
      const std::span bytes(reinterpret_cast<const std::uint8_t*>(body.data()), body.size());
      train::Prediction pred;
      try {
        pred = train::predict(model, bytes, theta, min_area, image_size);
      } catch (const imaging::ImageError& e) {
        throw HttpError(400, std::string("unreadable image: ") + e.what());
      }
      const auto entry = store.add(bytes, pred, theta, min_area, clock());
      auto j = study_json(entry);
      j["prob_map"] = b64_file(store.study_file(entry.study_id, "prob.png"));
      j["overlay"] = b64_file(store.study_file(entry.study_id, "overlay.png"));
      send_json(res, 200, j);
    }));

    server.Get("/studies", guarded([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& s : store.list()) list.push_back(study_json(s));
      send_json(res, 200, list);
    }));

    server.Get(R"(/studies/([^/]+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 const auto s = store.get(id);
                 if (!s) throw StudyNotFound("unknown study '" + id + "'");
                 auto j = study_json(*s);
                 j["image"] = b64_file(store.study_file(id, "image.png"));
                 j["prob_map"] = b64_file(store.study_file(id, "prob.png"));
                 j["overlay"] = b64_file(store.study_file(id, "overlay.png"));
                 send_json(res, 200, j);
               }));

    server.Post(R"(/studies/([^/]+)/decision)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  const auto body = json::parse(req.body, nullptr, false);
                  if (body.is_discarded() || !body.is_object())
                    throw HttpError(400, "decision body must be a JSON object");
                  if (body.contains("study_id") &&
                      (!body["study_id"].is_string() || body["study_id"] != id))
                    throw HttpError(400, "study_id in body does not match the path");
                  if (!body.contains("verdict") || !body["verdict"].is_string())
                    throw HttpError(400, "missing string field 'verdict'");
                  if (!body.contains("theta") || !body["theta"].is_number())
                    throw HttpError(400, "missing numeric field 'theta'");
                  Verdict verdict;
                  try {
                    verdict = parse_verdict(body["verdict"].get<std::string>());
                  } catch (const std::invalid_argument& e) {
                    throw HttpError(400, e.what());
                  }
                  const auto theta = body["theta"].get<float>();
                  if (!(theta > 0.0f && theta < 1.0f)) throw HttpError(400, "theta must lie in (0,1)");
                  std::string note;
                  if (body.contains("note")) {
                    if (!body["note"].is_string()) throw HttpError(400, "note must be a string");
                    note = body["note"].get<std::string>();
                  }
                  const auto rec = store.decide(id, verdict, theta, std::move(note), clock());
                  send_json(res, 200, decision_json(rec));
                }));
  }
};

Service::Service(model::Checkpoint checkpoint, ServiceOptions opts)
    : impl_(std::make_unique<Impl>(std::move(checkpoint), std::move(opts))) {}

Service::~Service() = default;

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p <= 0) throw std::runtime_error("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
  return port;
}

void Service::run() {
  if (!impl_->server.listen_after_bind()) throw std::runtime_error("server stopped with an error");
}

void Service::stop() { impl_->server.stop(); }

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

StudyStore& Service::store() { return impl_->store; }

}  // namespace pseg::service
