#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pseg/checkpoint.hpp"
#include "pseg/train.hpp"

namespace pseg::service {

enum class Verdict { accept, override_positive, override_negative };
std::string to_string(Verdict v);
/// Throws std::invalid_argument for anything but the three verdict names.
Verdict parse_verdict(std::string_view s);

struct DecisionRecord {
  std::int64_t timestamp = 0;  // UTC seconds
  std::string study_id;
  Verdict verdict = Verdict::accept;
  float theta = 0.0f;
  std::string note;
};

/// `timestamp study_id verdict theta "note"`, note with C-style escapes.
std::string format_decision(const DecisionRecord& r);
/// Throws std::invalid_argument on malformed lines.
DecisionRecord parse_decision(std::string_view line);

enum class ReviewStatus { pending, reviewed };
std::string to_string(ReviewStatus s);

struct StudyEntry {
  std::string study_id;
  std::int64_t created = 0;
  std::string rle;
  float theta = 0.0f;
  int min_area = 0;
  int width = 0;   // prediction grid
  int height = 0;
  ReviewStatus status = ReviewStatus::pending;
  std::optional<DecisionRecord> decision;
};

std::string format_study(const StudyEntry& s);
StudyEntry parse_study(std::string_view line);

/// Line-oriented append-only file. Every append is flushed with fsync.
class AppendLog {
 public:
  struct Loaded {
    std::vector<std::string> lines;
    std::optional<std::string> warning;  // set when a torn final line was dropped
  };

  /// Reads complete lines. A final line without its newline, or one that
  /// `valid` rejects, is treated as a torn write: it is dropped and the
  /// file is truncated back to the last complete record.
  static Loaded load(const std::filesystem::path& path,
                     const std::function<bool(std::string_view)>& valid);
  static void append(const std::filesystem::path& path, const std::string& line);
};

class StudyNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AlreadyReviewed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Study queue and decision log under one data directory:
///   studies.log, decisions.log, studies/<id>/{image,prob,overlay}.png
/// Mutations are serialized by one mutex; log order equals state order.
class StudyStore {
 public:
  explicit StudyStore(std::filesystem::path data_dir);

  const std::vector<std::string>& warnings() const { return warnings_; }

  StudyEntry add(std::span<const std::uint8_t> original_png, const train::Prediction& pred,
                 float theta, int min_area, std::int64_t now);
  std::vector<StudyEntry> list() const;
  std::optional<StudyEntry> get(const std::string& id) const;
  DecisionRecord decide(const std::string& id, Verdict verdict, float theta, std::string note,
                        std::int64_t now);

  std::filesystem::path study_file(const std::string& id, const std::string& name) const;
  std::filesystem::path decisions_path() const { return dir_ / "decisions.log"; }
  std::filesystem::path studies_path() const { return dir_ / "studies.log"; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::vector<StudyEntry> studies_;
  std::vector<std::string> warnings_;
  std::uint64_t next_id_ = 1;
};

struct ServiceOptions {
  std::filesystem::path data_dir = "pseg-data";
  std::function<std::int64_t()> clock;  // defaults to wall-clock UTC seconds
};

/// HTTP front end. JSON bodies; images travel as base64-encoded PNG fields.
class Service {
 public:
  Service(model::Checkpoint checkpoint, ServiceOptions opts);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  void run();
  void stop();
  /// Blocks until the server is accepting connections.
  void wait_until_ready() const;

  StudyStore& store();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pseg::service
