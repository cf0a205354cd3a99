#include <fcntl.h>
#include <fmt/format.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <algorithm>

#include "pseg/imaging.hpp"
#include "pseg/io.hpp"
#include "pseg/service.hpp"

namespace pseg::service {

namespace fs = std::filesystem;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::accept: return "accept";
    case Verdict::override_positive: return "override_positive";
    case Verdict::override_negative: return "override_negative";
  }
  return "?";
}

Verdict parse_verdict(std::string_view s) {
  if (s == "accept") return Verdict::accept;
  if (s == "override_positive") return Verdict::override_positive;
  if (s == "override_negative") return Verdict::override_negative;
  throw std::invalid_argument("unknown verdict '" + std::string(s) +
                              "' (expected accept, override_positive or override_negative)");
}

std::string to_string(ReviewStatus s) { return s == ReviewStatus::pending ? "pending" : "reviewed"; }

namespace {

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20)
          out += fmt::format("\\x{:02x}", static_cast<unsigned char>(c));
        else
          out += c;
    }
  }
  return out + "\"";
}

std::string unquote(std::string_view s) {
  if (s.size() < 2 || s.front() != '"' || s.back() != '"')
    throw std::invalid_argument("note is not a quoted string");
  const auto body = s.substr(1, s.size() - 2);
  std::string out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '"') throw std::invalid_argument("unescaped quote in note");
    if (c != '\\') {
      out += c;
      continue;
    }
    if (++i == body.size()) throw std::invalid_argument("dangling escape in note");
    switch (body[i]) {
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 't': out += '\t'; break;
      case 'x': {
        unsigned v = 0;
        const char* first = body.data() + i + 1;
        const auto r = i + 2 < body.size() ? std::from_chars(first, first + 2, v, 16)
                                           : std::from_chars_result{first, std::errc::invalid_argument};
        if (r.ec != std::errc() || r.ptr != first + 2) throw std::invalid_argument("bad \\x escape");
        out += static_cast<char>(v);
        i += 2;
        break;
      }
      default: throw std::invalid_argument("unknown escape in note");
    }
  }
  return out;
}

// Splits off the next space-delimited token.
std::string_view next_token(std::string_view& s) {
  const auto sp = s.find(' ');
  auto tok = s.substr(0, sp);
  s = sp == std::string_view::npos ? std::string_view{} : s.substr(sp + 1);
  if (tok.empty()) throw std::invalid_argument("missing field");
  return tok;
}

template <class T>
T parse_number(std::string_view tok, const char* what) {
  T v{};
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
    throw std::invalid_argument(std::string("bad ") + what + " '" + std::string(tok) + "'");
  return v;
}

bool valid_id(std::string_view id) {
  return !id.empty() && id.find_first_of(" /\\\"\n") == std::string_view::npos && id != "." &&
         id != "..";
}

}  // namespace

std::string format_decision(const DecisionRecord& r) {
  return fmt::format("{} {} {} {} {}", r.timestamp, r.study_id, to_string(r.verdict), r.theta,
                     quote(r.note));
}

DecisionRecord parse_decision(std::string_view line) {
  DecisionRecord r;
  r.timestamp = parse_number<std::int64_t>(next_token(line), "timestamp");
  r.study_id = std::string(next_token(line));
  if (!valid_id(r.study_id)) throw std::invalid_argument("bad study id");
  r.verdict = parse_verdict(next_token(line));
  r.theta = parse_number<float>(next_token(line), "theta");
  r.note = unquote(line);
  return r;
}

std::string format_study(const StudyEntry& s) {
  return fmt::format("{} {} {} {} {} {} {}", s.created, s.study_id, s.theta, s.min_area, s.width,
                     s.height, s.rle);
}

StudyEntry parse_study(std::string_view line) {
  StudyEntry s;
  s.created = parse_number<std::int64_t>(next_token(line), "timestamp");
  s.study_id = std::string(next_token(line));
  if (!valid_id(s.study_id)) throw std::invalid_argument("bad study id");
  s.theta = parse_number<float>(next_token(line), "theta");
  s.min_area = parse_number<int>(next_token(line), "min_area");
  s.width = parse_number<int>(next_token(line), "width");
  s.height = parse_number<int>(next_token(line), "height");
  s.rle = rle::canonicalize(line, s.width, s.height);
  return s;
}

AppendLog::Loaded AppendLog::load(const fs::path& path,
                                  const std::function<bool(std::string_view)>& valid) {
  Loaded out;
  std::error_code ec;
  if (!fs::exists(path, ec)) return out;
  const auto bytes = io::read_file(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::size_t pos = 0, good_end = 0, line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    const auto nl = text.find('\n', pos);
    const bool complete = nl != std::string_view::npos;
    const auto line = text.substr(pos, complete ? nl - pos : std::string_view::npos);
    const std::size_t end = complete ? nl + 1 : text.size();
    const bool ok = complete && valid(line);
    if (!ok) {
      if (end < text.size())
        throw std::runtime_error(fmt::format("{}: corrupt record at line {}", path.string(), line_no));
      out.warning = fmt::format("{}: dropped torn final record at line {}", path.string(), line_no);
      fs::resize_file(path, good_end);
      break;
    }
    out.lines.emplace_back(line);
    good_end = end;
    pos = end;
  }
  return out;
}

void AppendLog::append(const fs::path& path, const std::string& line) {
  const std::string rec = line + "\n";
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw std::runtime_error(path.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < rec.size()) {
    const auto n = ::write(fd, rec.data() + done, rec.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = std::strerror(errno);
      ::close(fd);
      throw std::runtime_error(path.string() + ": " + err);
    }
    done += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  const std::string err = synced ? "" : std::strerror(errno);
  ::close(fd);
  if (!synced) throw std::runtime_error(path.string() + ": fsync failed: " + err);
}

namespace {

template <class F>
bool parses(F f, std::string_view line) {
  try {
    f(line);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

StudyStore::StudyStore(fs::path data_dir) : dir_(std::move(data_dir)) {
  fs::create_directories(dir_ / "studies");
  auto studies = AppendLog::load(studies_path(), [](std::string_view l) {
    return parses(parse_study, l);
  });
  if (studies.warning) warnings_.push_back(*studies.warning);
  for (const auto& l : studies.lines) {
    auto s = parse_study(l);
    if (std::any_of(studies_.begin(), studies_.end(),
                    [&](const StudyEntry& e) { return e.study_id == s.study_id; }))
      throw std::runtime_error(studies_path().string() + ": duplicate study " + s.study_id);
    if (s.study_id.size() > 1 && s.study_id[0] == 's') {
      std::uint64_t n = 0;
      const auto r = std::from_chars(s.study_id.data() + 1, s.study_id.data() + s.study_id.size(), n);
      if (r.ec == std::errc()) next_id_ = std::max(next_id_, n + 1);
    }
    studies_.push_back(std::move(s));
  }

  auto decisions = AppendLog::load(decisions_path(), [](std::string_view l) {
    return parses(parse_decision, l);
  });
  if (decisions.warning) warnings_.push_back(*decisions.warning);
  for (const auto& l : decisions.lines) {
    auto d = parse_decision(l);
    auto it = std::find_if(studies_.begin(), studies_.end(),
                           [&](const StudyEntry& e) { return e.study_id == d.study_id; });
    if (it == studies_.end()) {
      warnings_.push_back("decision for unknown study " + d.study_id + " ignored");
      continue;
    }
    if (it->status == ReviewStatus::reviewed) {
      warnings_.push_back("repeated decision for " + d.study_id + " ignored");
      continue;
    }
    it->status = ReviewStatus::reviewed;
    it->decision = std::move(d);
  }
}

fs::path StudyStore::study_file(const std::string& id, const std::string& name) const {
  return dir_ / "studies" / id / name;
}

StudyEntry StudyStore::add(std::span<const std::uint8_t> original_png,
                           const train::Prediction& pred, float theta, int min_area,
                           std::int64_t now) {
  const auto prob_png = imaging::encode_png(imaging::to_gray8(pred.prob));
  const auto overlay_png = imaging::encode_png(pred.overlay);

  std::lock_guard lock(mu_);
  StudyEntry s;
  s.study_id = fmt::format("s{:06d}", next_id_);
  s.created = now;
  s.rle = pred.rle;
  s.theta = theta;
  s.min_area = min_area;
  s.width = pred.mask.width();
  s.height = pred.mask.height();
  fs::create_directories(dir_ / "studies" / s.study_id);
  io::write_file(study_file(s.study_id, "image.png"), original_png);
  io::write_file(study_file(s.study_id, "prob.png"), prob_png);
  io::write_file(study_file(s.study_id, "overlay.png"), overlay_png);
  // The log line is the commit point; files above are orphaned if it fails.
  AppendLog::append(studies_path(), format_study(s));
  ++next_id_;
  studies_.push_back(s);
  return s;
}

std::vector<StudyEntry> StudyStore::list() const {
  std::lock_guard lock(mu_);
  return studies_;
}

std::optional<StudyEntry> StudyStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  for (const auto& s : studies_)
    if (s.study_id == id) return s;
  return std::nullopt;
}

DecisionRecord StudyStore::decide(const std::string& id, Verdict verdict, float theta,
                                  std::string note, std::int64_t now) {
  std::lock_guard lock(mu_);
  auto it = std::find_if(studies_.begin(), studies_.end(),
                         [&](const StudyEntry& e) { return e.study_id == id; });
  if (it == studies_.end()) throw StudyNotFound("unknown study '" + id + "'");
  if (it->status == ReviewStatus::reviewed)
    throw AlreadyReviewed("study '" + id + "' already has a decision");
  DecisionRecord rec{now, id, verdict, theta, std::move(note)};
  AppendLog::append(decisions_path(), format_decision(rec));
  it->status = ReviewStatus::reviewed;
  it->decision = rec;
  return rec;
}

}  // namespace pseg::service
