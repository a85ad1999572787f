#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "franson/error.hpp"
#include "franson/text_io.hpp"

namespace franson {

inline constexpr int kChannelCount = 4;

struct TimeTag {
  std::int64_t time_ps = 0;
  int channel = 1;

  bool operator==(const TimeTag&) const = default;
};

/// Simulation ground truth for one tag. Not part of the exported format.
struct TagOrigin {
  std::int64_t cycle = -1;
  std::int8_t pulse = -1; ///< -1 for dark counts
  std::int8_t arm = -1;   ///< 0 short, 1 long, -1 dark
  bool extra_photon = false;
  bool coherent = false;

  bool is_dark() const { return pulse < 0; }
};

struct TimeTagStream {
  std::vector<TimeTag> tags;
  std::int64_t duration_ps = 0;
  text::Header fingerprint;
  std::vector<TagOrigin> origins; ///< empty unless the engine was asked for truth labels

  void validate() const {
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (tags[i].channel < 1 || tags[i].channel > kChannelCount)
        throw ValidationError("stream.channel", "must be in 1..4 (tag " + std::to_string(i) + ")");
      if (i > 0 && tags[i].time_ps < tags[i - 1].time_ps)
        throw ValidationError("stream.time_ps", "times must be non-decreasing (tag " + std::to_string(i) + ")");
    }
  }
};

inline void write_stream(std::ostream& os, const TimeTagStream& stream) {
  text::Header h = stream.fingerprint;
  h.set("duration_ps", std::to_string(stream.duration_ps));
  h.set("columns", "channel,time_ps");
  h.write(os);
  std::string buf;
  buf.reserve(1 << 16);
  char num[32];
  for (const auto& t : stream.tags) {
    auto r = std::to_chars(num, num + sizeof num, t.channel);
    buf.append(num, r.ptr);
    buf.push_back(',');
    r = std::to_chars(num, num + sizeof num, t.time_ps);
    buf.append(num, r.ptr);
    buf.push_back('\n');
    if (buf.size() > (1 << 16) - 64) {
      os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

/// Parses "channel,time_ps" lines after an optional "# key: value" header.
/// The header keys `duration_ps` and `columns` are consumed; every other key
/// is kept as the stream fingerprint.
inline TimeTagStream read_stream(std::istream& is, const std::string& source = "<stream>") {
  TimeTagStream s;
  std::size_t line_no = 0;
  std::string line;
  text::Header h = text::read_header(is, source, line_no, line);
  for (auto& [k, v] : h.entries) {
    if (k == "duration_ps") {
      auto d = text::parse_int(v);
      if (!d) throw ParseError(source, 0, "bad duration_ps");
      s.duration_ps = *d;
    } else if (k != "columns") {
      s.fingerprint.entries.emplace_back(k, v);
    }
  }
  auto parse_line = [&](const std::string& l) {
    const auto comma = l.find(',');
    if (comma == std::string::npos) throw ParseError(source, line_no, "expected 'channel,time_ps'");
    auto ch = text::parse_int(std::string_view(l).substr(0, comma));
    auto t = text::parse_int(std::string_view(l).substr(comma + 1));
    if (!ch || !t) throw ParseError(source, line_no, "expected integer 'channel,time_ps'");
    if (*ch < 1 || *ch > kChannelCount) throw ParseError(source, line_no, "channel must be in 1..4");
    if (!s.tags.empty() && *t < s.tags.back().time_ps)
      throw ParseError(source, line_no, "times must be non-decreasing");
    s.tags.push_back({*t, static_cast<int>(*ch)});
  };
  if (!line.empty()) parse_line(line);
  while (std::getline(is, line)) {
    ++line_no;
    if (text::trim(line).empty() || line[0] == '#') continue;
    parse_line(line);
  }
  if (s.duration_ps == 0 && !s.tags.empty()) s.duration_ps = s.tags.back().time_ps + 1;
  return s;
}

inline void save_stream(const std::string& path, const TimeTagStream& stream) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_stream(os, stream);
}

inline TimeTagStream load_stream(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_stream(is, path);
}

} // namespace franson
