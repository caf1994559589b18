#include "velocorr/midi_io.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

namespace velocorr::midi {
namespace {

constexpr std::uint32_t kMaxVlq = 0x0FFFFFFF;

std::string with_offset(const std::string& what, std::size_t offset) {
  std::ostringstream os;
  os << what << " at byte " << offset;
  return os.str();
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t begin, std::size_t end)
      : bytes_(bytes), pos_(begin), end_(end) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ >= end_; }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint8_t peek() {
    need(1);
    return bytes_[pos_];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(bytes_[pos_] << 8 | bytes_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = std::uint32_t(bytes_[pos_]) << 24 | std::uint32_t(bytes_[pos_ + 1]) << 16 |
                      std::uint32_t(bytes_[pos_ + 2]) << 8 | std::uint32_t(bytes_[pos_ + 3]);
    pos_ += 4;
    return v;
  }
  std::uint32_t vlq() {
    const std::size_t start = pos_;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if ((b & 0x80) == 0) return v;
    }
    throw MidiError(MidiError::Kind::kMalformed, start,
                    with_offset("variable-length quantity longer than 4 bytes", start));
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) {
      throw MidiError(MidiError::Kind::kMalformed, pos_,
                      with_offset("unexpected end of data", pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
  std::size_t end_;
};

struct RawNote {
  std::uint64_t on_tick;
  std::uint64_t off_tick;
  int pitch;
  int velocity;
};

struct TrackResult {
  std::vector<RawNote> notes;
  std::uint64_t end_tick = 0;
  std::size_t dangling = 0;
};

// Note pairing for one track, keyed by (channel, pitch). A repeated note-on
// closes the sounding note first; with pedal handling on, note-offs received
// while CC64 is down are deferred until the pedal lifts.
class TrackPairer {
 public:
  explicit TrackPairer(bool pedal) : pedal_(pedal) {}

  void note_on(std::uint64_t tick, int ch, int pitch, int vel) {
    close(tick, ch, pitch);
    active_[key(ch, pitch)] = Open{tick, vel, false};
  }

  void note_off(std::uint64_t tick, int ch, int pitch) {
    auto it = active_.find(key(ch, pitch));
    if (it == active_.end() || it->second.released) return;
    if (pedal_ && pedal_down_[ch]) {
      it->second.released = true;
      return;
    }
    finish(it, tick);
  }

  void control(std::uint64_t tick, int ch, int controller, int value) {
    if (controller != 64) return;
    const bool down = value >= 64;
    if (pedal_down_[ch] && !down) {
      for (auto it = active_.begin(); it != active_.end();) {
        if (it->first / 128 == ch && it->second.released) {
          it = finish(it, tick);
        } else {
          ++it;
        }
      }
    }
    pedal_down_[ch] = down;
  }

  TrackResult finish_track(std::uint64_t end_tick) {
    TrackResult r;
    r.end_tick = end_tick;
    for (auto it = active_.begin(); it != active_.end();) {
      if (!it->second.released) ++dangling_;
      it = finish(it, end_tick);
    }
    r.notes = std::move(notes_);
    r.dangling = dangling_;
    return r;
  }

 private:
  struct Open {
    std::uint64_t on_tick;
    int velocity;
    bool released;
  };
  static int key(int ch, int pitch) { return ch * 128 + pitch; }

  void close(std::uint64_t tick, int ch, int pitch) {
    auto it = active_.find(key(ch, pitch));
    if (it != active_.end()) finish(it, tick);
  }

  std::map<int, Open>::iterator finish(std::map<int, Open>::iterator it, std::uint64_t tick) {
    notes_.push_back(RawNote{it->second.on_tick, tick, it->first % 128, it->second.velocity});
    return active_.erase(it);
  }

  bool pedal_;
  bool pedal_down_[16] = {};
  std::map<int, Open> active_;
  std::vector<RawNote> notes_;
  std::size_t dangling_ = 0;
};

TrackResult parse_track(Reader& r, TempoMap& tempo, const ParseOptions& options,
                        std::vector<std::string>& warnings) {
  TrackPairer pairer(options.pedal_extends_offsets);
  std::uint64_t tick = 0;
  std::optional<std::uint8_t> running;
  while (!r.done()) {
    tick += r.vlq();
    const std::size_t event_pos = r.pos();
    std::uint8_t status = r.peek();
    if (status & 0x80) {
      r.u8();
    } else if (running) {
      status = *running;
    } else {
      throw MidiError(MidiError::Kind::kMalformed, event_pos,
                      with_offset("data byte without running status", event_pos));
    }

    if (status == 0xFF) {
      running.reset();
      const std::uint8_t type = r.u8();
      const std::uint32_t len = r.vlq();
      auto data = r.take(len);
      if (type == 0x2F) break;
      if (type == 0x51) {
        if (len != 3) {
          throw MidiError(MidiError::Kind::kMalformed, event_pos,
                          with_offset("tempo meta event with length " + std::to_string(len),
                                      event_pos));
        }
        const std::uint32_t us = std::uint32_t(data[0]) << 16 | std::uint32_t(data[1]) << 8 | data[2];
        if (us == 0) {
          warnings.push_back(with_offset("ignored zero tempo", event_pos));
        } else {
          tempo.add(tick, us);
        }
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      running.reset();
      r.skip(r.vlq());
      continue;
    }
    if (status >= 0xF0) {
      throw MidiError(MidiError::Kind::kMalformed, event_pos,
                      with_offset("unexpected system message", event_pos));
    }

    running = status;
    const int kind = status & 0xF0;
    const int ch = status & 0x0F;
    const int data_len = (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
    const std::uint8_t d1 = r.u8();
    const std::uint8_t d2 = data_len == 2 ? r.u8() : 0;
    if ((d1 | d2) & 0x80) {
      throw MidiError(MidiError::Kind::kMalformed, event_pos,
                      with_offset("data byte with high bit set", event_pos));
    }
    if (kind == 0x90 && d2 > 0) {
      pairer.note_on(tick, ch, d1, d2);
    } else if (kind == 0x80 || kind == 0x90) {
      pairer.note_off(tick, ch, d1);
    } else if (kind == 0xB0) {
      pairer.control(tick, ch, d1, d2);
    }
  }
  return pairer.finish_track(tick);
}

}  // namespace

MidiError::MidiError(Kind kind, std::size_t offset, const std::string& what)
    : std::runtime_error(what), kind_(kind), offset_(offset) {}

void TempoMap::add(std::uint64_t tick, std::uint32_t us_per_quarter) {
  raw_.emplace_back(tick, us_per_quarter);
  dirty_ = true;
}

void TempoMap::rebuild() const {
  auto sorted = raw_;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  changes_.clear();
  changes_.push_back(Change{0, 500000, 0.0});
  for (const auto& [tick, us] : sorted) {
    const Change& last = changes_.back();
    const double at = last.seconds + double(tick - last.tick) * last.us_per_quarter /
                                          (double(division_) * 1e6);
    if (tick == last.tick) {
      changes_.back().us_per_quarter = us;
    } else {
      changes_.push_back(Change{tick, us, at});
    }
  }
  dirty_ = false;
}

double TempoMap::seconds(std::uint64_t tick) const {
  if (dirty_) rebuild();
  auto it = std::upper_bound(changes_.begin(), changes_.end(), tick,
                             [](std::uint64_t t, const Change& c) { return t < c.tick; });
  const Change& c = *std::prev(it);
  return c.seconds + double(tick - c.tick) * c.us_per_quarter / (double(division_) * 1e6);
}

void normalize(MidiPerformance& perf) {
  auto& notes = perf.notes;
  std::stable_sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    if (a.pitch != b.pitch) return a.pitch < b.pitch;
    return a.onset_s < b.onset_s;
  });
  for (std::size_t i = 0; i + 1 < notes.size(); ++i) {
    if (notes[i + 1].pitch == notes[i].pitch && notes[i + 1].onset_s < notes[i].offset_s) {
      notes[i].offset_s = notes[i + 1].onset_s;
    }
  }
  const auto before = notes.size();
  std::erase_if(notes, [](const NoteEvent& n) { return !(n.offset_s > n.onset_s); });
  if (notes.size() != before) {
    perf.source.warnings.push_back("dropped " + std::to_string(before - notes.size()) +
                                   " zero-length note(s)");
  }
  std::sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    if (a.onset_s != b.onset_s) return a.onset_s < b.onset_s;
    return a.pitch < b.pitch;
  });
  for (const auto& n : notes) perf.duration_s = std::max(perf.duration_s, n.offset_s);
}

MidiPerformance parse_smf(std::span<const std::uint8_t> bytes, const ParseOptions& options) {
  Reader header(bytes, 0, bytes.size());
  const auto magic = header.take(4);
  if (!std::equal(magic.begin(), magic.end(), "MThd")) {
    throw MidiError(MidiError::Kind::kMalformed, 0, "missing MThd header chunk at byte 0");
  }
  const std::uint32_t header_len = header.u32();
  if (header_len < 6) {
    throw MidiError(MidiError::Kind::kMalformed, 4,
                    with_offset("header chunk length " + std::to_string(header_len), 4));
  }
  if (std::uint64_t(header_len) + 8 > bytes.size()) {
    throw MidiError(MidiError::Kind::kMalformed, 4,
                    with_offset("header chunk overruns file", 4));
  }
  MidiPerformance perf;
  perf.source.format = header.u16();
  const int declared_tracks = header.u16();
  const std::uint16_t division = header.u16();
  if (perf.source.format > 1) {
    throw MidiError(MidiError::Kind::kUnsupported, 8,
                    "unsupported SMF format " + std::to_string(perf.source.format));
  }
  if (division & 0x8000) {
    throw MidiError(MidiError::Kind::kUnsupported, 12, "SMPTE time division is not supported");
  }
  if (division == 0) {
    throw MidiError(MidiError::Kind::kMalformed, 12, with_offset("zero time division", 12));
  }
  perf.source.division = division;
  auto& warnings = perf.source.warnings;

  TempoMap tempo(division);
  std::vector<TrackResult> tracks;
  std::size_t pos = 8 + header_len;
  while (pos < bytes.size()) {
    Reader chunk(bytes, pos, bytes.size());
    const auto id = chunk.take(4);
    const std::uint32_t len = chunk.u32();
    const std::size_t body = pos + 8;
    if (std::uint64_t(body) + len > bytes.size()) {
      throw MidiError(MidiError::Kind::kMalformed, pos + 4,
                      with_offset("chunk length " + std::to_string(len) + " overruns file",
                                  pos + 4));
    }
    if (std::equal(id.begin(), id.end(), "MTrk")) {
      Reader track(bytes, body, body + len);
      tracks.push_back(parse_track(track, tempo, options, warnings));
    }
    pos = body + len;
  }
  perf.source.track_count = int(tracks.size());
  if (int(tracks.size()) != declared_tracks) {
    warnings.push_back("header declares " + std::to_string(declared_tracks) + " track(s), found " +
                       std::to_string(tracks.size()));
  }

  std::size_t out_of_range = 0;
  for (const auto& tr : tracks) {
    if (tr.dangling > 0) {
      warnings.push_back(std::to_string(tr.dangling) +
                         " note(s) still sounding at end of track; clamped to track end");
    }
    perf.duration_s = std::max(perf.duration_s, tempo.seconds(tr.end_tick));
    for (const auto& n : tr.notes) {
      if (n.pitch < options.lowest_pitch || n.pitch > options.highest_pitch) {
        ++out_of_range;
        continue;
      }
      perf.notes.push_back(NoteEvent{tempo.seconds(n.on_tick), tempo.seconds(n.off_tick), n.pitch,
                                     n.velocity});
    }
  }
  if (out_of_range > 0) {
    warnings.push_back("dropped " + std::to_string(out_of_range) + " note(s) outside pitch range " +
                       std::to_string(options.lowest_pitch) + "-" +
                       std::to_string(options.highest_pitch));
  }
  normalize(perf);
  return perf;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(std::uint8_t(v >> s));
}

void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[4];
  int n = 0;
  buf[n++] = std::uint8_t(v & 0x7F);
  while ((v >>= 7) != 0) buf[n++] = std::uint8_t(0x80 | (v & 0x7F));
  while (n > 0) out.push_back(buf[--n]);
}

}  // namespace

std::vector<std::uint8_t> write_smf(const MidiPerformance& perf, const WriteOptions& options) {
  if (options.ticks_per_quarter == 0 || options.ticks_per_quarter & 0x8000) {
    throw MidiError(MidiError::Kind::kUnrepresentable, 0, "invalid ticks per quarter");
  }
  if (options.us_per_quarter == 0 || options.us_per_quarter > 0xFFFFFF) {
    throw MidiError(MidiError::Kind::kUnrepresentable, 0, "invalid tempo");
  }
  const double ticks_per_second = options.ticks_per_quarter * 1e6 / options.us_per_quarter;

  struct Ev {
    std::uint64_t tick;
    int order;  // note-offs sort before note-ons at the same tick
    int pitch;
    int velocity;
  };
  std::vector<Ev> events;
  events.reserve(perf.notes.size() * 2);
  auto to_tick = [&](double s, const NoteEvent& n) {
    const double t = std::round(s * ticks_per_second);
    if (!std::isfinite(s) || s < 0.0 || t > double(kMaxVlq)) {
      std::ostringstream os;
      os << "note (pitch " << n.pitch << ", onset " << n.onset_s
         << " s) outside the representable tick range";
      throw MidiError(MidiError::Kind::kUnrepresentable, 0, os.str());
    }
    return std::uint64_t(t);
  };
  for (const auto& n : perf.notes) {
    if (n.pitch < 0 || n.pitch > 127 || n.velocity < 0 || n.velocity > 127) {
      throw MidiError(MidiError::Kind::kUnrepresentable, 0,
                      "note pitch/velocity outside 0-127: pitch " + std::to_string(n.pitch));
    }
    const std::uint64_t on = to_tick(n.onset_s, n);
    const std::uint64_t off = std::max(to_tick(n.offset_s, n), on + 1);
    events.push_back(Ev{on, 1, n.pitch, std::max(n.velocity, 1)});
    events.push_back(Ev{off, 0, n.pitch, 0});
  }
  std::stable_sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    if (a.order != b.order) return a.order < b.order;
    return a.pitch < b.pitch;
  });

  std::vector<std::uint8_t> track;
  put_vlq(track, 0);
  track.insert(track.end(), {0xFF, 0x51, 0x03});
  track.push_back(std::uint8_t(options.us_per_quarter >> 16));
  track.push_back(std::uint8_t(options.us_per_quarter >> 8));
  track.push_back(std::uint8_t(options.us_per_quarter));
  std::uint64_t last = 0;
  for (const auto& e : events) {
    put_vlq(track, std::uint32_t(e.tick - last));
    last = e.tick;
    track.push_back(e.order == 0 ? 0x80 : 0x90);
    track.push_back(std::uint8_t(e.pitch));
    track.push_back(std::uint8_t(e.velocity));
  }
  const std::uint64_t end_tick = std::max<std::uint64_t>(
      last, std::uint64_t(std::llround(std::max(perf.duration_s, 0.0) * ticks_per_second)));
  put_vlq(track, std::uint32_t(std::min<std::uint64_t>(end_tick - last, kMaxVlq)));
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out;
  out.reserve(track.size() + 22);
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  put_u32(out, 6);
  put_u16(out, 0);
  put_u16(out, 1);
  put_u16(out, options.ticks_per_quarter);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_u32(out, std::uint32_t(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

}  // namespace velocorr::midi
