#pragma once

// Persistent formats: little-endian binary datasets ("GCDS") and checkpoints
// ("GCDP") with a trailing CRC-32, P5 greymaps, the sample manifest, and the
// flat key=value config.

#include "gcdiff/core.hpp"
#include "gcdiff/toy_scenes.hpp"
#include "gcdiff/training.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace gcdiff::io {

class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t offset, const std::string& field, const std::string& what)
      : std::runtime_error("offset " + std::to_string(offset) + ", field '" + field + "': " + what),
        offset_(offset),
        field_(field) {}
  std::size_t offset() const { return offset_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t offset_;
  std::string field_;
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1U << 30));
    c = ::crc32(c, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { uint(v); }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void magic(const char (&m)[5]) { bytes(m, 4); }

  template <typename Range>
  void f32_array(const Range& r) {
    u32(static_cast<std::uint32_t>(std::size(r)));
    for (const auto v : r) f32(static_cast<float>(v));
  }

  void finish_with_crc() { u32(crc32_of(buf_.data(), buf_.size())); }
  const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  template <typename U>
  U uint(const std::string& field) {
    need(sizeof(U), field);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::uint8_t u8(const std::string& f) { return uint<std::uint8_t>(f); }
  std::uint16_t u16(const std::string& f) { return uint<std::uint16_t>(f); }
  std::uint32_t u32(const std::string& f) { return uint<std::uint32_t>(f); }
  std::uint64_t u64(const std::string& f) { return uint<std::uint64_t>(f); }
  float f32(const std::string& f) { return std::bit_cast<float>(u32(f)); }
  double f64(const std::string& f) { return std::bit_cast<double>(u64(f)); }

  void magic(const char (&m)[5], const std::string& field) {
    need(4, field);
    if (std::memcmp(buf_.data() + pos_, m, 4) != 0) fail(field, std::string("expected magic ") + m);
    pos_ += 4;
  }

  // Length-prefixed f32 array; `expected` < 0 accepts any length.
  std::vector<float> f32_array(const std::string& field, long expected = -1) {
    const std::size_t at = pos_;
    const std::uint32_t n = u32(field + ".length");
    if (expected >= 0 && n != static_cast<std::uint64_t>(expected)) {
      throw FormatError(at, field + ".length",
                        "expected " + std::to_string(expected) + " elements, found " + std::to_string(n));
    }
    if (static_cast<std::uint64_t>(n) * 4 > buf_.size() - pos_) fail(field, "array runs past end of file");
    std::vector<float> out(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      out[i] = f32(field);
      if (!std::isfinite(out[i])) throw FormatError(pos_ - 4, field, "non-finite value");
    }
    return out;
  }

  // Validates the trailing CRC-32 over everything before it.
  void check_crc() {
    if (buf_.size() < 4) fail("crc32", "file too short");
    const std::size_t body = buf_.size() - 4;
    std::uint32_t stored = 0;
    for (std::size_t i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf_[body + i]) << (8 * i);
    if (crc32_of(buf_.data(), body) != stored) throw FormatError(body, "crc32", "checksum mismatch");
  }

  void expect_trailer() {
    if (buf_.size() - pos_ != 4) fail("crc32", "unexpected trailing bytes before checksum");
    pos_ += 4;
  }

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw FormatError(pos_, field, what);
  }

 private:
  void need(std::size_t n, const std::string& field) const {
    if (buf_.size() - pos_ < n) fail(field, "unexpected end of file");
  }

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::vector<std::uint8_t>& data) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw ValidationError("write failed for " + p.string());
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  write_file(p, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---- scene config block (shared by datasets and checkpoints) ----

inline void put_scene(Writer& w, const SceneConfig& c) {
  w.u32(static_cast<std::uint32_t>(c.height));
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.channels));
  w.u32(static_cast<std::uint32_t>(c.n_classes));
  w.f32_array(c.levels());
  w.f64(c.sigma_data);
  w.f64(c.p_blob);
  w.u64(c.seed);
}

inline SceneConfig get_scene(Reader& r) {
  SceneConfig c;
  c.height = static_cast<int>(r.u32("scene.height"));
  c.width = static_cast<int>(r.u32("scene.width"));
  c.channels = static_cast<int>(r.u32("scene.channels"));
  c.n_classes = static_cast<int>(r.u32("scene.n_classes"));
  const std::size_t at = r.offset();
  if (c.height < 1 || c.width < 1 || c.channels < 1 || c.n_classes < 2 || c.n_classes > 16 ||
      static_cast<long>(c.height) * c.width > (1L << 24)) {
    throw FormatError(at, "scene", "implausible scene geometry");
  }
  const std::vector<float> pal = r.f32_array("scene.palette", c.n_classes);
  c.palette.assign(pal.begin(), pal.end());
  c.sigma_data = r.f64("scene.sigma_data");
  c.p_blob = r.f64("scene.p_blob");
  c.seed = r.u64("scene.seed");
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw FormatError(r.offset(), "scene", e.what());
  }
  return c;
}

// ---- datasets ----

inline constexpr std::uint16_t kDatasetVersion = 1;

struct Dataset {
  SceneConfig scene;
  std::vector<SceneSample> samples;
};

inline std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  Writer w;
  w.magic("GCDS");
  w.u16(kDatasetVersion);
  put_scene(w, d.scene);
  w.u32(static_cast<std::uint32_t>(d.samples.size()));
  for (const SceneSample& s : d.samples) {
    w.f32_array(s.z.x);
    w.u32(static_cast<std::uint32_t>(s.z.y.size()));
    for (int label : s.z.y) w.u8(static_cast<std::uint8_t>(label));
    w.u32(static_cast<std::uint32_t>(s.cond));
    w.u8(static_cast<std::uint8_t>(s.type));
  }
  w.finish_with_crc();
  return w.data();
}

inline Dataset decode_dataset(std::vector<std::uint8_t> bytes) {
  Reader r(std::move(bytes));
  r.magic("GCDS", "magic");
  const std::size_t vat = r.offset();
  if (r.u16("version") != kDatasetVersion) throw FormatError(vat, "version", "unsupported dataset version");
  r.check_crc();
  Dataset d;
  d.scene = get_scene(r);
  const ShapeSpec shape = d.scene.shape();
  const std::uint32_t count = r.u32("count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string f = "sample[" + std::to_string(i) + "]";
    SceneSample s;
    const std::vector<float> x = r.f32_array(f + ".x", static_cast<long>(shape.n_gauss));
    s.z.x = Eigen::Map<const Eigen::VectorXf>(x.data(), static_cast<Eigen::Index>(x.size())).cast<double>();
    const std::size_t lat = r.offset();
    if (r.u32(f + ".y.length") != shape.n_cat) throw FormatError(lat, f + ".y.length", "layout length mismatch");
    s.z.y.resize(shape.n_cat);
    for (int& label : s.z.y) {
      label = r.u8(f + ".y");
      if (label >= d.scene.n_classes) throw FormatError(r.offset() - 1, f + ".y", "label out of range");
    }
    const std::size_t cat = r.offset();
    s.cond = static_cast<int>(r.u32(f + ".cond"));
    if (s.cond != condition_of(s.z.y)) throw FormatError(cat, f + ".cond", "condition disagrees with layout");
    const std::uint8_t type = r.u8(f + ".type");
    if (type > 1) throw FormatError(r.offset() - 1, f + ".type", "unknown scene type");
    s.type = static_cast<SceneType>(type);
    d.samples.push_back(std::move(s));
  }
  r.expect_trailer();
  return d;
}

inline void save_dataset(const std::filesystem::path& p, const Dataset& d) { write_file(p, encode_dataset(d)); }
inline Dataset load_dataset(const std::filesystem::path& p) { return decode_dataset(read_file(p)); }

// ---- checkpoints ----

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct ScheduleSpec {
  int total_steps = 1000;
  double p_power = 1.0;
  double offset = 0.008;
  NoiseSchedule build() const { return make_cosine_schedule(total_steps, p_power, offset); }
};

struct Checkpoint {
  SceneConfig scene;  // image geometry and palette of the training data
  ScheduleSpec schedule;
  TrainConfig train;  // hyperparameters of the run that produced it
  TrainState<float> state;
};

inline void put_arch(Writer& w, const ArchConfig& a) {
  w.u32(static_cast<std::uint32_t>(a.shape.n_gauss));
  w.u32(static_cast<std::uint32_t>(a.shape.n_cat));
  w.u32(static_cast<std::uint32_t>(a.shape.n_classes));
  for (int v : {a.total_steps, a.cond_count, a.label_embed, a.cond_embed, a.time_embed, a.hidden, a.blocks}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
}

inline ArchConfig get_arch(Reader& r) {
  ArchConfig a;
  a.shape.n_gauss = r.u32("shape.n_gauss");
  a.shape.n_cat = r.u32("shape.n_cat");
  a.shape.n_classes = r.u32("shape.n_classes");
  for (auto [field, dst] : {std::pair{"arch.total_steps", &a.total_steps}, std::pair{"arch.cond_count", &a.cond_count},
                            std::pair{"arch.label_embed", &a.label_embed}, std::pair{"arch.cond_embed", &a.cond_embed},
                            std::pair{"arch.time_embed", &a.time_embed}, std::pair{"arch.hidden", &a.hidden},
                            std::pair{"arch.blocks", &a.blocks}}) {
    const std::uint32_t v = r.u32(field);
    if (v > (1U << 20)) throw FormatError(r.offset() - 4, field, "implausible value");
    *dst = static_cast<int>(v);
  }
  try {
    a.validate();
  } catch (const ValidationError& e) {
    throw FormatError(r.offset(), "arch", e.what());
  }
  return a;
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.magic("GCDP");
  w.u16(kCheckpointVersion);
  const ArchConfig& arch = c.state.model.arch();
  put_arch(w, arch);
  put_scene(w, c.scene);
  // Schedule: generator parameters plus the resulting betas for inspection.
  const NoiseSchedule sched = c.schedule.build();
  w.u32(static_cast<std::uint32_t>(c.schedule.total_steps));
  w.f64(c.schedule.p_power);
  w.f64(c.schedule.offset);
  w.f32_array(sched.betas_gauss());
  w.f32_array(sched.betas_cat());
  // Training hyperparameters.
  w.u64(static_cast<std::uint64_t>(c.train.steps));
  w.u32(static_cast<std::uint32_t>(c.train.batch));
  w.f64(c.train.lr);
  w.f64(c.train.cond_dropout);
  w.u8(static_cast<std::uint8_t>(c.train.loss.mode));
  w.f64(c.train.loss.lambda_cat);
  w.f64(c.train.ema_decay);
  // State.
  w.f32_array(c.state.model.parameters());
  w.f32_array(c.state.optimizer.first_moment());
  w.f32_array(c.state.optimizer.second_moment());
  w.u64(c.state.optimizer.step_count());
  w.f32_array(c.state.ema);
  w.u64(static_cast<std::uint64_t>(c.state.step));
  w.u64(c.state.seed);
  w.finish_with_crc();
  return w.data();
}

inline Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes) {
  Reader r(std::move(bytes));
  r.magic("GCDP", "magic");
  const std::size_t vat = r.offset();
  if (r.u16("version") != kCheckpointVersion) throw FormatError(vat, "version", "unsupported checkpoint version");
  r.check_crc();
  const ArchConfig arch = get_arch(r);
  Checkpoint c{get_scene(r), {}, {}, {ReferenceDenoiser<float>(arch), Adam<float>(0), 0, 0, {}}};
  if (!(c.scene.shape() == arch.shape)) throw FormatError(r.offset(), "scene", "scene geometry disagrees with shape");
  const std::size_t sat = r.offset();
  c.schedule.total_steps = static_cast<int>(r.u32("schedule.total_steps"));
  c.schedule.p_power = r.f64("schedule.p_power");
  c.schedule.offset = r.f64("schedule.offset");
  if (c.schedule.total_steps != arch.total_steps) throw FormatError(sat, "schedule.total_steps", "differs from arch");
  NoiseSchedule sched = [&] {
    try {
      return c.schedule.build();
    } catch (const ValidationError& e) {
      throw FormatError(sat, "schedule", e.what());
    }
  }();
  const auto check_betas = [&](const std::string& field, const std::vector<double>& expect) {
    const std::size_t at = r.offset();
    const std::vector<float> got = r.f32_array(field, static_cast<long>(expect.size()));
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i] != static_cast<float>(expect[i])) throw FormatError(at, field, "does not match schedule parameters");
    }
  };
  check_betas("schedule.beta_gauss", sched.betas_gauss());
  check_betas("schedule.beta_cat", sched.betas_cat());
  c.train.steps = static_cast<long>(r.u64("train.steps"));
  c.train.batch = static_cast<int>(r.u32("train.batch"));
  c.train.lr = r.f64("train.lr");
  c.train.cond_dropout = r.f64("train.cond_dropout");
  const std::uint8_t mode = r.u8("train.loss");
  if (mode > 1) throw FormatError(r.offset() - 1, "train.loss", "unknown loss mode");
  c.train.loss.mode = static_cast<LossMode>(mode);
  c.train.loss.lambda_cat = r.f64("train.lambda_cat");
  c.train.ema_decay = r.f64("train.ema_decay");
  const auto n = static_cast<long>(c.state.model.parameter_count());
  const std::vector<float> params = r.f32_array("params", n);
  std::copy(params.begin(), params.end(), c.state.model.parameters().begin());
  Adam<float> opt(static_cast<std::size_t>(n), AdamConfig{c.train.lr});
  const std::vector<float> m = r.f32_array("adam.m", n);
  const std::vector<float> v = r.f32_array("adam.v", n);
  std::copy(m.begin(), m.end(), opt.first_moment().begin());
  std::copy(v.begin(), v.end(), opt.second_moment().begin());
  opt.set_step_count(r.u64("adam.step"));
  c.state.optimizer = std::move(opt);
  const std::size_t eat = r.offset();
  const std::vector<float> ema = r.f32_array("ema");
  if (!ema.empty() && static_cast<long>(ema.size()) != n) throw FormatError(eat, "ema.length", "size mismatch");
  c.state.ema.assign(ema.begin(), ema.end());
  c.state.step = static_cast<long>(r.u64("step"));
  c.state.seed = r.u64("seed");
  r.expect_trailer();
  return c;
}

inline void save_checkpoint(const std::filesystem::path& p, const Checkpoint& c) { write_file(p, encode_checkpoint(c)); }
inline Checkpoint load_checkpoint(const std::filesystem::path& p) { return decode_checkpoint(read_file(p)); }

// ---- P5 greymaps ----

inline std::uint8_t to_grey(double v) {
  return static_cast<std::uint8_t>(std::lround((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5));
}
inline double from_grey(std::uint8_t g) { return static_cast<double>(g) / 127.5 - 1.0; }

inline std::vector<std::uint8_t> encode_pgm(int width, int height, const std::vector<std::uint8_t>& pixels) {
  require(pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height), "pgm: size mismatch");
  const std::string head = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

struct Greymap {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

inline Greymap decode_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  const auto token = [&](const std::string& field) {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos]) != 0) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && std::isspace(bytes[pos]) == 0) t.push_back(static_cast<char>(bytes[pos++]));
    if (t.empty()) throw FormatError(pos, field, "missing header token");
    return t;
  };
  if (token("pgm.magic") != "P5") throw FormatError(0, "pgm.magic", "not a binary greymap");
  Greymap g;
  try {
    g.width = std::stoi(token("pgm.width"));
    g.height = std::stoi(token("pgm.height"));
    if (std::stoi(token("pgm.maxval")) != 255) throw FormatError(pos, "pgm.maxval", "only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw FormatError(pos, "pgm.header", "malformed number");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(g.width) * static_cast<std::size_t>(g.height);
  if (g.width <= 0 || g.height <= 0 || bytes.size() < pos || bytes.size() - pos != n) {
    throw FormatError(pos, "pgm.pixels", "pixel payload length does not match header");
  }
  g.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return g;
}

// Single-channel images only; multi-channel images are written one plane per
// channel stacked vertically.
inline std::vector<std::uint8_t> image_pgm(const Eigen::VectorXd& x, const SceneConfig& cfg) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(x.size()));
  const int pixels = cfg.height * cfg.width;
  for (int c = 0; c < cfg.channels; ++c) {
    for (int p = 0; p < pixels; ++p) px[static_cast<std::size_t>(c * pixels + p)] = to_grey(x(p * cfg.channels + c));
  }
  return encode_pgm(cfg.width, cfg.height * cfg.channels, px);
}

inline Eigen::VectorXd image_from_pgm(const Greymap& g, const SceneConfig& cfg) {
  require(g.width == cfg.width && g.height == cfg.height * cfg.channels, "image pgm: geometry mismatch");
  const int pixels = cfg.height * cfg.width;
  Eigen::VectorXd x(pixels * cfg.channels);
  for (int c = 0; c < cfg.channels; ++c) {
    for (int p = 0; p < pixels; ++p) x(p * cfg.channels + c) = from_grey(g.pixels[static_cast<std::size_t>(c * pixels + p)]);
  }
  return x;
}

inline std::vector<std::uint8_t> layout_pgm(const std::vector<int>& y, const SceneConfig& cfg) {
  std::vector<std::uint8_t> px(y.begin(), y.end());
  return encode_pgm(cfg.width, cfg.height, px);
}

inline std::vector<int> layout_from_pgm(const Greymap& g, const SceneConfig& cfg) {
  require(g.width == cfg.width && g.height == cfg.height, "layout pgm: geometry mismatch");
  std::vector<int> y(g.pixels.begin(), g.pixels.end());
  for (int label : y) require(label < cfg.n_classes, "layout pgm: class index out of range");
  return y;
}

// ---- manifest: "<image file> <layout file> <condition or ->" per line ----

struct ManifestEntry {
  std::string image;
  std::string layout;
  std::optional<int> cond;
};

inline std::string encode_manifest(const std::vector<ManifestEntry>& entries) {
  std::ostringstream o;
  o << "# image layout condition\n";
  for (const ManifestEntry& e : entries) {
    o << e.image << ' ' << e.layout << ' ' << (e.cond ? std::to_string(*e.cond) : std::string("-")) << '\n';
  }
  return o.str();
}

inline std::vector<ManifestEntry> decode_manifest(const std::string& text) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string cond, extra;
    if (!(ls >> e.image >> e.layout >> cond) || (ls >> extra)) {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": expected three fields");
    }
    if (cond != "-") {
      try {
        std::size_t used = 0;
        e.cond = std::stoi(cond, &used);
        if (used != cond.size() || *e.cond < 0) throw std::invalid_argument(cond);
      } catch (const std::logic_error&) {
        throw ValidationError("manifest line " + std::to_string(lineno) + ": bad condition '" + cond + "'");
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---- key=value config ----

// Parses flat key=value lines. '#' starts a comment; blank lines are skipped.
// Duplicate keys are rejected.
inline std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ValidationError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError(where + ": empty key");
    if (!kv.emplace(key, value).second) throw ValidationError(where + ": duplicate key '" + key + "'");
  }
  return kv;
}

}  // namespace gcdiff::io
