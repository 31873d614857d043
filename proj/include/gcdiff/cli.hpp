#pragma once

// Command-line front end: generate-data, train, sample, outpaint, evaluate,
// verify. Exit codes: 0 ok, 1 usage, 2 validation, 3 numerical.

#include "gcdiff/io.hpp"
#include "gcdiff/metrics.hpp"
#include "gcdiff/oracles.hpp"
#include "gcdiff/sampler.hpp"
#include "gcdiff/toy_scenes.hpp"
#include "gcdiff/training.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gcdiff::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kValidation = 2, kNumerical = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct RunConfig {
  // shared
  std::uint64_t seed = 0;
  std::string out = "out";
  // scenes / generate-data
  int height = 8;
  int width = 8;
  int channels = 1;
  int n_classes = 4;
  std::string palette;  // comma-separated levels; empty for the default ramp
  double sigma_data = 0.05;
  double p_blob = 0.5;
  int data_count = 20000;
  // train
  std::string data;
  std::string resume;
  long steps = 20000;
  int batch = 64;
  double lr = 1e-3;
  double cond_dropout = 0.1;
  double lambda_cat = 1.0;
  std::string loss = "vlb";
  double p_power = 1.0;
  int total_steps = 1000;
  double schedule_offset = 0.008;
  int log_every = 100;
  double ema_decay = 0.0;
  int hidden = 256;
  int blocks = 4;
  // sample / outpaint
  std::string checkpoint;
  int count = 16;
  double guidance_w = 1.0;
  int stride = 100;
  std::string cond = "none";  // none | data | <condition id>
  std::string known;
  std::string mask_mode = "layout";
  std::string mask_file;
  int resample_n = 1;
  // evaluate
  std::string samples;
  std::string reference;

  // Name -> (getter, setter) for every key, in canonical order.
  struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
  };

  static const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> f = [] {
      std::map<std::string, Field> m;
      const auto str = [&](const char* k, std::string RunConfig::*p) {
        m[k] = {[p](const RunConfig& c) { return c.*p; }, [p](RunConfig& c, const std::string& v) { c.*p = v; }};
      };
      const auto dbl = [&](const char* k, double RunConfig::*p) {
        m[k] = {[p](const RunConfig& c) { return format_double(c.*p); },
                [p, k](RunConfig& c, const std::string& v) { c.*p = parse_number<double>(k, v); }};
      };
      const auto integer = [&](const char* k, auto RunConfig::*p) {
        using T = std::remove_reference_t<decltype(std::declval<RunConfig&>().*p)>;
        m[k] = {[p](const RunConfig& c) { return std::to_string(c.*p); },
                [p, k](RunConfig& c, const std::string& v) { c.*p = parse_number<T>(k, v); }};
      };
      integer("seed", &RunConfig::seed);
      str("out", &RunConfig::out);
      integer("height", &RunConfig::height);
      integer("width", &RunConfig::width);
      integer("channels", &RunConfig::channels);
      integer("n_classes", &RunConfig::n_classes);
      str("palette", &RunConfig::palette);
      dbl("sigma_data", &RunConfig::sigma_data);
      dbl("p_blob", &RunConfig::p_blob);
      integer("data_count", &RunConfig::data_count);
      str("data", &RunConfig::data);
      str("resume", &RunConfig::resume);
      integer("steps", &RunConfig::steps);
      integer("batch", &RunConfig::batch);
      dbl("lr", &RunConfig::lr);
      dbl("cond_dropout", &RunConfig::cond_dropout);
      dbl("lambda_cat", &RunConfig::lambda_cat);
      str("loss", &RunConfig::loss);
      dbl("p_power", &RunConfig::p_power);
      integer("T", &RunConfig::total_steps);
      dbl("schedule_offset", &RunConfig::schedule_offset);
      integer("log_every", &RunConfig::log_every);
      dbl("ema_decay", &RunConfig::ema_decay);
      integer("hidden", &RunConfig::hidden);
      integer("blocks", &RunConfig::blocks);
      str("checkpoint", &RunConfig::checkpoint);
      integer("count", &RunConfig::count);
      dbl("guidance_w", &RunConfig::guidance_w);
      integer("stride", &RunConfig::stride);
      str("cond", &RunConfig::cond);
      str("known", &RunConfig::known);
      str("mask_mode", &RunConfig::mask_mode);
      str("mask_file", &RunConfig::mask_file);
      integer("resample_n", &RunConfig::resample_n);
      str("samples", &RunConfig::samples);
      str("reference", &RunConfig::reference);
      return m;
    }();
    return f;
  }

  template <typename T>
  static T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      throw ValidationError("config key '" + key + "': cannot parse '" + v + "'");
    }
    return out;
  }

  void set(const std::string& key, const std::string& value) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ValidationError("unknown config key '" + key + "'");
    it->second.set(*this, value);
  }

  void apply(const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) set(k, v);
  }

  // Every key, sorted, one key=value per line.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, f] : fields()) s += k + "=" + f.get(*this) + "\n";
    return s;
  }

  static RunConfig parse(const std::string& text, const std::string& origin = "config") {
    RunConfig c;
    c.apply(io::parse_key_values(text, origin));
    return c;
  }

  SceneConfig scene() const {
    SceneConfig s;
    s.height = height;
    s.width = width;
    s.channels = channels;
    s.n_classes = n_classes;
    s.sigma_data = sigma_data;
    s.p_blob = p_blob;
    s.seed = seed;
    std::stringstream ss(palette);
    std::string tok;
    while (std::getline(ss, tok, ',')) s.palette.push_back(parse_number<double>("palette", tok));
    s.validate();
    return s;
  }

  LossOptions loss_options() const {
    LossOptions o;
    if (loss == "vlb") {
      o.mode = LossMode::vlb;
    } else if (loss == "simple") {
      o.mode = LossMode::simple;
    } else {
      throw ValidationError("loss must be 'vlb' or 'simple'");
    }
    require(lambda_cat >= 0.0 && std::isfinite(lambda_cat), "lambda_cat must be nonnegative");
    o.lambda_cat = lambda_cat;
    return o;
  }
};

struct Context {
  RunConfig cfg;
  std::ostream& out;
};

inline std::filesystem::path out_dir(const RunConfig& c) {
  std::filesystem::create_directories(c.out);
  return c.out;
}

inline void require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ValidationError(std::string("missing required setting '") + key + "'");
}

inline int cmd_generate_data(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require(c.data_count >= 1, "data_count must be positive");
  io::Dataset d;
  d.scene = c.scene();
  d.samples = generate(d.scene, static_cast<std::size_t>(c.data_count));
  const auto path = out_dir(c) / "dataset.gcds";
  io::save_dataset(path, d);
  ctx.out << "wrote " << d.samples.size() << " samples to " << path.string() << "\n";
  return kOk;
}

inline int cmd_train(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require_path(c.data, "data");
  const io::Dataset data = io::load_dataset(c.data);
  require(!data.samples.empty(), "train: dataset is empty");

  TrainConfig tc;
  tc.steps = c.steps;
  tc.batch = c.batch;
  tc.lr = c.lr;
  tc.cond_dropout = c.cond_dropout;
  tc.seed = c.seed;
  tc.loss = c.loss_options();
  tc.log_every = c.log_every;
  tc.ema_decay = c.ema_decay;

  std::optional<io::Checkpoint> ck;
  if (!c.resume.empty()) {
    ck = io::load_checkpoint(c.resume);
    require(ck->scene.shape() == data.scene.shape(), "train: checkpoint shape differs from dataset");
  } else {
    ArchConfig arch;
    arch.shape = data.scene.shape();
    arch.total_steps = c.total_steps;
    arch.cond_count = data.scene.condition_count();
    arch.hidden = c.hidden;
    arch.blocks = c.blocks;
    arch.validate();
    ck = io::Checkpoint{data.scene, io::ScheduleSpec{c.total_steps, c.p_power, c.schedule_offset}, tc,
                        init_train_state<float>(arch, c.seed, c.lr)};
  }
  ck->train = tc;
  const NoiseSchedule sched = ck->schedule.build();
  std::vector<ConditionedSample> ds(data.samples.begin(), data.samples.end());
  std::ostringstream trace;
  trace << "# step loss\n";
  const auto log = [&](const LossTracePoint& p) {
    trace << p.step << ' ' << format_double(p.loss) << '\n';
    ctx.out << "step " << p.step << " loss " << p.loss << "\n";
  };
  train(ck->state, std::span<const ConditionedSample>(ds), sched, tc, log);
  const auto dir = out_dir(c);
  io::save_checkpoint(dir / "checkpoint.gcdp", *ck);
  io::write_text(dir / "loss_trace.txt", trace.str());
  ctx.out << "wrote " << (dir / "checkpoint.gcdp").string() << "\n";
  return kOk;
}

// Parsed `cond` setting for `count` items: none, a fixed id, or per-item
// conditions taken from `data_conds`.
inline std::vector<std::optional<int>> resolve_conditions(const RunConfig& c, std::size_t count, int cond_count,
                                                          const std::vector<int>& data_conds = {}) {
  std::vector<std::optional<int>> out(count);
  if (c.cond == "none") return out;
  if (c.cond == "data") {
    require(data_conds.size() >= count, "cond=data needs a condition for every item");
    for (std::size_t i = 0; i < count; ++i) out[i] = data_conds[i];
    return out;
  }
  const int id = RunConfig::parse_number<int>("cond", c.cond);
  require(id > 0 && id < cond_count, "cond out of range for this model (0 is the empty class set)");
  for (auto& o : out) o = id;
  return out;
}

inline void write_samples(const std::filesystem::path& dir, const std::vector<JointSample>& zs,
                          const std::vector<std::optional<int>>& conds, const SceneConfig& scene) {
  std::vector<io::ManifestEntry> entries;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "sample_%05zu", i);
    const std::string img = std::string(stem) + ".image.pgm";
    const std::string lay = std::string(stem) + ".layout.pgm";
    io::write_file(dir / img, io::image_pgm(zs[i].x, scene));
    io::write_file(dir / lay, io::layout_pgm(zs[i].y, scene));
    entries.push_back({img, lay, conds[i]});
  }
  io::write_text(dir / "manifest.txt", io::encode_manifest(entries));
}

inline GuidanceConfig guidance_of(const RunConfig& c) {
  require(std::isfinite(c.guidance_w), "guidance_w must be finite");
  return {c.guidance_w, c.guidance_w != 1.0};
}

inline constexpr std::size_t kSampleChunk = 256;

inline int cmd_sample(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require_path(c.checkpoint, "checkpoint");
  require(c.count >= 1, "count must be positive");
  const io::Checkpoint ck = io::load_checkpoint(c.checkpoint);
  const NoiseSchedule sched = ck.schedule.build();
  const ReferenceDenoiser<float> model = ck.state.averaged_model();
  const std::vector<int> steps = stride_steps(sched.total_steps(), std::min(c.stride, sched.total_steps()));
  const auto n = static_cast<std::size_t>(c.count);
  std::vector<int> grammar_conds;
  if (c.cond == "data") {
    SceneConfig sc = ck.scene;
    sc.seed = c.seed;
    for (const SceneSample& s : generate(sc, n)) grammar_conds.push_back(s.cond);
  }
  const auto conds = resolve_conditions(c, n, model.arch().cond_count, grammar_conds);
  std::vector<JointSample> zs;
  for (std::size_t lo = 0; lo < n; lo += kSampleChunk) {
    const std::size_t hi = std::min(n, lo + kSampleChunk);
    std::vector<Rng> rngs;
    for (std::size_t i = lo; i < hi; ++i) rngs.emplace_back(derive_seed(c.seed, i));
    const auto part = strided_sample_batch(model, sched, std::span(conds).subspan(lo, hi - lo), guidance_of(c),
                                           steps, rngs);
    zs.insert(zs.end(), part.begin(), part.end());
  }
  write_samples(out_dir(c), zs, conds, ck.scene);
  ctx.out << "wrote " << zs.size() << " samples to " << c.out << "\n";
  return kOk;
}

// Whitespace-separated 0/1 tokens: N image entries, then M layout entries.
inline std::vector<bool> read_mask_file(const std::string& path, const ShapeSpec& shape) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<bool> mask;
  std::string tok;
  while (in >> tok) {
    if (tok != "0" && tok != "1") throw ValidationError("mask file: token " + std::to_string(mask.size()) + " is not 0/1");
    mask.push_back(tok == "1");
  }
  if (mask.size() != shape.n_gauss + shape.n_cat) {
    throw ValidationError("mask file: expected " + std::to_string(shape.n_gauss + shape.n_cat) + " entries, found " +
                          std::to_string(mask.size()));
  }
  return mask;
}

inline std::vector<bool> mask_for(const RunConfig& c, const ShapeSpec& shape) {
  std::vector<bool> mask(shape.n_gauss + shape.n_cat, false);
  if (c.mask_mode == "layout") {
    // layout unknown: generate it from the known image
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(shape.n_gauss), true);
  } else if (c.mask_mode == "image") {
    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(shape.n_gauss), mask.end(), true);
  } else if (c.mask_mode == "file") {
    require_path(c.mask_file, "mask_file");
    mask = read_mask_file(c.mask_file, shape);
  } else {
    throw ValidationError("mask_mode must be layout, image or file");
  }
  return mask;
}

struct OutpaintStats {
  double layout_agreement = 0.0;  // generated layout vs segmentation of the known image
  double image_agreement = 0.0;   // segmentation of the generated image vs the known layout
  bool known_exact = true;
};

inline OutpaintStats outpaint_stats(const std::vector<JointSample>& outs, const std::vector<OutpaintSpec>& specs,
                                    const SceneConfig& scene) {
  OutpaintStats st;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const JointSample& z = outs[i];
    const OutpaintSpec& sp = specs[i];
    st.layout_agreement += pixel_agreement(z.y, oracle_segment(sp.known.x, scene));
    st.image_agreement += pixel_agreement(oracle_segment(z.x, scene), sp.known.y);
    const auto n = static_cast<std::size_t>(z.x.size());
    for (std::size_t j = 0; j < n; ++j) {
      if (sp.mask[j] && z.x(static_cast<Eigen::Index>(j)) != sp.known.x(static_cast<Eigen::Index>(j))) st.known_exact = false;
    }
    for (std::size_t j = 0; j < z.y.size(); ++j) {
      if (sp.mask[n + j] && z.y[j] != sp.known.y[j]) st.known_exact = false;
    }
  }
  st.layout_agreement /= static_cast<double>(outs.size());
  st.image_agreement /= static_cast<double>(outs.size());
  return st;
}

inline int cmd_outpaint(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require_path(c.checkpoint, "checkpoint");
  require_path(c.known, "known");
  require(c.count >= 1, "count must be positive");
  const io::Checkpoint ck = io::load_checkpoint(c.checkpoint);
  const io::Dataset known = io::load_dataset(c.known);
  require(known.scene.shape() == ck.scene.shape(), "outpaint: known samples do not match the model shape");
  const NoiseSchedule sched = ck.schedule.build();
  const ReferenceDenoiser<float> model = ck.state.averaged_model();
  const std::vector<int> steps = stride_steps(sched.total_steps(), std::min(c.stride, sched.total_steps()));
  const std::size_t n = std::min(static_cast<std::size_t>(c.count), known.samples.size());
  const std::vector<bool> mask = mask_for(c, model.shape());
  std::vector<OutpaintSpec> specs;
  std::vector<int> data_conds;
  for (std::size_t i = 0; i < n; ++i) {
    specs.push_back({known.samples[i].z, mask, c.resample_n});
    data_conds.push_back(known.samples[i].cond);
  }
  const auto conds = resolve_conditions(c, n, model.arch().cond_count, data_conds);
  std::vector<JointSample> zs;
  for (std::size_t lo = 0; lo < n; lo += kSampleChunk) {
    const std::size_t hi = std::min(n, lo + kSampleChunk);
    std::vector<Rng> rngs;
    for (std::size_t i = lo; i < hi; ++i) rngs.emplace_back(derive_seed(c.seed, i));
    const auto part = outpaint_batch(model, sched, std::span<const OutpaintSpec>(specs).subspan(lo, hi - lo),
                                     std::span(conds).subspan(lo, hi - lo), guidance_of(c), steps, rngs);
    zs.insert(zs.end(), part.begin(), part.end());
  }
  const auto dir = out_dir(c);
  write_samples(dir, zs, conds, ck.scene);
  const OutpaintStats st = outpaint_stats(zs, specs, ck.scene);
  std::ostringstream rep;
  rep << "samples=" << n << "\n"
      << "mask_mode=" << c.mask_mode << "\n"
      << "resample_n=" << c.resample_n << "\n"
      << "layout_agreement=" << format_double(st.layout_agreement) << "\n"
      << "image_agreement=" << format_double(st.image_agreement) << "\n"
      << "known_exact=" << (st.known_exact ? "true" : "false") << "\n";
  io::write_text(dir / "outpaint_report.txt", rep.str());
  ctx.out << rep.str();
  return kOk;
}

inline int cmd_evaluate(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require_path(c.samples, "samples");
  require_path(c.reference, "reference");
  const io::Dataset ref = io::load_dataset(c.reference);
  const std::filesystem::path dir = c.samples;
  const std::vector<std::uint8_t> mbytes = io::read_file(dir / "manifest.txt");
  const auto entries = io::decode_manifest(std::string(mbytes.begin(), mbytes.end()));
  require(!entries.empty(), "evaluate: manifest lists no samples");
  std::vector<ConditionedSample> gen;
  for (const io::ManifestEntry& e : entries) {
    ConditionedSample s;
    s.z.x = io::image_from_pgm(io::decode_pgm(io::read_file(dir / e.image)), ref.scene);
    s.z.y = io::layout_from_pgm(io::decode_pgm(io::read_file(dir / e.layout)), ref.scene);
    // Unconditional samples are scored against their own layout's classes.
    s.cond = e.cond ? *e.cond : condition_of(s.z.y);
    require(s.cond > 0 && s.cond < ref.scene.condition_count(), "evaluate: condition out of range");
    gen.push_back(std::move(s));
  }
  std::vector<std::vector<int>> ref_layouts;
  for (const SceneSample& s : ref.samples) ref_layouts.push_back(s.z.y);
  const EvalReport rep = evaluate(gen, ref_layouts, ref.scene);
  const auto out = out_dir(c);
  io::write_text(out / "report.txt", rep.to_text());
  ctx.out << rep.to_text();
  return kOk;
}

// Multinomial 3-sigma bound on the TV of n grammar draws: half the sum over
// summary bins of 3 sqrt(p (1 - p) / n).
inline double tv_sampling_bound(const SceneConfig& cfg, std::size_t n) {
  double b = 0.0;
  for (const auto& [key, p] : summary_distribution(cfg)) b += 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  return 0.5 * b;
}

// Metric examples with exact expected values, checked alongside the oracles.
inline std::vector<oracle::CheckResult> metric_examples(std::uint64_t seed = 0) {
  std::vector<oracle::CheckResult> out;
  const auto check = [&](const std::string& name, double got, double want, double tol) {
    out.push_back({name, std::abs(got - want) <= tol, std::abs(got - want), tol, 1, ""});
  };
  {
    const std::vector<DetectionPair> one{{ClassSet(0b011), ClassSet(0b111)}};
    check("metric_recall_two_of_three", semantic_recall(one, 3).value, 2.0 / 3.0, 1e-15);
    const std::vector<DetectionPair> two{{ClassSet(0b01), ClassSet(0b11)}, {ClassSet(0b0111), ClassSet(0b1111)}};
    check("metric_recall_average", semantic_recall(two, 4).value, 0.625, 1e-15);
    const std::vector<DetectionPair> sup{{ClassSet(0b111), ClassSet(0b011)}, {ClassSet(0b1100), ClassSet(0b0100)}};
    check("metric_recall_superset", semantic_recall(sup, 4).value, 1.0, 0.0);
  }
  check("metric_f_unit", semantic_f(1.0, 1.0), 1.0, 0.0);
  check("metric_f_zero_precision", semantic_f(1.0, 0.0), 0.0, 0.0);
  check("metric_f_harmonic", semantic_f(0.5, 0.75), 0.6, 1e-15);
  {
    const std::vector<int> a{0, 0, 1, 1}, b{0, 1, 1, 1};
    check("metric_miou_identical", miou(a, a, 2), 1.0, 0.0);
    check("metric_miou_hand_count", miou(a, b, 2), 7.0 / 12.0, 1e-15);
    const std::vector<int> c(4, 0), d(4, 1);
    check("metric_miou_disjoint", miou(c, d, 2), 0.0, 0.0);
  }
  {
    std::vector<std::vector<int>> ga, gb;
    for (int n : {8, 10, 12}) ga.emplace_back(static_cast<std::size_t>(n), 0);
    for (int n : {10, 12, 14}) gb.emplace_back(static_cast<std::size_t>(n), 0);
    check("metric_fsd_identical", fsd(ga, ga, 1), 0.0, 1e-8);
    // means 10 and 12, both variances 4
    check("metric_fsd_one_dimensional", fsd(ga, gb, 1), 4.0, 1e-9);
    Rng rng(derive_seed(seed, 20));
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
      Eigen::Matrix2d s1 = Eigen::Matrix2d::Zero(), s2 = Eigen::Matrix2d::Zero();
      s1.diagonal() << 0.1 + 5.0 * uniform01(rng), 0.1 + 5.0 * uniform01(rng);
      s2.diagonal() << 0.1 + 5.0 * uniform01(rng), 0.1 + 5.0 * uniform01(rng);
      const Eigen::Vector2d m1(uniform01(rng), uniform01(rng)), m2(uniform01(rng), uniform01(rng));
      worst = std::max(worst, std::abs(frechet_distance(m1, s1, m2, s2) - oracle::frechet_2x2(m1, s1, m2, s2)));
    }
    out.push_back({"metric_fsd_2x2_diagonal", worst <= 1e-8, worst, 1e-8, 100, ""});
  }
  {
    SceneConfig cfg;
    cfg.seed = derive_seed(seed, 21);
    const std::size_t n = 4000;
    std::vector<std::vector<int>> layouts;
    for (const SceneSample& s : generate(cfg, n)) layouts.push_back(s.z.y);
    const double bound = tv_sampling_bound(cfg, n);
    const double tv = joint_tv(layouts, cfg);
    out.push_back({"metric_tv_grammar_self_test", tv <= bound, tv, bound, n, ""});
    const std::vector<std::vector<int>> same(n, layouts.front());
    const double p = summary_distribution(cfg).at(layout_summary(layouts.front(), cfg.n_classes));
    check("metric_tv_point_mass", joint_tv(same, cfg), 1.0 - p, 1e-12);
    // every pixel one class never occurs in the grammar
    const std::vector<std::vector<int>> off(n, std::vector<int>(layouts.front().size(), 0));
    check("metric_tv_disjoint", joint_tv(off, cfg), 1.0, 1e-12);
  }
  return out;
}

inline int cmd_verify(Context& ctx) {
  std::vector<oracle::CheckResult> results = oracle::run_all(ctx.cfg.seed);
  for (auto& r : metric_examples(ctx.cfg.seed)) results.push_back(r);
  bool ok = true;
  std::ostringstream rep;
  for (const auto& r : results) {
    rep << r.line() << "\n";
    ok = ok && r.passed;
  }
  ctx.out << rep.str();
  if (ctx.cfg.out != RunConfig{}.out || std::filesystem::exists(ctx.cfg.out)) {
    io::write_text(out_dir(ctx.cfg) / "verify.txt", rep.str());
  }
  return ok ? kOk : kValidation;
}

// Entry point shared by the tool and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian-categorical diffusion toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--set", sets, "override any config key (key=value)");
    for (const char* key : {"seed", "out"}) sub->add_option(std::string("--") + key, flag_values[key]);
  };
  const auto add_flags = [&](CLI::App* sub, std::initializer_list<std::pair<const char*, const char*>> flags) {
    for (const auto& [flag, key] : flags) sub->add_option(flag, flag_values[key]);
  };

  CLI::App* gen = app.add_subcommand("generate-data", "write a toy scene dataset");
  add_common(gen);
  add_flags(gen, {{"--count", "data_count"}});
  CLI::App* tr = app.add_subcommand("train", "train the reference denoiser");
  add_common(tr);
  add_flags(tr, {{"--data", "data"},
                 {"--resume", "resume"},
                 {"--steps", "steps"},
                 {"--batch", "batch"},
                 {"--lr", "lr"},
                 {"--cond-dropout", "cond_dropout"},
                 {"--lambda-cat", "lambda_cat"},
                 {"--loss", "loss"},
                 {"--p-power", "p_power"},
                 {"--T", "T"},
                 {"--ema-decay", "ema_decay"}});
  CLI::App* sa = app.add_subcommand("sample", "draw image-layout pairs");
  add_common(sa);
  add_flags(sa, {{"--checkpoint", "checkpoint"},
                 {"--count", "count"},
                 {"--guidance-w", "guidance_w"},
                 {"--stride", "stride"},
                 {"--cond", "cond"}});
  CLI::App* op = app.add_subcommand("outpaint", "complete the missing modality of known samples");
  add_common(op);
  add_flags(op, {{"--checkpoint", "checkpoint"},
                 {"--known", "known"},
                 {"--mask", "mask_file"},
                 {"--mask-mode", "mask_mode"},
                 {"--resample-n", "resample_n"},
                 {"--count", "count"},
                 {"--guidance-w", "guidance_w"},
                 {"--stride", "stride"},
                 {"--cond", "cond"}});
  CLI::App* ev = app.add_subcommand("evaluate", "score a sample directory against a reference dataset");
  add_common(ev);
  add_flags(ev, {{"--samples", "samples"}, {"--reference", "reference"}});
  CLI::App* ve = app.add_subcommand("verify", "run the oracle suite");
  add_common(ve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      const std::vector<std::uint8_t> bytes = io::read_file(config_path);
      cfg.apply(io::parse_key_values(std::string(bytes.begin(), bytes.end()), config_path));
    }
    for (const auto& [key, value] : flag_values) {
      if (!value.empty()) cfg.set(key, value);
    }
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    Context ctx{cfg, out};
    if (gen->parsed()) return cmd_generate_data(ctx);
    if (tr->parsed()) return cmd_train(ctx);
    if (sa->parsed()) return cmd_sample(ctx);
    if (op->parsed()) return cmd_outpaint(ctx);
    if (ev->parsed()) return cmd_evaluate(ctx);
    return cmd_verify(ctx);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const io::FormatError& e) {
    err << "malformed file: " << e.what() << "\n";
    return kValidation;
  } catch (const ValidationError& e) {
    err << "validation failure: " << e.what() << "\n";
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "validation failure: " << e.what() << "\n";
    return kValidation;
  }
}

}  // namespace gcdiff::cli
