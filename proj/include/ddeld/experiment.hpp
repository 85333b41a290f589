#pragma once

// Experiment configuration and the command implementations behind the CLI:
// gen, eval, sweep, bench, probe and sizing.

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <locale>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ddeld/dataset_io.hpp"
#include "ddeld/errors.hpp"
#include "ddeld/generators.hpp"
#include "ddeld/metrics.hpp"
#include "ddeld/models.hpp"
#include "ddeld/sizing.hpp"
#include "ddeld/windowing.hpp"

namespace ddeld {

inline constexpr char kToolVersion[] = "0.1.0";

struct PredictorConfig {
  std::string kind = "learned";  // learned | upwind | diffusion | identity | global
  double lambda = 1e-8;
  std::size_t budget = 4096;
};

struct SweepConfig {
  std::vector<std::size_t> windows{3, 5, 7, 9, 13, 25};
  std::vector<double> frequencies{0.5, 1.0, 2.0, 4.0};
  double lambda = 0.1;
  std::size_t budget = 16384;
};

struct BenchConfig {
  std::vector<std::size_t> max_blocks{8, 16, 32, 64, 128, 256};
  std::size_t repetitions = 5;
  std::size_t window = 3;
  // Small enough that the largest field (B_max = 256) stays in L1, so every
  // point is timed in the same memory regime.
  std::size_t batch = 1;
  std::size_t inner_blocks = 2;  // blocks along the second axis, held fixed
  double min_seconds = 0.05;     // per repetition
  std::size_t slices = 10;       // timing slices per repetition
};

struct ProbeConfig {
  std::size_t radius = 1;
  std::size_t layers = 4;
};

struct ExperimentConfig {
  DatasetParams dataset;
  std::optional<Extents> window;  // empty means "auto"
  PredictorConfig predictor;
  double split = 0.5;
  std::string out = "out";
  unsigned threads = 1;
  SweepConfig sweep;
  BenchConfig bench;
  ProbeConfig probe;

  ExperimentConfig() {
    dataset.kind = DatasetKind::advection;
    dataset.shape = Shape(4, {128}, 1);
    dataset.pde.dx = 1.0 / 32.0;
    dataset.pde.dt = 0.1;
    dataset.pde.c = {0.3125};
    dataset.ic.type = IcSpec::Type::sine;
    dataset.ic.freq = 2.0;
    dataset.steps = 20;
  }
};

// --- JSON parsing ----------------------------------------------------------

namespace detail {

using nlohmann::json;

class Fields {
public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config field '" + where + "': " + what);
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json* get(const std::string& key) {
    seen_.push_back(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = get(key)) out = as_number(*v, at(key));
  }
  void count(const std::string& key, std::size_t& out, std::size_t min = 0) {
    if (const json* v = get(key)) out = as_count(*v, at(key), min);
  }
  void string(const std::string& key, std::string& out) {
    if (const json* v = get(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  // Unknown keys are almost always typos; reject them.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) fail(at(it.key()), "unknown key");
    }
  }

  static double as_number(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(where, "must be finite");
    return d;
  }
  static std::size_t as_count(const json& v, const std::string& where, std::size_t min) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      fail(where, "expected a non-negative integer");
    }
    const auto n = v.get<std::uint64_t>();
    if (n < min) fail(where, "must be at least " + std::to_string(min));
    return static_cast<std::size_t>(n);
  }
  template <typename T, typename F>
  static std::vector<T> as_list(const json& v, const std::string& where, F item) {
    if (!v.is_array()) fail(where, "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(item(v[i], where + "[" + std::to_string(i) + "]"));
    return out;
  }

private:
  const json& obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline void parse_dataset(const json& j, DatasetParams& ds) {
  Fields f(j, "dataset");
  std::string kind = to_string(ds.kind);
  f.string("kind", kind);
  try {
    ds.kind = kind_from_string(kind);
  } catch (const DomainError& e) {
    Fields::fail(f.at("kind"), e.what());
  }
  if (ds.kind == DatasetKind::external) Fields::fail(f.at("kind"), "external datasets cannot be generated");

  Extents dims = ds.shape.spatial();
  std::size_t batch = ds.shape.batch(), channels = ds.shape.channels();
  if (const json* v = f.get("dims")) {
    dims = Fields::as_list<std::size_t>(*v, f.at("dims"),
                                        [](const json& x, const std::string& w) { return Fields::as_count(x, w, 1); });
  }
  f.count("batch", batch, 1);
  f.count("channels", channels, 1);
  if (ds.kind == DatasetKind::burgers && !f.get("channels")) channels = 2;
  try {
    ds.shape = Shape(batch, dims, channels);
  } catch (const Error& e) {
    Fields::fail(f.at("dims"), e.what());
  }

  f.number("dx", ds.pde.dx);
  f.number("dt", ds.pde.dt);
  if (const json* v = f.get("c")) {
    ds.pde.c = Fields::as_list<double>(*v, f.at("c"), Fields::as_number);
  } else if (ds.pde.c.size() != dims.size()) {
    ds.pde.c.assign(dims.size(), ds.pde.c.empty() ? 0.0 : ds.pde.c.front());
  }
  f.number("nu", ds.pde.nu);
  f.number("alpha", ds.pde.alpha);
  std::string boundary = to_string(ds.pde.boundary);
  f.string("boundary", boundary);
  try {
    ds.pde.boundary = boundary_from_string(boundary);
  } catch (const DomainError& e) {
    Fields::fail(f.at("boundary"), e.what());
  }
  f.count("steps", ds.steps, 1);
  if (const json* v = f.get("seed")) ds.seed = Fields::as_count(*v, f.at("seed"), 0);

  if (const json* v = f.get("ic")) {
    Fields ic(*v, f.at("ic"));
    std::string type = to_string(ds.ic.type);
    ic.string("type", type);
    try {
      ds.ic.type = ic_type_from_string(type);
    } catch (const DomainError& e) {
      Fields::fail(ic.at("type"), e.what());
    }
    ic.number("freq", ds.ic.freq);
    ic.count("modes", ds.ic.modes, 1);
    ic.number("value", ds.ic.value);
    ic.count("bumps", ds.ic.bumps.count, 1);
    ic.finish();
  }
  f.finish();

  if (!(ds.pde.dx > 0.0)) Fields::fail(f.at("dx"), "must be positive");
  if (!(ds.pde.dt > 0.0)) Fields::fail(f.at("dt"), "must be positive");
  if (ds.pde.nu < 0.0) Fields::fail(f.at("nu"), "must be non-negative");
  if (ds.pde.alpha < 0.0) Fields::fail(f.at("alpha"), "must be non-negative");
  if (ds.pde.c.size() != dims.size()) Fields::fail(f.at("c"), "needs one entry per spatial dim");
  if (!(ds.ic.freq > 0.0) && ds.ic.type != IcSpec::Type::constant && ds.ic.type != IcSpec::Type::bumps) {
    Fields::fail(f.at("ic.freq"), "must be positive");
  }
  switch (ds.kind) {
    case DatasetKind::advection:
      if (ds.pde.boundary != Boundary::periodic) Fields::fail(f.at("boundary"), "advection data is periodic");
      break;
    case DatasetKind::burgers:
      if (dims.size() != 2 || channels != 2) Fields::fail(f.at("dims"), "burgers needs 2 spatial dims and 2 channels");
      if (ds.pde.boundary != Boundary::periodic) Fields::fail(f.at("boundary"), "burgers data is periodic");
      break;
    case DatasetKind::heat:
      if (channels != 1) Fields::fail(f.at("channels"), "heat data has one channel");
      break;
    case DatasetKind::external: break;
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  using nlohmann::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
  ExperimentConfig cfg;
  detail::Fields f(root, "");
  if (const json* v = f.get("dataset")) detail::parse_dataset(*v, cfg.dataset);
  if (const json* v = f.get("window")) {
    if (v->is_string()) {
      if (v->get<std::string>() != "auto") detail::Fields::fail("window", "expected \"auto\" or a list of odd sizes");
      cfg.window.reset();
    } else {
      cfg.window = detail::Fields::as_list<std::size_t>(
          *v, "window", [](const json& x, const std::string& w) { return detail::Fields::as_count(x, w, 1); });
    }
  }
  if (const json* v = f.get("predictor")) {
    detail::Fields p(*v, "predictor");
    p.string("kind", cfg.predictor.kind);
    p.number("lambda", cfg.predictor.lambda);
    p.count("budget", cfg.predictor.budget, 1);
    p.finish();
  }
  f.number("split", cfg.split);
  f.string("out", cfg.out);
  if (const json* v = f.get("threads")) {
    cfg.threads = static_cast<unsigned>(detail::Fields::as_count(*v, "threads", 1));
  }
  if (const json* v = f.get("sweep")) {
    detail::Fields s(*v, "sweep");
    if (const json* w = s.get("windows")) {
      cfg.sweep.windows = detail::Fields::as_list<std::size_t>(
          *w, "sweep.windows", [](const json& x, const std::string& where) { return detail::Fields::as_count(x, where, 3); });
    }
    if (const json* w = s.get("frequencies")) {
      cfg.sweep.frequencies = detail::Fields::as_list<double>(*w, "sweep.frequencies", detail::Fields::as_number);
    }
    s.number("lambda", cfg.sweep.lambda);
    s.count("budget", cfg.sweep.budget, 1);
    s.finish();
  }
  if (const json* v = f.get("bench")) {
    detail::Fields b(*v, "bench");
    if (const json* w = b.get("max_blocks")) {
      cfg.bench.max_blocks = detail::Fields::as_list<std::size_t>(
          *w, "bench.max_blocks", [](const json& x, const std::string& where) { return detail::Fields::as_count(x, where, 1); });
    }
    b.count("repetitions", cfg.bench.repetitions, 1);
    b.count("window", cfg.bench.window, 3);
    b.count("batch", cfg.bench.batch, 1);
    b.count("inner_blocks", cfg.bench.inner_blocks, 1);
    b.number("min_seconds", cfg.bench.min_seconds);
    b.count("slices", cfg.bench.slices, 1);
    b.finish();
  }
  if (const json* v = f.get("probe")) {
    detail::Fields p(*v, "probe");
    p.count("radius", cfg.probe.radius, 1);
    p.count("layers", cfg.probe.layers, 1);
    p.finish();
  }
  f.finish();

  static const std::vector<std::string> kinds{"learned", "upwind", "diffusion", "identity", "global"};
  if (std::find(kinds.begin(), kinds.end(), cfg.predictor.kind) == kinds.end()) {
    detail::Fields::fail("predictor.kind", "unknown predictor '" + cfg.predictor.kind + "'");
  }
  if (!(cfg.predictor.lambda >= 0.0)) detail::Fields::fail("predictor.lambda", "must be non-negative");
  if (!(cfg.split > 0.0 && cfg.split < 1.0)) detail::Fields::fail("split", "must lie strictly between 0 and 1");
  if (cfg.window) {
    if (cfg.window->size() != cfg.dataset.shape.rank()) detail::Fields::fail("window", "needs one size per spatial dim");
    for (std::size_t w : *cfg.window) {
      if (w < 3 || w % 2 == 0) detail::Fields::fail("window", "sizes must be odd and at least 3");
    }
  }
  for (std::size_t w : cfg.sweep.windows) {
    if (w % 2 == 0) detail::Fields::fail("sweep.windows", "sizes must be odd");
  }
  for (double fr : cfg.sweep.frequencies) {
    if (!(fr > 0.0)) detail::Fields::fail("sweep.frequencies", "must be positive");
  }
  if (cfg.bench.window % 2 == 0) detail::Fields::fail("bench.window", "must be odd");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

// Parses "w1,w2,..." (a single value is broadcast to every spatial dim).
inline Extents parse_window_flag(const std::string& text, std::size_t rank) {
  Extents out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || end != item.data() + item.size()) {
      throw ConfigError("--window: '" + item + "' is not a positive integer");
    }
    if (v < 3 || v % 2 == 0) throw ConfigError("--window: sizes must be odd and at least 3");
    out.push_back(v);
    pos = comma + 1;
  }
  if (out.size() == 1 && rank > 1) out.assign(rank, out.front());
  if (out.size() != rank) throw ConfigError("--window: expected " + std::to_string(rank) + " sizes");
  return out;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json ds{{"kind", to_string(c.dataset.kind)},
                    {"dims", c.dataset.shape.spatial()},
                    {"batch", c.dataset.shape.batch()},
                    {"channels", c.dataset.shape.channels()},
                    {"dx", c.dataset.pde.dx},
                    {"dt", c.dataset.pde.dt},
                    {"c", c.dataset.pde.c},
                    {"nu", c.dataset.pde.nu},
                    {"alpha", c.dataset.pde.alpha},
                    {"boundary", to_string(c.dataset.pde.boundary)},
                    {"steps", c.dataset.steps},
                    {"seed", c.dataset.seed},
                    {"ic",
                     {{"type", to_string(c.dataset.ic.type)},
                      {"freq", c.dataset.ic.freq},
                      {"modes", c.dataset.ic.modes},
                      {"value", c.dataset.ic.value},
                      {"bumps", c.dataset.ic.bumps.count}}}};
  nlohmann::json j{{"dataset", ds},
                   {"predictor", {{"kind", c.predictor.kind}, {"lambda", c.predictor.lambda}, {"budget", c.predictor.budget}}},
                   {"split", c.split},
                   {"out", c.out},
                   {"threads", c.threads}};
  if (c.window) {
    j["window"] = *c.window;
  } else {
    j["window"] = "auto";
  }
  return j;
}

// --- shared helpers --------------------------------------------------------

// Shortest round-trip decimal form; independent of the global locale.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Frame-pair indices 0..T-1 shuffled with the seed; the first
// round(fraction * T) (at least one, leaving at least one) are training pairs.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline Split split_pairs(std::size_t pairs, double fraction, std::uint64_t seed) {
  if (pairs < 2) throw DomainError("a train/test split needs at least two frame pairs");
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("split fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(pairs);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed ^ 0x5eed5917ULL);
  for (std::size_t i = pairs - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);
  const auto n_train =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pairs))), 1, pairs - 1);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline std::uint64_t fit_seed(std::uint64_t seed) { return seed ^ 0xf17f17f1ULL; }

// Max |value| over the first channel, used as a Burgers speed scale.
inline double max_abs(const BatchTensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

// First spatial line (batch 0, channel 0, other indices 0) as a probe signal.
inline ProbeSignal probe_from_frame(const BatchTensor& frame, double dx) {
  const Shape& s = frame.shape();
  ProbeSignal p;
  p.dx = dx;
  Extents x(s.rank(), 0);
  for (std::size_t i = 0; i < s.spatial(0); ++i) {
    x[0] = i;
    p.samples.push_back(frame.at(0, x, 0));
  }
  return p;
}

inline SizingReport sizing_for(const Dataset& ds) {
  std::optional<Physics> kind;
  if (ds.kind != DatasetKind::external) kind = physics_for(ds.kind);
  std::optional<double> u_max;
  if (ds.kind == DatasetKind::burgers) u_max = max_abs(ds.frames.front());
  std::optional<ProbeSignal> probe;
  try {
    probe = probe_from_frame(ds.frames.front(), ds.pde.dx);
    bandwidth_estimate(probe->samples, probe->dx, probe->energy_fraction);
  } catch (const Error&) {
    probe.reset();
  }
  return recommend_window(ds.pde, kind, probe, u_max);
}

inline WindowSpec resolve_window(const ExperimentConfig& cfg, const Dataset& ds, std::optional<SizingReport>* report) {
  const std::size_t d = ds.shape().rank();
  if (cfg.window) {
    if (cfg.window->size() != d) throw ConfigError("window rank does not match the dataset");
    return WindowSpec(*cfg.window);
  }
  SizingReport rep = sizing_for(ds);
  if (report) *report = rep;
  return WindowSpec::uniform(d, rep.recommended_cells);
}

// A window wider than the field it decomposes is rejected.
inline void check_window_fits(const WindowSpec& w, const Shape& s) {
  for (std::size_t i = 0; i < w.rank(); ++i) {
    if (w.size(i) > s.spatial(i)) {
      throw WindowTooLarge("window " + to_string(w.sizes()) + " exceeds domain " + to_string(s.spatial()));
    }
  }
}

inline std::unique_ptr<FrameModel> build_model(const ExperimentConfig& cfg, const Dataset& ds, const WindowSpec& w,
                                               const std::vector<std::size_t>& train) {
  const FitOptions fit{cfg.predictor.lambda, cfg.predictor.budget, fit_seed(cfg.dataset.seed)};
  const std::string& kind = cfg.predictor.kind;
  std::shared_ptr<const Predictor> p;
  if (kind == "global") return std::make_unique<GlobalLinear>(fit_global_linear(ds, fit, train));
  if (kind == "learned") {
    p = std::make_shared<LearnedStencil>(fit_stencil(ds, w, fit, train));
  } else if (kind == "upwind") {
    p = std::make_shared<UpwindStencil>(ds.pde, w);
  } else if (kind == "diffusion") {
    p = std::make_shared<DiffusionStencil>(ds.pde, w);
  } else if (kind == "identity") {
    p = std::make_shared<IdentityPredictor>();
  } else {
    throw ConfigError("unknown predictor '" + kind + "'");
  }
  return std::make_unique<WindowedModel>(w, std::move(p), cfg.threads);
}

struct FrameMetrics {
  std::size_t frame = 0;  // index of the predicted frame
  MetricsRecord metrics;
};

inline std::vector<FrameMetrics> evaluate_pairs(const FrameModel& model, const Dataset& ds,
                                                const std::vector<std::size_t>& pairs) {
  std::vector<FrameMetrics> out;
  for (std::size_t p : pairs) out.push_back({p + 1, evaluate(model.predict_frame(ds.frames[p]), ds.frames[p + 1])});
  return out;
}

inline void write_metrics_csv(const std::string& path, const std::vector<FrameMetrics>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f << "frame,rel_l2,paper_l2,r2\n";
  for (const auto& r : rows) {
    f << r.frame << ',' << format_number(r.metrics.rel_l2) << ',' << format_number(r.metrics.paper_l2) << ','
      << format_number(r.metrics.r2) << '\n';
  }
  if (!f) throw FormatError("write to '" + path + "' failed");
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw FormatError("write to '" + path + "' failed");
}

inline std::string header_summary(const Dataset& ds) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << "kind=" << to_string(ds.kind) << "\n";
  os << "shape=" << ds.shape().str() << "\n";
  os << "frames=" << ds.frames.size() << "\n";
  os << "dx=" << ds.pde.dx << "\ndt=" << ds.pde.dt << "\nc=";
  for (std::size_t i = 0; i < ds.pde.c.size(); ++i) os << (i ? "," : "") << ds.pde.c[i];
  os << "\nnu=" << ds.pde.nu << "\nalpha=" << ds.pde.alpha << "\n";
  os << "boundary=" << to_string(ds.pde.boundary) << "\nseed=" << ds.seed << "\n";
  return os.str();
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// --- commands ---------------------------------------------------------------

inline Dataset cmd_gen(const ExperimentConfig& cfg, std::ostream& log, const std::string& path = "") {
  Dataset ds = generate_dataset(cfg.dataset);
  if (!path.empty()) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    write_dataset(path, ds);
    log << "wrote " << path << "\n";
  }
  log << header_summary(ds);
  return ds;
}

struct RunRecord {
  nlohmann::json config;
  std::string window;
  std::optional<SizingReport> sizing;
  std::vector<FrameMetrics> train;
  std::vector<FrameMetrics> test;
  double seconds_data = 0.0;
  double seconds_fit = 0.0;
  double seconds_eval = 0.0;
  std::uint64_t seed = 0;
  std::string predictor;

  nlohmann::json metrics_json() const {
    auto rows = [](const std::vector<FrameMetrics>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& r : v) {
        a.push_back({{"frame", r.frame},
                     {"rel_l2", r.metrics.rel_l2},
                     {"paper_l2", r.metrics.paper_l2},
                     {"paper_l2_excluded", r.metrics.paper_l2_excluded},
                     {"r2", r.metrics.r2}});
      }
      return a;
    };
    return {{"train", rows(train)}, {"test", rows(test)}};
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"tool_version", kToolVersion},
                     {"seed", seed},
                     {"predictor", predictor},
                     {"window", window},
                     {"config", config},
                     {"metrics", metrics_json()},
                     {"timings_s", {{"data", seconds_data}, {"fit", seconds_fit}, {"eval", seconds_eval}}}};
    if (sizing) j["sizing"] = to_key_value(*sizing);
    return j;
  }
};

// Fits on the training pairs (learned models) and evaluates one-step
// predictions on both splits. Writes metrics.csv (test), metrics_train.csv,
// run.json and, for the learned stencil, stencil.ddst when `out_dir` is
// non-empty.
inline RunRecord cmd_eval(const ExperimentConfig& cfg, std::ostream& log, const std::string& out_dir = "",
                          const std::optional<std::string>& dataset_path = std::nullopt) {
  RunRecord rec;
  rec.config = to_json(cfg);
  rec.seed = cfg.dataset.seed;
  rec.predictor = cfg.predictor.kind;

  auto t0 = Clock::now();
  Dataset ds = dataset_path ? read_dataset(*dataset_path) : generate_dataset(cfg.dataset);
  rec.seconds_data = seconds_since(t0);
  if (ds.frames.size() < 2) throw DomainError("evaluation needs at least two frames");

  const WindowSpec w = resolve_window(cfg, ds, &rec.sizing);
  check_window_fits(w, ds.shape());
  rec.window = to_string(w.sizes());

  Split split;
  const bool learned = cfg.predictor.kind == "learned" || cfg.predictor.kind == "global";
  if (ds.steps() >= 2) {
    split = split_pairs(ds.steps(), cfg.split, cfg.dataset.seed);
  } else if (learned) {
    throw DomainError("a fitted predictor needs at least two frame pairs to split");
  } else {
    split.test = {0};
  }

  t0 = Clock::now();
  const auto model = build_model(cfg, ds, w, split.train);
  rec.seconds_fit = seconds_since(t0);

  t0 = Clock::now();
  rec.train = evaluate_pairs(*model, ds, split.train);
  rec.test = evaluate_pairs(*model, ds, split.test);
  rec.seconds_eval = seconds_since(t0);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_metrics_csv(out_dir + "/metrics.csv", rec.test);
    write_metrics_csv(out_dir + "/metrics_train.csv", rec.train);
    write_text(out_dir + "/run.json", rec.to_json().dump(2) + "\n");
    if (const auto* wm = dynamic_cast<const WindowedModel*>(model.get())) {
      if (const auto* st = dynamic_cast<const LearnedStencil*>(&wm->predictor())) {
        write_stencil(out_dir + "/stencil.ddst", *st);
      }
    }
  }

  double mean_rel = 0.0, mean_r2 = 0.0;
  for (const auto& r : rec.test) {
    mean_rel += r.metrics.rel_l2;
    mean_r2 += r.metrics.r2;
  }
  const auto n = static_cast<double>(std::max<std::size_t>(1, rec.test.size()));
  log << "predictor=" << rec.predictor << " window=" << rec.window << " train_pairs=" << split.train.size()
      << " test_pairs=" << split.test.size() << "\n";
  log << "test mean rel_l2=" << format_number(mean_rel / n) << " r2=" << format_number(mean_r2 / n) << "\n";
  return rec;
}

// Pools the one-step predictions of `pairs` into a single metrics record.
inline MetricsRecord pooled_metrics(const FrameModel& model, const Dataset& ds, const std::vector<std::size_t>& pairs) {
  std::vector<double> pred, truth;
  for (std::size_t p : pairs) {
    const BatchTensor y = model.predict_frame(ds.frames[p]);
    pred.insert(pred.end(), y.data().begin(), y.data().end());
    truth.insert(truth.end(), ds.frames[p + 1].data().begin(), ds.frames[p + 1].data().end());
  }
  const Shape flat(1, {truth.size()}, 1);
  return evaluate(BatchTensor(flat, std::move(pred)), BatchTensor(flat, std::move(truth)));
}

struct SweepCell {
  std::size_t window = 0;
  double frequency = 0.0;
  std::size_t min_window = 0;
  std::size_t recommended = 0;
  double r2 = 0.0;
  double rel_l2 = 0.0;
};

// Runs `count` independent jobs on up to `threads` workers; the first
// exception is rethrown after all workers finish.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& job) {
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, count))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            job(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// Test r2 of a learned stencil for every (window, frequency) pair. The
// dataset section supplies the grid and transport; its initial condition is
// replaced by band-limited fields at each frequency.
inline std::vector<SweepCell> cmd_sweep(const ExperimentConfig& cfg, std::ostream& log, const std::string& out_dir = "") {
  std::vector<std::size_t> windows = cfg.sweep.windows;
  std::vector<double> freqs = cfg.sweep.frequencies;
  std::sort(windows.begin(), windows.end());
  windows.erase(std::unique(windows.begin(), windows.end()), windows.end());
  std::sort(freqs.begin(), freqs.end());
  freqs.erase(std::unique(freqs.begin(), freqs.end()), freqs.end());
  if (windows.size() < 2 || freqs.size() < 2) throw ConfigError("sweep needs at least two windows and two frequencies");
  const std::size_t d = cfg.dataset.shape.rank();

  std::vector<Dataset> data(freqs.size());
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    DatasetParams p = cfg.dataset;
    p.ic.type = IcSpec::Type::bandlimited;
    p.ic.freq = freqs[k];
    data[k] = generate_dataset(p);
  }
  const Split split = split_pairs(cfg.dataset.steps, cfg.split, cfg.dataset.seed);
  const std::size_t ppu = points_per_unit(cfg.dataset.pde.dx);
  std::optional<Physics> physics;
  if (cfg.dataset.kind != DatasetKind::external) physics = physics_for(cfg.dataset.kind);

  std::vector<SweepCell> cells(freqs.size() * windows.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    const std::size_t k = i / windows.size();
    const Dataset& ds = data[k];
    SweepCell& cell = cells[i];
    cell.window = windows[i % windows.size()];
    cell.frequency = freqs[k];
    cell.min_window = min_window_theorem2(ppu, freqs[k]);
    cell.recommended = recommend_window(ds.pde, physics, probe_from_frame(ds.frames.front(), ds.pde.dx)).recommended_cells;
    const WindowSpec w = WindowSpec::uniform(d, cell.window);
    check_window_fits(w, ds.shape());
    const FitOptions fit{cfg.sweep.lambda, cfg.sweep.budget, fit_seed(cfg.dataset.seed) + k};
    WindowedModel model(w, std::make_shared<LearnedStencil>(fit_stencil(ds, w, fit, split.train)));
    const MetricsRecord m = pooled_metrics(model, ds, split.test);
    cell.r2 = m.r2;
    cell.rel_l2 = m.rel_l2;
  });

  std::ostringstream csv;
  csv << "window,frequency,min_window,recommended,r2,rel_l2\n";
  for (const auto& c : cells) {
    csv << c.window << ',' << format_number(c.frequency) << ',' << c.min_window << ',' << c.recommended << ','
        << format_number(c.r2) << ',' << format_number(c.rel_l2) << '\n';
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/sweep.csv", csv.str());
  }
  log << csv.str();
  return cells;
}

struct BenchPoint {
  std::size_t max_blocks = 0;
  double median_seconds = 0.0;
  std::vector<double> samples;
};

struct BenchResult {
  std::vector<BenchPoint> points;
  double slope = 0.0;  // least-squares slope of log(time) on log(B_max)
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("slope needs at least two matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

inline constexpr double kReferenceInferenceSeconds = 2.1e-3;

// Times chunk_domain followed by window_patch on a 2D field with B_max blocks
// along the first axis and a fixed block count along the second. Each
// repetition runs for at least `min_seconds`.
inline BenchResult cmd_bench(const BenchConfig& bc, std::ostream& log, const std::string& out_dir = "") {
  if (bc.max_blocks.size() < 4) throw ConfigError("bench needs at least four B_max values");
  if (!std::is_sorted(bc.max_blocks.begin(), bc.max_blocks.end())) throw ConfigError("bench B_max list must be ascending");
  if (bc.repetitions < 1) throw ConfigError("bench needs at least one repetition");
  BenchResult res;
  std::vector<BatchTensor> fields;
  for (std::size_t bmax : bc.max_blocks) {
    BatchTensor field(Shape(bc.batch, {bmax * bc.window, bc.inner_blocks * bc.window}, 1));
    for (std::size_t i = 0; i < field.size(); ++i) field.data()[i] = static_cast<double>(i % 97);
    fields.push_back(std::move(field));
    res.points.push_back(BenchPoint{bmax, 0.0, {}});
  }
  // Repetitions cycle over all points so slow drift of the host spreads
  // evenly across B_max. A repetition is timed in short slices and reports
  // the median slice, so a transient stall does not decide the sample.
  double sink = 0.0;
  for (std::size_t rep = 0; rep < bc.repetitions; ++rep) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const Extents blocks{res.points[k].max_blocks, bc.inner_blocks};
      std::vector<double> slices;
      const auto start = Clock::now();
      do {
        std::size_t iters = 0;
        const auto t0 = Clock::now();
        double elapsed = 0.0;
        do {
          BatchTensor back = window_patch(chunk_domain(fields[k], blocks), bc.batch, blocks);
          sink += back.data()[iters % back.size()];
          ++iters;
          elapsed = seconds_since(t0);
        } while (elapsed < bc.min_seconds / static_cast<double>(bc.slices));
        slices.push_back(elapsed / static_cast<double>(iters));
      } while (slices.size() < bc.slices || seconds_since(start) < bc.min_seconds);
      res.points[k].samples.push_back(median(slices));
    }
  }
  if (sink < 0.0) log << "";  // keeps the work observable
  std::vector<double> xs, ys;
  for (auto& pt : res.points) {
    pt.median_seconds = median(pt.samples);
    xs.push_back(static_cast<double>(pt.max_blocks));
    ys.push_back(pt.median_seconds);
  }
  res.slope = loglog_slope(xs, ys);

  std::ostringstream csv;
  csv << "b_max,median_seconds,repetitions\n";
  for (const auto& p : res.points) {
    csv << p.max_blocks << ',' << format_number(p.median_seconds) << ',' << p.samples.size() << '\n';
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/bench.csv", csv.str());
  }
  log << csv.str();
  log << "loglog_slope=" << format_number(res.slope) << "\n";
  log << "reference_inference_seconds=" << format_number(kReferenceInferenceSeconds)
      << " (external figure, not measured)\n";
  return res;
}

struct ProbeResult {
  Extents measured;
  std::size_t predicted = 0;
  bool pass = false;
};

inline ProbeResult cmd_probe(std::size_t radius, std::size_t layers, std::ostream& log) {
  ProbeResult r;
  r.predicted = 2 * layers * radius + 1;
  r.measured = receptive_field_probe(radius, layers, 4 * layers * radius + 3);
  r.pass = std::all_of(r.measured.begin(), r.measured.end(), [&](std::size_t m) { return m == r.predicted; });
  log << "radius=" << radius << " layers=" << layers << " measured=" << to_string(r.measured)
      << " predicted=" << r.predicted << " " << (r.pass ? "PASS" : "FAIL") << "\n";
  return r;
}

inline SizingReport cmd_sizing(const ExperimentConfig& cfg, std::ostream& log, const std::string& out_dir = "") {
  DatasetParams p = cfg.dataset;
  p.steps = 1;
  const Dataset ds = generate_dataset(p);
  const SizingReport rep = sizing_for(ds);
  const std::string text = to_key_value(rep);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/sizing.txt", text);
  }
  log << text;
  return rep;
}

}  // namespace ddeld
