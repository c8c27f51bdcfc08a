#include "pinn/cli/experiment.hpp"

#include "pinn/error.hpp"
#include "pinn/nn/network.hpp"
#include "pinn/pde/pde.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace pinn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string param_suffix(double x) { return fmt(x); }

Error config_error(const std::string& what, std::vector<std::size_t> where = {}) {
  return Error(ErrorCode::ConfigError, what, std::move(where));
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    std::string item = trim(std::string_view(s).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (item.empty()) throw config_error("empty item in list '" + s + "'");
    out.push_back(std::move(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Presets.

std::vector<std::size_t> Preset::widths(std::size_t input_dim) const {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(1);
  return w;
}

namespace {

std::vector<Preset> build_presets() {
  struct Family {
    std::string name;
    nn::ActivationTag tag;
    char param_letter;               // 0 when the family has no swept parameter
    std::vector<double> params;
    double default_param;
    bool equilibrate;
    std::size_t rff_features;
    std::string description;
  };
  const std::vector<Family> families{
      {"tanh-pinn", nn::ActivationTag::Tanh, 0, {}, 0.0, false, 0, "tanh activations"},
      {"g-pinn", nn::ActivationTag::Gaussian, 's', {0.1, 0.2, 0.4}, 0.2, false, 0,
       "Gaussian exp(-x^2/s^2) activations"},
      {"sine-pinn", nn::ActivationTag::Sine, 'f', {1.0, 2.0, 10.0}, 1.0, false, 0, "sin(f x) activations"},
      {"wavelet-pinn", nn::ActivationTag::Wavelet, 0, {}, 1.0, false, 0,
       "real Gabor wavelet sin(x) exp(-x^2/2) activations"},
      {"eg-pinn", nn::ActivationTag::Gaussian, 0, {}, 0.2, true, 0,
       "Gaussian s=0.2 with row-equilibrated inner layers"},
      {"rff-pinn", nn::ActivationTag::Tanh, 0, {}, 0.0, false, 64,
       "tanh behind a 64-frequency random Fourier embedding, B ~ N(0,1)"},
  };
  std::vector<Preset> out;
  for (const Family& f : families) {
    for (std::size_t depth : {3u, 2u}) {
      const std::string base = f.name + "-" + std::to_string(depth) + "x128";
      auto make = [&](const std::string& name, double param) {
        Preset p;
        p.name = name;
        p.family = f.name;
        p.hidden.assign(depth, 128);
        p.activation = nn::Activation{f.tag, param};
        p.equilibrate = f.equilibrate;
        p.rff_features = f.rff_features;
        p.rff_scale = 1.0;
        p.description = f.description;
        if (f.param_letter) p.description += ", " + std::string(1, f.param_letter) + "=" + fmt(param);
        return p;
      };
      if (f.param_letter) {
        for (double v : f.params) out.push_back(make(base + "-" + f.param_letter + param_suffix(v), v));
      } else {
        out.push_back(make(base, f.default_param));
      }
      if (depth == 3) {
        Preset alias = make(f.name, f.default_param);
        out.push_back(alias);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Preset& a, const Preset& b) { return a.name < b.name; });
  return out;
}

}  // namespace

const std::vector<Preset>& preset_table() {
  static const std::vector<Preset> table = build_presets();
  return table;
}

const Preset& find_preset(const std::string& name) {
  for (const Preset& p : preset_table())
    if (p.name == name) return p;
  throw config_error("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Parsing.

RawConfig parse_config_text(std::string_view text) {
  RawConfig raw;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view line_view = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    std::string line = trim(line_view);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw config_error("line " + std::to_string(line_no) + ": unterminated section header", {line_no});
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw config_error("line " + std::to_string(line_no) + ": empty section name", {line_no});
      raw[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("line " + std::to_string(line_no) + ": expected 'key = value'", {line_no});
    if (section.empty())
      throw config_error("line " + std::to_string(line_no) + ": key outside any [section]", {line_no});
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    // Trailing comment after whitespace.
    for (const char* marker : {" #", "\t#", " ;", "\t;"}) {
      const auto c = value.find(marker);
      if (c != std::string::npos) value = trim(std::string_view(value).substr(0, c));
    }
    if (key.empty()) throw config_error("line " + std::to_string(line_no) + ": empty key", {line_no});
    auto& sec = raw[section];
    if (sec.count(key))
      throw config_error("line " + std::to_string(line_no) + ": duplicate key '" + section + "." + key + "'", {line_no});
    sec.emplace(std::move(key), std::move(value));
  }
  return raw;
}

RawConfig read_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Train: return "train";
    case ExperimentKind::NtkSweep: return "ntk-sweep";
    case ExperimentKind::Lipschitz: return "lipschitz";
    case ExperimentKind::Landscape: return "landscape";
    case ExperimentKind::PrecondVerify: return "precond-verify";
  }
  return "train";
}

SamplingCounts default_sampling(const std::string& problem) {
  if (problem == "burgers") return {100, 10000};
  if (problem == "diffusion") return {100, 1000};
  return {2, 1000};
}

ExperimentConfig::ExperimentConfig() {
  train.epochs = 1000;
  ntk.widths = {800, 1600, 3200, 6400};
  ntk.activations = {nn::Activation::gaussian(0.1), nn::Activation::tanh()};
  lipschitz.widths = {64, 128, 256, 512, 1024, 2048};
}

namespace {

/// Pulls typed values out of a RawConfig and remembers what was read, so
/// that leftovers can be reported as unknown keys.
class Reader {
 public:
  explicit Reader(const RawConfig& raw) : raw_(raw) {}

  const std::string* find(const std::string& section, const std::string& key) {
    auto s = raw_.find(section);
    if (s == raw_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used_.insert(section + "." + key);
    return &k->second;
  }

  void str(const std::string& sec, const std::string& key, std::string& out) {
    if (auto v = find(sec, key)) {
      if (v->empty()) throw bad(sec, key, *v, "a nonempty string");
      out = *v;
    }
  }

  template <class Int>
  void integer(const std::string& sec, const std::string& key, Int& out, Int min = 1) {
    if (auto v = find(sec, key)) out = parse_int<Int>(sec, key, *v, min);
  }

  void real(const std::string& sec, const std::string& key, double& out, bool positive = true) {
    if (auto v = find(sec, key)) out = parse_real(sec, key, *v, positive);
  }

  void boolean(const std::string& sec, const std::string& key, bool& out) {
    if (auto v = find(sec, key)) {
      if (*v == "true" || *v == "yes" || *v == "on" || *v == "1") out = true;
      else if (*v == "false" || *v == "no" || *v == "off" || *v == "0") out = false;
      else throw bad(sec, key, *v, "a boolean");
    }
  }

  void sizes(const std::string& sec, const std::string& key, std::vector<std::size_t>& out) {
    if (auto v = find(sec, key)) {
      out.clear();
      for (const auto& item : split_list(*v)) out.push_back(parse_int<std::size_t>(sec, key, item, 1));
      for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i] <= out[i - 1]) throw bad(sec, key, *v, "a strictly increasing list");
    }
  }

  void activations(const std::string& sec, const std::string& key, std::vector<nn::Activation>& out) {
    if (auto v = find(sec, key)) {
      out.clear();
      for (const auto& item : split_list(*v)) {
        const auto colon = item.find(':');
        const std::string tag = colon == std::string::npos ? item : item.substr(0, colon);
        double param = tag == "wavelet" ? 1.0 : 0.0;
        if (colon != std::string::npos) param = parse_real(sec, key, item.substr(colon + 1), true);
        else if (tag == "gaussian" || tag == "sine") throw bad(sec, key, item, "tag:param for " + tag);
        try {
          out.push_back(nn::Activation::parse(tag, param));
        } catch (const Error&) {
          throw bad(sec, key, item, "an activation tag");
        }
      }
    }
  }

  void reject_leftovers() const {
    for (const auto& [sec, keys] : raw_) {
      for (const auto& [key, value] : keys)
        if (!used_.count(sec + "." + key)) throw config_error("unknown key '" + sec + "." + key + "'");
    }
  }

  static Error bad(const std::string& sec, const std::string& key, const std::string& v, const std::string& want) {
    return config_error("'" + sec + "." + key + "' = '" + v + "' is not " + want);
  }

 private:
  template <class Int>
  static Int parse_int(const std::string& sec, const std::string& key, const std::string& v, Int min) {
    unsigned long long x = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
      throw bad(sec, key, v, "a nonnegative integer");
    if (x < static_cast<unsigned long long>(min)) throw bad(sec, key, v, "at least " + std::to_string(min));
    return static_cast<Int>(x);
  }

  static double parse_real(const std::string& sec, const std::string& key, const std::string& v, bool positive) {
    double x = 0.0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(x))
      throw bad(sec, key, v, "a finite number");
    if (positive && !(x > 0.0)) throw bad(sec, key, v, "positive");
    return x;
  }

  const RawConfig& raw_;
  std::set<std::string> used_;
};

const std::set<std::string> kSections{"experiment", "sampling", "train", "output",
                                      "ntk", "lipschitz", "landscape", "precond"};

}  // namespace

ExperimentConfig resolve_config(const RawConfig& raw) {
  for (const auto& [sec, keys] : raw)
    if (!kSections.count(sec)) throw config_error("unknown section [" + sec + "]");

  ExperimentConfig c;
  Reader r(raw);

  const std::string* kind = r.find("experiment", "kind");
  if (!kind) throw config_error("missing required key 'experiment.kind'");
  bool known = false;
  for (auto k : {ExperimentKind::Train, ExperimentKind::NtkSweep, ExperimentKind::Lipschitz,
                 ExperimentKind::Landscape, ExperimentKind::PrecondVerify}) {
    if (*kind == to_string(k)) {
      c.kind = k;
      known = true;
    }
  }
  if (!known) throw config_error("unknown experiment kind '" + *kind + "'");
  r.str("experiment", "problem", c.problem);
  r.str("experiment", "preset", c.preset);
  r.str("experiment", "output", c.output);
  r.integer("experiment", "replicas", c.replicas);
  r.integer("experiment", "workers", c.workers, std::size_t{0});

  (void)pde::problem_by_name(c.problem);  // ConfigError when unknown
  (void)find_preset(c.preset);

  const SamplingCounts d = default_sampling(c.problem);
  c.n_boundary = d.n_boundary;
  c.n_residual = d.n_residual;
  r.integer("sampling", "n_boundary", c.n_boundary);
  r.integer("sampling", "n_residual", c.n_residual);
  r.integer("sampling", "seed", c.seed, std::uint64_t{0});

  r.integer("train", "epochs", c.train.epochs, std::size_t{0});
  r.real("train", "learning_rate", c.train.learning_rate);
  r.real("train", "beta1", c.train.adam_beta1, false);
  r.real("train", "beta2", c.train.adam_beta2, false);
  r.real("train", "eps", c.train.adam_eps);
  r.integer("train", "metric_stride", c.train.metric_stride);
  r.boolean("train", "equilibrate_every_step", c.train.equilibrate_every_step);
  r.boolean("train", "track_condition", c.train.track_condition);
  r.boolean("train", "track_test_error", c.train.track_test_error);
  r.boolean("train", "monitor_ntk_gap", c.train.monitor_ntk_gap);
  if (c.kind == ExperimentKind::Train && c.train.epochs == 0)
    throw config_error("'train.epochs' must be at least 1 for kind train");

  std::string timing = "wall";
  r.str("output", "timing", timing);
  if (timing == "wall") c.timing = true;
  else if (timing == "off") c.timing = false;
  else throw Reader::bad("output", "timing", timing, "'wall' or 'off'");

  r.sizes("ntk", "widths", c.ntk.widths);
  r.integer("ntk", "n_train", c.ntk.n_train);
  r.integer("ntk", "input_dim", c.ntk.input_dim);
  r.integer("ntk", "second_width", c.ntk.second_width);
  r.activations("ntk", "activations", c.ntk.activations);

  r.sizes("lipschitz", "widths", c.lipschitz.widths);
  r.integer("lipschitz", "input_dim", c.lipschitz.input_dim);
  r.integer("lipschitz", "inner_width", c.lipschitz.inner_width);
  r.real("lipschitz", "gaussian_s", c.lipschitz.gaussian_s);
  r.integer("lipschitz", "n_samples", c.lipschitz.n_samples);

  r.real("landscape", "half_width", c.landscape.half_width);
  r.integer("landscape", "grid_points", c.landscape.grid_points);
  r.integer("landscape", "lanczos_iters", c.landscape.lanczos_iters);
  r.real("landscape", "hvp_step", c.landscape.hvp_step, false);
  if (c.landscape.grid_points % 2 == 0) throw config_error("'landscape.grid_points' must be odd");
  if (c.landscape.hvp_step < 0.0) throw config_error("'landscape.hvp_step' must be >= 0 (0 = automatic)");

  r.integer("precond", "matrices", c.precond.matrices);
  r.integer("precond", "diagonals_per_matrix", c.precond.diagonals_per_matrix);
  r.integer("precond", "n", c.precond.n, std::size_t{2});
  r.real("precond", "diagonal_log10_range", c.precond.diagonal_log10_range);
  r.real("precond", "rounding_slack", c.precond.rounding_slack, false);

  r.reject_leftovers();

  c.train.seed = c.seed;
  c.train.record_wall_time = c.timing;
  c.ntk.seed = c.seed;
  c.ntk.replicas = c.replicas;
  c.lipschitz.seed = c.seed;
  c.landscape.seed = c.seed;
  c.precond.seed = c.seed;
  try {
    c.train.validate();
  } catch (const Error& e) {
    throw config_error(std::string("train settings: ") + e.what());
  }
  return c;
}

namespace {

std::string activations_text(const std::vector<nn::Activation>& acts) {
  std::string s;
  for (const auto& a : acts) {
    if (!s.empty()) s += ", ";
    s += a.tag_name();
    if (a.tag != nn::ActivationTag::Tanh && a.tag != nn::ActivationTag::Identity) s += ":" + fmt(a.param);
  }
  return s;
}

std::string sizes_text(const std::vector<std::size_t>& v) {
  std::string s;
  for (auto x : v) {
    if (!s.empty()) s += ", ";
    s += std::to_string(x);
  }
  return s;
}

// Ordered (section, key, value) triples; shared by the text and JSON forms.
std::vector<std::tuple<std::string, std::string, std::string>> config_entries(const ExperimentConfig& c) {
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  return {
      {"experiment", "kind", std::string(to_string(c.kind))},
      {"experiment", "problem", c.problem},
      {"experiment", "preset", c.preset},
      {"experiment", "output", c.output},
      {"experiment", "replicas", std::to_string(c.replicas)},
      {"experiment", "workers", std::to_string(c.workers)},
      {"sampling", "n_boundary", std::to_string(c.n_boundary)},
      {"sampling", "n_residual", std::to_string(c.n_residual)},
      {"sampling", "seed", std::to_string(c.seed)},
      {"train", "epochs", std::to_string(c.train.epochs)},
      {"train", "learning_rate", fmt(c.train.learning_rate)},
      {"train", "beta1", fmt(c.train.adam_beta1)},
      {"train", "beta2", fmt(c.train.adam_beta2)},
      {"train", "eps", fmt(c.train.adam_eps)},
      {"train", "metric_stride", std::to_string(c.train.metric_stride)},
      {"train", "equilibrate_every_step", b(c.train.equilibrate_every_step)},
      {"train", "track_condition", b(c.train.track_condition)},
      {"train", "track_test_error", b(c.train.track_test_error)},
      {"train", "monitor_ntk_gap", b(c.train.monitor_ntk_gap)},
      {"output", "timing", c.timing ? "wall" : "off"},
      {"ntk", "widths", sizes_text(c.ntk.widths)},
      {"ntk", "n_train", std::to_string(c.ntk.n_train)},
      {"ntk", "input_dim", std::to_string(c.ntk.input_dim)},
      {"ntk", "second_width", std::to_string(c.ntk.second_width)},
      {"ntk", "activations", activations_text(c.ntk.activations)},
      {"lipschitz", "widths", sizes_text(c.lipschitz.widths)},
      {"lipschitz", "input_dim", std::to_string(c.lipschitz.input_dim)},
      {"lipschitz", "inner_width", std::to_string(c.lipschitz.inner_width)},
      {"lipschitz", "gaussian_s", fmt(c.lipschitz.gaussian_s)},
      {"lipschitz", "n_samples", std::to_string(c.lipschitz.n_samples)},
      {"landscape", "half_width", fmt(c.landscape.half_width)},
      {"landscape", "grid_points", std::to_string(c.landscape.grid_points)},
      {"landscape", "lanczos_iters", std::to_string(c.landscape.lanczos_iters)},
      {"landscape", "hvp_step", fmt(c.landscape.hvp_step)},
      {"precond", "matrices", std::to_string(c.precond.matrices)},
      {"precond", "diagonals_per_matrix", std::to_string(c.precond.diagonals_per_matrix)},
      {"precond", "n", std::to_string(c.precond.n)},
      {"precond", "diagonal_log10_range", fmt(c.precond.diagonal_log10_range)},
      {"precond", "rounding_slack", fmt(c.precond.rounding_slack)},
  };
}

}  // namespace

nlohmann::json config_to_json(const ExperimentConfig& c) {
  json j = json::object();
  for (const auto& [sec, key, value] : config_entries(c)) j[sec][key] = value;
  return j;
}

std::string config_to_text(const ExperimentConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& [sec, key, value] : config_entries(c)) {
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    os << key << " = " << value << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Running.

fs::path output_root(const fs::path& override_root) {
  if (!override_root.empty()) return override_root;
  if (const char* env = std::getenv("PINNLAB_OUTPUT_ROOT"); env && *env) return fs::path(env);
  return fs::current_path();
}

json error_json(const std::exception& e, int exit_code) {
  json j;
  j["status"] = "error";
  j["exit_code"] = exit_code;
  j["message"] = e.what();
  if (auto* pe = dynamic_cast<const Error*>(&e)) {
    j["code"] = std::string(to_string(pe->code()));
    j["where"] = pe->where();
  } else {
    j["code"] = "Internal";
    j["where"] = json::array();
  }
  return j;
}

namespace {

int exit_code_for(const std::exception& e) {
  if (auto* pe = dynamic_cast<const Error*>(&e)) {
    switch (pe->code()) {
      case ErrorCode::ConfigError:
      case ErrorCode::IoError:
      case ErrorCode::InvalidArgument:
        return kExitConfig;
      default:
        return kExitNumeric;
    }
  }
  return kExitNumeric;
}

json stats_json(std::vector<double> v) {
  json j;
  j["values"] = v;
  if (v.empty()) return j;
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  j["mean"] = mean;
  j["sd"] = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  j["median"] = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  j["min"] = v.front();
  j["max"] = v.back();
  return j;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Runs task(i) for i in [0, n) on up to `workers` threads. The first
/// failure by index is rethrown after every task has finished.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& task) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](std::size_t i) {
    try {
      task(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) body(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Collects artifacts in a staging directory.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

  std::ofstream open(const std::string& name) {
    std::ofstream os(dir_ / name, std::ios::binary);
    if (!os) throw Error(ErrorCode::IoError, "cannot write '" + (dir_ / name).string() + "'");
    names_.push_back(name);
    return os;
  }

  void write(const std::string& name, const std::string& content) {
    auto os = open(name);
    os << content;
    if (!os) throw Error(ErrorCode::IoError, "write failed for '" + name + "'");
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  const std::vector<std::string>& names() const { return names_; }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

std::string replica_file(const std::string& stem, std::size_t r, const std::string& ext) {
  return stem + "_r" + std::to_string(r) + ext;
}

std::string plot_header(const std::string& title) {
  return "# gnuplot script; data files are written by the same run\n"
         "set datafile separator ','\n"
         "set title '" + title + "'\n"
         "set grid\n";
}

// --- train ---------------------------------------------------------------

struct ReplicaRun {
  std::vector<train::RunRecord> records;
  std::string checkpoint;
  std::string landscape_csv;
  json landscape;
};

nn::Network build_network(const ExperimentConfig& c, const pde::PdeProblem& problem, std::uint64_t seed) {
  const Preset& p = find_preset(c.preset);
  const auto widths = p.widths(problem.input_dim());
  nn::Network net = nn::init_he(widths, p.activation, seed, p.options());
  if (net.equilibrate_inner()) nn::equilibrate_weights(net);
  return net;
}

ReplicaRun run_replica(const ExperimentConfig& c, std::size_t r, bool with_landscape) {
  const pde::PdeProblem problem = pde::problem_by_name(c.problem);
  const std::uint64_t seed = c.seed + r;
  nn::Network net = build_network(c, problem, seed);
  const pde::SampleSet samples = pde::make_samples(problem, c.n_boundary, c.n_residual, seed);
  train::TrainConfig tc = c.train;
  tc.seed = seed;
  tc.record_wall_time = c.timing;
  ReplicaRun out;
  out.records = train::train(net, problem, samples, tc);
  std::ostringstream ck;
  nn::save_checkpoint(ck, net);
  out.checkpoint = ck.str();
  if (with_landscape) {
    train::LandscapeConfig lc = c.landscape;
    lc.seed = seed;
    const auto theta = net.parameters();
    const train::LandscapeSlice slice =
        train::landscape_slice(theta, train::make_loss_closure(net, problem, samples), lc);
    std::ostringstream csv, js;
    train::write_landscape_csv(csv, slice);
    train::write_landscape_json(js, slice);
    out.landscape_csv = csv.str();
    out.landscape = json::parse(js.str());
  }
  return out;
}

void run_train(const ExperimentConfig& c, Artifacts& art, json& summary, bool with_landscape) {
  const pde::PdeProblem problem = pde::problem_by_name(c.problem);
  const Preset& preset = find_preset(c.preset);
  const std::size_t layers = preset.hidden.size() + 1;
  std::vector<ReplicaRun> runs(c.replicas);
  parallel_for(c.replicas, c.workers, [&](std::size_t r) { runs[r] = run_replica(c, r, with_landscape); });

  const bool test_error = c.train.track_test_error && problem.has_exact();
  const bool have_metrics = c.train.epochs > 0;
  std::vector<std::string> metric_files;
  for (std::size_t r = 0; r < c.replicas; ++r) {
    if (have_metrics) {
      const std::string name = replica_file("metrics", r, ".csv");
      auto os = art.open(name);
      train::write_metrics_header(os, c.train.track_condition ? layers : 0);
      for (const auto& rec : runs[r].records) train::write_metrics_row(os, rec);
      metric_files.push_back(name);
    }
    art.write(replica_file("checkpoint", r, ".txt"), runs[r].checkpoint);
    if (with_landscape) {
      art.write(replica_file("landscape", r, ".csv"), runs[r].landscape_csv);
      art.write_json(replica_file("landscape", r, ".json"), runs[r].landscape);
    }
  }

  json seeds = json::array();
  for (std::size_t r = 0; r < c.replicas; ++r) seeds.push_back(c.seed + r);
  summary["replica_seeds"] = seeds;

  if (have_metrics) {
    std::vector<double> total, boundary, residual, l2_train, rel_test, gap;
    std::vector<std::vector<double>> kappa(c.train.track_condition ? layers : 0);
    for (const auto& run : runs) {
      const auto& f = run.records.back();
      total.push_back(f.loss_total);
      boundary.push_back(f.loss_boundary);
      residual.push_back(f.loss_residual);
      l2_train.push_back(f.l2_train_error);
      rel_test.push_back(f.rel_l2_test_error);
      for (std::size_t k = 0; k < kappa.size() && k < f.per_layer_condition.size(); ++k)
        kappa[k].push_back(f.per_layer_condition[k]);
      if (c.train.monitor_ntk_gap) {
        double worst = std::numeric_limits<double>::infinity();
        for (const auto& rec : run.records)
          if (rec.ntk_gap_slack) worst = std::min(worst, *rec.ntk_gap_slack);
        gap.push_back(worst);
      }
    }
    json fin;
    fin["epoch"] = runs.front().records.back().epoch;
    fin["loss_total"] = stats_json(total);
    fin["loss_boundary"] = stats_json(boundary);
    fin["loss_residual"] = stats_json(residual);
    fin["l2_train"] = stats_json(l2_train);
    if (test_error) fin["rel_l2_test"] = stats_json(rel_test);
    json kj = json::array();
    for (auto& k : kappa) kj.push_back(stats_json(k));
    fin["kappa"] = kj;
    if (c.train.monitor_ntk_gap) fin["ntk_gap_min_slack"] = stats_json(gap);
    summary["final"] = fin;
  }
  if (with_landscape) {
    std::vector<double> e1, e2, center, ratio;
    for (const auto& run : runs) {
      e1.push_back(run.landscape.value("eig1", 0.0));
      e2.push_back(run.landscape.value("eig2", 0.0));
      center.push_back(run.landscape.value("center_loss", 0.0));
      const auto& er = run.landscape["extremal_ratio"];
      ratio.push_back(er.is_number() ? er.get<double>() : std::numeric_limits<double>::quiet_NaN());
    }
    summary["landscape"] = {{"eig1", stats_json(e1)},
                            {"eig2", stats_json(e2)},
                            {"center_loss", stats_json(center)},
                            {"extremal_ratio", stats_json(ratio)}};
  }

  std::ostringstream gp;
  gp << plot_header(std::string(with_landscape ? "loss landscape" : "training") + ": " + c.preset + " on " + c.problem);
  if (have_metrics) {
    gp << "set xlabel 'epoch'\nset logscale y\n";
    if (test_error) gp << "set multiplot layout 2,1\n";
    gp << "set ylabel 'loss'\nplot ";
    for (std::size_t i = 0; i < metric_files.size(); ++i)
      gp << (i ? ", \\\n     " : "") << "'" << metric_files[i] << "' using 1:2 skip 1 with lines title 'replica " << i << "'";
    gp << "\n";
    if (test_error) {
      gp << "set ylabel 'relative L2 test error'\nplot ";
      for (std::size_t i = 0; i < metric_files.size(); ++i)
        gp << (i ? ", \\\n     " : "") << "'" << metric_files[i] << "' using 1:6 skip 1 with lines title 'replica " << i << "'";
      gp << "\nunset multiplot\n";
    }
    gp << "unset logscale y\n";
  }
  if (with_landscape) {
    gp << "set xlabel 'alpha'\nset ylabel 'beta'\nset view map\nunset key\n";
    for (std::size_t r = 0; r < c.replicas; ++r)
      gp << "splot '" << replica_file("landscape", r, ".csv") << "' using 1:2:3 skip 1 with points pt 5 palette\n";
  }
  art.write("plot.gp", gp.str());
}

// --- ntk sweep -----------------------------------------------------------

void run_ntk(const ExperimentConfig& c, Artifacts& art, json& summary) {
  ntk::SweepConfig sc = c.ntk;
  sc.seed = c.seed;
  sc.replicas = c.replicas;
  ntk::SweepResult res = ntk::min_eigenvalue_sweep(sc);
  if (!c.timing)
    for (auto& row : res.rows) row.seconds = 0.0;
  {
    auto os = art.open("sweep.csv");
    ntk::write_sweep_csv(os, res.rows);
  }
  std::ostringstream fits;
  ntk::write_slope_json(fits, res.fits);
  art.write("slopes.json", fits.str());

  json per = json::object();
  for (const auto& act : sc.activations) {
    const std::string label = ntk::activation_label(act);
    json widths = json::array();
    for (std::size_t w : sc.widths) {
      std::vector<double> v;
      for (const auto& row : res.rows)
        if (row.activation == label && row.width == w) v.push_back(row.lambda_min);
      json e = stats_json(v);
      e["width"] = w;
      widths.push_back(e);
    }
    per[label] = widths;
  }
  summary["lambda_min"] = per;
  summary["fits"] = json::parse(fits.str());

  std::ostringstream gp;
  gp << plot_header("minimum NTK eigenvalue vs first hidden width")
     << "set logscale xy\nset xlabel 'n1'\nset ylabel 'lambda_min(K_uu)'\nset key left top\nplot ";
  for (std::size_t i = 0; i < sc.activations.size(); ++i) {
    const std::string label = ntk::activation_label(sc.activations[i]);
    gp << (i ? ", \\\n     " : "") << "'sweep.csv' using 2:(strcol(1) eq '" << label
       << "' ? $4 : NaN) skip 1 with points title '" << label << "'";
  }
  gp << "\n";
  art.write("plot.gp", gp.str());
}

// --- lipschitz -----------------------------------------------------------

void run_lipschitz(const ExperimentConfig& c, Artifacts& art, json& summary) {
  std::vector<std::vector<ntk::LipschitzRow>> rows(c.replicas);
  parallel_for(c.replicas, c.workers, [&](std::size_t r) {
    ntk::LipschitzSweepConfig lc = c.lipschitz;
    lc.seed = c.seed + r;
    rows[r] = ntk::lipschitz_width_sweep(lc);
  });
  {
    auto os = art.open("lipschitz.csv");
    os.precision(17);
    os << "width,replica,lipschitz,seconds\n";
    for (std::size_t r = 0; r < c.replicas; ++r)
      for (const auto& row : rows[r])
        os << row.width << ',' << r << ',' << row.lipschitz << ',' << (c.timing ? row.seconds : 0.0) << '\n';
  }
  json per = json::array();
  std::vector<double> means;
  for (std::size_t i = 0; i < c.lipschitz.widths.size(); ++i) {
    std::vector<double> v;
    for (const auto& rr : rows) v.push_back(rr[i].lipschitz);
    json e = stats_json(v);
    e["width"] = c.lipschitz.widths[i];
    means.push_back(e["mean"].get<double>());
    per.push_back(e);
  }
  summary["lipschitz"] = per;
  json ratios = json::array();
  for (std::size_t i = 1; i < means.size(); ++i) ratios.push_back(means[i] / means[i - 1]);
  summary["consecutive_ratio_of_means"] = ratios;
  if (means.size() > 1) {
    summary["overall_ratio"] = means.back() / means.front();
    summary["sqrt_width_ratio"] =
        std::sqrt(static_cast<double>(c.lipschitz.widths.back()) / static_cast<double>(c.lipschitz.widths.front()));
  }
  art.write("plot.gp", plot_header("empirical Lipschitz constant of f_3") +
                           "set logscale xy\nset xlabel 'n3'\nset ylabel 'Lipschitz'\n"
                           "plot 'lipschitz.csv' using 1:3 skip 1 with points title 'replicas'\n");
}

// --- precond -------------------------------------------------------------

void run_precond(const ExperimentConfig& c, Artifacts& art, json& summary) {
  precond::VerificationConfig vc = c.precond;
  vc.seed = c.seed;
  const VerifySummary vs = verify_summary(precond::run_verification(vc));
  {
    auto os = art.open("properties.csv");
    os.precision(17);
    os << "property,checked,violations,worst_ratio\n";
    for (const auto& [name, t] : vs.report["properties"].items())
      os << name << ',' << t["checked"].get<std::size_t>() << ',' << t["violations"].get<std::size_t>() << ','
         << t["worst_ratio"].get<double>() << '\n';
  }
  summary["properties"] = vs.report["properties"];
  summary["asserted"] = vs.report["asserted"];
  summary["all_asserted_hold"] = vs.all_hold;
  art.write("plot.gp", plot_header("worst lhs/rhs ratio per property (<= 1 holds)") +
                           "set style fill solid 0.5\nset boxwidth 0.6\nset xtics rotate by -45\n"
                           "set logscale y\nunset key\n"
                           "plot 'properties.csv' using 0:4:xtic(1) skip 1 with boxes\n");
}

void remove_quietly(const fs::path& p) {
  std::error_code ec;
  fs::remove_all(p, ec);
}

bool replaceable(const fs::path& dir) {
  if (!fs::exists(dir)) return true;
  if (!fs::is_directory(dir)) return false;
  return fs::exists(dir / "manifest.json") || fs::exists(dir / "error.json");
}

}  // namespace

VerifySummary verify_summary(const precond::VerificationReport& rep) {
  const std::vector<std::pair<std::string, const precond::PropertyTally*>> all{
      {"u_bound", &rep.u_bound},
      {"van_der_sluis", &rep.van_der_sluis},
      {"van_der_sluis_sqrt_n", &rep.van_der_sluis_sqrt_n},
      {"reduction_identity", &rep.reduction_identity},
      {"reduction_at_most_one", &rep.reduction_at_most_one},
      {"pair_bound", &rep.pair_bound},
      {"pair_bound_in_matrix", &rep.pair_bound_in_matrix},
      {"global_bound", &rep.global_bound},
      {"global_bound_literal", &rep.global_bound_literal},
      {"equilibration_lowers_l", &rep.equilibration_lowers_l},
  };
  // The literal-cosine bound is known not to be a bound and the sqrt(n)
  // form is the corrected theorem; both are reported, neither asserted.
  const std::set<std::string> informational{"van_der_sluis_sqrt_n", "global_bound_literal"};
  VerifySummary s;
  s.all_hold = true;
  json props = json::object();
  json asserted = json::array();
  for (const auto& [name, t] : all) {
    props[name] = {{"checked", t->checked}, {"violations", t->violations}, {"worst_ratio", t->worst_ratio}};
    if (!informational.count(name)) {
      asserted.push_back(name);
      if (t->violations > 0) s.all_hold = false;
    }
  }
  s.report["properties"] = props;
  s.report["asserted"] = asserted;
  s.report["singular_skipped"] = rep.singular_skipped.checked;
  s.report["all_asserted_hold"] = s.all_hold;
  return s;
}

RunOutcome run_experiment(const ExperimentConfig& c, const fs::path& root) {
  RunOutcome out;
  const fs::path dir = fs::path(c.output).is_absolute() ? fs::path(c.output) : root / c.output;
  const fs::path staging = dir.parent_path() / ("." + dir.filename().string() + ".staging-" + std::to_string(::getpid()));

  try {
    if (dir.filename().empty()) throw config_error("'experiment.output' must name a directory");
    if (!replaceable(dir))
      throw Error(ErrorCode::IoError, "'" + dir.string() + "' exists and is not the output of an earlier run");
    std::error_code ec;
    fs::create_directories(dir.parent_path(), ec);
    remove_quietly(staging);
    if (!fs::create_directory(staging, ec) || ec)
      throw Error(ErrorCode::IoError, "cannot create '" + staging.string() + "'");
  } catch (const std::exception& e) {
    out.exit_code = exit_code_for(e);
    out.error = error_json(e, out.exit_code);
    return out;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    Artifacts art(staging);
    json summary;
    summary["status"] = "ok";
    summary["kind"] = std::string(to_string(c.kind));
    summary["problem"] = c.problem;
    summary["preset"] = c.preset;
    summary["replicas"] = c.replicas;
    switch (c.kind) {
      case ExperimentKind::Train: run_train(c, art, summary, false); break;
      case ExperimentKind::Landscape: run_train(c, art, summary, true); break;
      case ExperimentKind::NtkSweep: run_ntk(c, art, summary); break;
      case ExperimentKind::Lipschitz: run_lipschitz(c, art, summary); break;
      case ExperimentKind::PrecondVerify: run_precond(c, art, summary); break;
    }
    art.write("resolved.ini", config_to_text(c));
    summary["created_utc"] = utc_now();
    summary["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    art.write_json("summary.json", summary);

    std::vector<std::string> names = art.names();
    std::sort(names.begin(), names.end());
    json manifest;
    manifest["tool"] = "pinnlab";
    manifest["version"] = std::string(kVersion);
    manifest["artifacts"] = names;
    manifest["config"] = config_to_json(c);
    art.write_json("manifest.json", manifest);
    names.push_back("manifest.json");
    std::sort(names.begin(), names.end());

    if (!replaceable(dir)) throw Error(ErrorCode::IoError, "'" + dir.string() + "' appeared during the run");
    remove_quietly(dir);
    fs::rename(staging, dir);
    out.directory = dir;
    out.artifacts = names;
    return out;
  } catch (const std::exception& e) {
    remove_quietly(staging);
    out.exit_code = exit_code_for(e);
    out.error = error_json(e, out.exit_code);
    if (out.exit_code == kExitNumeric) {
      // Leave the reason behind in place of the artifacts.
      try {
        remove_quietly(dir);
        fs::create_directories(dir);
        std::ofstream(dir / "error.json", std::ios::binary) << out.error.dump(2) << '\n';
        out.directory = dir;
        out.artifacts = {"error.json"};
      } catch (...) {
      }
    }
    return out;
  }
}

RunOutcome run_config_file(const fs::path& path, const fs::path& root, std::ostream& err) {
  RunOutcome out;
  try {
    const ExperimentConfig c = resolve_config(read_config_file(path));
    out = run_experiment(c, root);
  } catch (const std::exception& e) {
    out.exit_code = exit_code_for(e);
    out.error = error_json(e, out.exit_code);
  }
  if (out.exit_code != kExitOk) err << out.error.dump() << '\n';
  return out;
}

}  // namespace pinn::cli
