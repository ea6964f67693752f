#include "texton/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace texton {

namespace {

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer '" + v + "' for " + key);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::uint64_t out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad unsigned integer '" + v + "' for " + key);
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number '" + v + "' for " + key);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: bad boolean '" + v + "' for " + key);
}

std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
    while (!tok.empty() && tok.back() == ' ') tok.pop_back();
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<Index> parse_index_list(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  for (const auto& tok : split_csv(v)) out.push_back(parse_int(key, tok));
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

std::array<float, 3> parse_float3(const std::string& key, const std::string& v) {
  const auto toks = split_csv(v);
  if (toks.size() != 3)
    throw ConfigError("config: " + key + " needs exactly 3 comma-separated values");
  return {static_cast<float>(parse_double(key, toks[0])),
          static_cast<float>(parse_double(key, toks[1])),
          static_cast<float>(parse_double(key, toks[2]))};
}

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_float3(const std::array<float, 3>& a) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g", static_cast<double>(a[0]),
                static_cast<double>(a[1]), static_cast<double>(a[2]));
  return buf;
}

std::string fmt_index_list(const std::vector<Index>& v) {
  std::string out;
  for (Index x : v) {
    if (!out.empty()) out += ',';
    out += std::to_string(x);
  }
  return out;
}

const char* fmt_bool(bool b) { return b ? "true" : "false"; }

}  // namespace

RunConfig RunConfig::defaults(const std::string& scale) {
  RunConfig c;
  c.scale = scale;
  if (scale == "paper") {
    // Full-size model: 512-channel block from 224 inputs, texture layers at
    // their published widths, and the FMD-style training protocol.
    c.model.backbone = BackboneConfig::paper_scale();
    c.model.histogram = HistogramConfig{};  // 4 bins x 32 reduced = 128
    c.model.encoding = EncodingConfig{};    // 8 codewords -> 128
    c.model.fractal = FractalConfig{};      // 16 bins
    c.model.gap = GapConfig{};              // 48
    c.augment.resize_short = 256;
    c.augment.crop = 224;
    c.train.epochs = 30;
    c.train.batch_size = 16;
    c.train.lr = 1e-3;
    c.train.scheduler = SchedulerKind::cosine_warm_restarts;
    c.train.t0_epochs = 10;
    c.train.t_mult = 2;
    c.n_splits = 10;
  } else if (scale == "desk") {
    // Shrunk everything: 64-channel block from 64-pixel crops, narrow
    // texture layers, short cosine schedule, 2 splits. A full 15-cell grid
    // finishes on one core inside the hour.
    c.model.backbone = BackboneConfig::desk_scale();
    c.model.histogram.reduced_channels = 8;
    c.model.histogram.n_bins = 4;
    c.model.encoding.n_codewords = 8;
    c.model.encoding.output_dim = 32;
    c.model.gap.output_dim = 16;
    c.augment.resize_short = 72;
    c.augment.crop = 64;
    c.train.epochs = 15;
    c.train.batch_size = 16;
    c.train.lr = 1e-2;
    c.train.scheduler = SchedulerKind::cosine;
    c.train.t0_epochs = 5;
    c.n_splits = 2;
  } else {
    throw ConfigError("config: unknown scale '" + scale +
                      "' (expected 'paper' or 'desk')");
  }
  return c;
}

void RunConfig::apply_protocol(const std::string& name) {
  auto apply = [&](int epochs, int batch, double lr, SchedulerKind sched,
                   bool five_crop) {
    train.epochs = epochs;
    train.batch_size = batch;
    train.lr = lr;
    train.scheduler = sched;
    augment.five_crop_train = five_crop;
    augment.five_crop_eval = five_crop;
  };
  if (name == "fmd")
    apply(30, 16, 1e-3, SchedulerKind::cosine_warm_restarts, false);
  else if (name == "dtd")
    apply(30, 64, 1e-2, SchedulerKind::cosine, true);
  else if (name == "kth")
    apply(30, 32, 5e-3, SchedulerKind::cosine, false);
  else if (name == "minc")
    apply(20, 64, 5e-3, SchedulerKind::cosine_warm_restarts, false);
  else if (name == "gtos")
    apply(20, 64, 5e-3, SchedulerKind::cosine, true);
  else if (name == "gtosm")
    apply(20, 128, 5e-2, SchedulerKind::cosine_warm_restarts, false);
  else
    throw ConfigError("config: unknown protocol '" + name +
                      "' (expected fmd, dtd, kth, minc, gtos or gtosm)");
  protocol = name;
}

void RunConfig::set(const std::string& key, const std::string& v) {
  if (key == "run.scale") {
    if (v != scale)
      throw ConfigError(
          "config: run.scale differs from the active scale bundle; pass "
          "--scale or put run.scale before other keys");
  } else if (key == "run.protocol") {
    apply_protocol(v);
  } else if (key == "run.seed") {
    seed = parse_u64(key, v);
  } else if (key == "run.workers") {
    workers = parse_int(key, v);
  } else if (key == "data.root") {
    dataset_root = v;
  } else if (key == "data.n_splits") {
    n_splits = parse_int(key, v);
  } else if (key == "data.train_fraction") {
    train_fraction = parse_double(key, v);
  } else if (key == "data.norm") {
    if (v != "auto" && v != "fixed")
      throw ConfigError("config: data.norm must be 'auto' or 'fixed'");
    norm = v;
  } else if (key == "data.norm_mean") {
    augment.mean = parse_float3(key, v);
  } else if (key == "data.norm_std") {
    augment.stdev = parse_float3(key, v);
  } else if (key == "data.resize_short") {
    augment.resize_short = parse_int(key, v);
  } else if (key == "data.crop") {
    augment.crop = parse_int(key, v);
  } else if (key == "data.flip_prob") {
    augment.flip_prob = parse_double(key, v);
  } else if (key == "data.five_crop_train") {
    augment.five_crop_train = parse_bool(key, v);
  } else if (key == "data.five_crop_eval") {
    augment.five_crop_eval = parse_bool(key, v);
  } else if (key == "backbone.channels") {
    model.backbone.stage_channels = parse_index_list(key, v);
  } else if (key == "backbone.blocks") {
    model.backbone.blocks_per_stage = parse_int(key, v);
  } else if (key == "backbone.input") {
    model.backbone.input_resolution = parse_int(key, v);
  } else if (key == "backbone.stem_pool") {
    model.backbone.stem_pool = parse_bool(key, v);
  } else if (key == "histogram.bins") {
    model.histogram.n_bins = parse_int(key, v);
  } else if (key == "histogram.reduced") {
    model.histogram.reduced_channels = parse_int(key, v);
  } else if (key == "histogram.groups") {
    model.histogram.groups = parse_int(key, v);
  } else if (key == "histogram.normalize") {
    model.histogram.normalize_bins = parse_bool(key, v);
  } else if (key == "encoding.codewords") {
    model.encoding.n_codewords = parse_int(key, v);
  } else if (key == "encoding.output") {
    model.encoding.output_dim = parse_int(key, v);
  } else if (key == "fap.bins") {
    model.fractal.n_bins = parse_int(key, v);
  } else if (key == "fap.scales") {
    model.fractal.scales = parse_index_list(key, v);
  } else if (key == "gap.output") {
    model.gap.output_dim = parse_int(key, v);
  } else if (key == "ensemble.methods") {
    model.methods = MethodSelection::parse(v);
  } else if (key == "ensemble.aggregator") {
    model.aggregator = parse_aggregator(v);
  } else if (key == "train.epochs") {
    train.epochs = parse_int(key, v);
  } else if (key == "train.batch") {
    train.batch_size = parse_int(key, v);
  } else if (key == "train.lr") {
    train.lr = parse_double(key, v);
  } else if (key == "train.lr_min") {
    train.lr_min = parse_double(key, v);
  } else if (key == "train.momentum") {
    train.momentum = parse_double(key, v);
  } else if (key == "train.weight_decay") {
    train.weight_decay = parse_double(key, v);
  } else if (key == "train.scheduler") {
    train.scheduler = parse_scheduler(v);
  } else if (key == "train.t0_epochs") {
    train.t0_epochs = parse_int(key, v);
  } else if (key == "train.t_mult") {
    train.t_mult = parse_int(key, v);
  } else if (key == "train.finetune_backbone") {
    train.finetune_backbone = parse_bool(key, v);
  } else if (key == "rf.trees") {
    rf.n_trees = parse_int(key, v);
  } else if (key == "rf.seeds") {
    rf.n_seeds = parse_int(key, v);
  } else if (key == "rf.seed_base") {
    rf.seed_base = parse_u64(key, v);
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "run.scale = " << scale << '\n';
  if (!protocol.empty()) os << "run.protocol = " << protocol << '\n';
  os << "run.seed = " << seed << '\n';
  os << "run.workers = " << workers << '\n';
  os << "data.root = " << dataset_root << '\n';
  os << "data.n_splits = " << n_splits << '\n';
  os << "data.train_fraction = " << fmt_double(train_fraction) << '\n';
  os << "data.norm = " << norm << '\n';
  os << "data.norm_mean = " << fmt_float3(augment.mean) << '\n';
  os << "data.norm_std = " << fmt_float3(augment.stdev) << '\n';
  os << "data.resize_short = " << augment.resize_short << '\n';
  os << "data.crop = " << augment.crop << '\n';
  os << "data.flip_prob = " << fmt_double(augment.flip_prob) << '\n';
  os << "data.five_crop_train = " << fmt_bool(augment.five_crop_train) << '\n';
  os << "data.five_crop_eval = " << fmt_bool(augment.five_crop_eval) << '\n';
  os << "backbone.channels = " << fmt_index_list(model.backbone.stage_channels)
     << '\n';
  os << "backbone.blocks = " << model.backbone.blocks_per_stage << '\n';
  os << "backbone.input = " << model.backbone.input_resolution << '\n';
  os << "backbone.stem_pool = " << fmt_bool(model.backbone.stem_pool) << '\n';
  os << "histogram.bins = " << model.histogram.n_bins << '\n';
  os << "histogram.reduced = " << model.histogram.reduced_channels << '\n';
  os << "histogram.groups = " << model.histogram.groups << '\n';
  os << "histogram.normalize = " << fmt_bool(model.histogram.normalize_bins)
     << '\n';
  os << "encoding.codewords = " << model.encoding.n_codewords << '\n';
  os << "encoding.output = " << model.encoding.output_dim << '\n';
  os << "fap.bins = " << model.fractal.n_bins << '\n';
  os << "fap.scales = " << fmt_index_list(model.fractal.scales) << '\n';
  os << "gap.output = " << model.gap.output_dim << '\n';
  os << "ensemble.methods = " << model.methods.to_string() << '\n';
  os << "ensemble.aggregator = " << aggregator_name(model.aggregator) << '\n';
  os << "train.epochs = " << train.epochs << '\n';
  os << "train.batch = " << train.batch_size << '\n';
  os << "train.lr = " << fmt_double(train.lr) << '\n';
  os << "train.lr_min = " << fmt_double(train.lr_min) << '\n';
  os << "train.momentum = " << fmt_double(train.momentum) << '\n';
  os << "train.weight_decay = " << fmt_double(train.weight_decay) << '\n';
  os << "train.scheduler = " << scheduler_name(train.scheduler) << '\n';
  os << "train.t0_epochs = " << train.t0_epochs << '\n';
  os << "train.t_mult = " << train.t_mult << '\n';
  os << "train.finetune_backbone = " << fmt_bool(train.finetune_backbone) << '\n';
  os << "rf.trees = " << rf.n_trees << '\n';
  os << "rf.seeds = " << rf.n_seeds << '\n';
  os << "rf.seed_base = " << rf.seed_base << '\n';
  return os.str();
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (n_splits < 1) throw ConfigError("config: data.n_splits must be >= 1");
  if (!(train_fraction > 0 && train_fraction < 1))
    throw ConfigError("config: data.train_fraction must lie in (0,1)");
  if (workers < 1) throw ConfigError("config: run.workers must be >= 1");
  if (augment.crop < 1 || augment.resize_short < augment.crop)
    throw ConfigError("config: data.crop must be positive and no larger than "
                      "data.resize_short");
  if (!(augment.flip_prob >= 0 && augment.flip_prob <= 1))
    throw ConfigError("config: data.flip_prob must lie in [0,1]");
  if (augment.crop != model.backbone.input_resolution)
    throw ConfigError("config: data.crop (" + std::to_string(augment.crop) +
                      ") must equal backbone.input (" +
                      std::to_string(model.backbone.input_resolution) + ")");
  if (rf.n_trees < 1 || rf.n_seeds < 1)
    throw ConfigError("config: rf.trees and rf.seeds must be >= 1");
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("config: cannot open " + file.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + file.string() + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

std::string peek_scale(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("config: cannot open " + file.string());
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key, eq, value;
    if (ls >> key >> eq >> value && key == "run.scale" && eq == "=") return value;
  }
  return {};
}

std::string run_id_for(const RunConfig& cfg, const std::string& kind) {
  const std::string payload = kind + "\n" + cfg.to_text();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%016llx", kind.c_str(),
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace texton
