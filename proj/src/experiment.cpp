// Copyright 2026 The startup-fsl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "startup/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "startup/analysis.hpp"
#include "startup/error.hpp"

namespace startup {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- methods

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names{
      "transfer", "simclr_only", "transfer_plus_simclr", "startup",
      "startup_no_ss", "startup_t", "startup_rand", "finetune"};
  return names;
}

MethodSpec method_spec(const std::string& name) {
  using IS = InitStrategy;
  MethodSpec m;
  m.name = name;
  if (name == "transfer") {
    m.trains_student = false;
  } else if (name == "simclr_only") {
    m.weights = {0.0, 0.0, 1.0};
    m.init = IS::kRandom;
  } else if (name == "transfer_plus_simclr") {
    m.weights = {0.0, 0.0, 1.0};
  } else if (name == "startup") {
    m.weights = {1.0, 1.0, 1.0};
  } else if (name == "startup_no_ss") {
    m.weights = {1.0, 1.0, 0.0};
  } else if (name == "startup_t") {
    m.weights = {1.0, 1.0, 1.0};
    m.init = IS::kFullTeacher;
  } else if (name == "startup_rand") {
    m.weights = {1.0, 1.0, 0.0};
    m.init = IS::kRandom;
  } else if (name == "finetune") {
    m.weights = {0.0, 1.0, 1.0};
  } else {
    throw ConfigError("unknown method '" + name + "'");
  }
  return m;
}

// ----------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  auto check_spec = [&](const DomainSource& d, const std::string& where) {
    if (d.path) return;
    try {
      d.spec.validate();
    } catch (const Error& e) {
      problems.push_back(where + ": " + e.what());
    }
  };
  check_spec(base, "base");
  check(!targets.empty(), "at least one target is required");
  std::set<std::string> names;
  for (const DomainSource& t : targets) {
    check(names.insert(t.name).second, "target '" + t.name + "' declared twice");
    check_spec(t, "target." + t.name);
    if (!t.path && !base.path) {
      check(t.spec.input_dim == base.spec.input_dim, "target." + t.name + ": dim differs from base");
    }
  }
  check(std::any_of(targets.begin(), targets.end(), [](const DomainSource& t) { return t.evaluate; }),
        "no target is marked for evaluation");
  check(unlabeled_fraction > 0.0 && unlabeled_fraction < 1.0, "unlabeled.fraction must be in (0,1)");
  check(!methods.empty(), "methods must be nonempty");
  for (const std::string& m : methods) {
    const auto& known = known_methods();
    check(std::find(known.begin(), known.end(), m) != known.end(), "unknown method '" + m + "'");
  }
  try {
    train.validate();
  } catch (const Error& e) {
    problems.push_back(std::string("train: ") + e.what());
  }
  check(way >= 2, "eval.way must be >= 2");
  check(!shots.empty(), "eval.shots must be nonempty");
  for (int k : shots) check(k >= 1, "eval.shots values must be >= 1");
  check(query_per_class >= 1, "eval.query must be >= 1");
  check(episodes >= 1, "eval.episodes must be >= 1");
  check(probe_ok(), "eval probe settings must be non-negative with epochs >= 0");
  for (const MismatchPair& p : mismatch) {
    check(names.count(p.target) == 1, "mismatch: unknown target '" + p.target + "'");
    check(names.count(p.unlabeled_source) == 1,
          "mismatch: unknown unlabeled source '" + p.unlabeled_source + "'");
  }
  for (double f : sweep_fractions) check(f > 0.0 && f < 1.0, "sweep.fractions must be in (0,1)");
  if (!sweep_fractions.empty()) {
    check(sweep_target.empty() || names.count(sweep_target) == 1,
          "sweep.target: unknown target '" + sweep_target + "'");
    const auto& known = known_methods();
    check(std::find(known.begin(), known.end(), sweep_method) != known.end(),
          "sweep.method: unknown method '" + sweep_method + "'");
  }
  check(!output_dir.empty(), "output.dir must be specified");
  check(threads >= 1, "threads must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid experiment config:";
    for (const std::string& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

bool ExperimentConfig::probe_ok() const {
  return probe.epochs >= 0 && probe.learning_rate >= 0.0 && probe.momentum >= 0.0 &&
         probe.weight_decay >= 0.0;
}

const DomainSource& ExperimentConfig::target(const std::string& name) const {
  for (const DomainSource& t : targets) {
    if (t.name == name) return t;
  }
  throw ConfigError("unknown target '" + name + "'");
}

namespace {

std::uint64_t stream_id(std::string_view label) { return Fingerprint().str(label).value(); }

}  // namespace

std::uint64_t ExperimentConfig::episode_base_seed() const {
  return eval_seed ? *eval_seed : derive_seed(seed, stream_id("episodes"));
}

std::uint64_t ExperimentConfig::fingerprint() const { return Fingerprint().str(to_text(*this)).value(); }

namespace {

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("'" + s + "' is not a number");
  return v;
}

long long to_int(const std::string& s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("'" + s + "' is not an integer");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("'" + s + "' is not a non-negative integer");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("'" + s + "' is not a boolean");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& s, F convert) {
  std::vector<T> out;
  for (const std::string& item : split_list(s)) out.push_back(static_cast<T>(convert(item)));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += f(v[i]);
  }
  return out;
}

// Applies a domain key shared by base.* and target.<name>.*; false if unknown.
bool apply_domain_key(DomainSource& d, const std::string& key, const std::string& value,
                      const fs::path& base_dir) {
  DomainSpec& s = d.spec;
  if (key == "classes") {
    s.class_count = static_cast<int>(to_int(value));
  } else if (key == "per_class") {
    s.per_class_count = static_cast<int>(to_int(value));
  } else if (key == "scale") {
    s.mean_scale = to_double(value);
  } else if (key == "sigma") {
    s.noise_sigma = to_double(value);
  } else if (key == "alpha") {
    s.alpha = to_double(value);
  } else if (key == "alignment") {
    s.alignment = to_list<int>(value, to_int);
  } else if (key == "path") {
    fs::path p(value);
    d.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  } else {
    return false;
  }
  return true;
}

bool apply_train_key(TrainConfig& t, const std::string& key, const std::string& value) {
  if (key == "epochs") {
    t.epochs = static_cast<int>(to_int(value));
  } else if (key == "teacher_epochs") {
    t.teacher_epochs = static_cast<int>(to_int(value));
  } else if (key == "batch_size_base") {
    t.batch_size_base = static_cast<int>(to_int(value));
  } else if (key == "batch_size_unlabeled") {
    t.batch_size_unlabeled = static_cast<int>(to_int(value));
  } else if (key == "momentum") {
    t.momentum = to_double(value);
  } else if (key == "weight_decay") {
    t.weight_decay = to_double(value);
  } else if (key == "lr_candidates") {
    t.lr_candidates = to_list<double>(value, to_double);
  } else if (key == "min_probe_updates") {
    t.min_probe_updates = static_cast<int>(to_int(value));
  } else if (key == "lr_decay_factor") {
    t.lr_decay_factor = to_double(value);
  } else if (key == "lr_patience_epochs") {
    t.lr_patience_epochs = static_cast<int>(to_int(value));
  } else if (key == "val_fraction_unlabeled") {
    t.val_fraction_unlabeled = to_double(value);
  } else if (key == "val_fraction_base") {
    t.val_fraction_base = to_double(value);
  } else if (key == "nt_xent_temperature") {
    t.nt_xent_temperature = to_double(value);
  } else if (key == "soft_label_temperature") {
    t.soft_label_temperature = to_double(value);
  } else if (key == "hidden_dims") {
    t.arch.hidden_dims = to_list<Index>(value, to_int);
  } else if (key == "embed_dim") {
    t.arch.embed_dim = static_cast<Index>(to_int(value));
  } else if (key == "proj_hidden_dim") {
    t.arch.proj_hidden_dim = static_cast<Index>(to_int(value));
  } else if (key == "proj_dim") {
    t.arch.proj_dim = static_cast<Index>(to_int(value));
  } else if (key == "augment.noise_sigma") {
    t.augment.noise_sigma = to_double(value);
  } else if (key == "augment.dropout_prob") {
    t.augment.dropout_prob = to_double(value);
  } else if (key == "augment.jitter_lo") {
    t.augment.jitter_lo = to_double(value);
  } else if (key == "augment.jitter_hi") {
    t.augment.jitter_hi = to_double(value);
  } else {
    return false;
  }
  return true;
}

struct Entry {
  std::string key;
  std::string value;
  std::size_t line;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir,
                              const std::optional<std::string>& profile) {
  std::vector<Entry> entries;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) {
      problems.push_back("line " + std::to_string(line_no) + ": empty key");
      continue;
    }
    if (!seen.insert(e.key).second) {
      problems.push_back("line " + std::to_string(line_no) + ": duplicate key '" + e.key + "'");
      continue;
    }
    entries.push_back(std::move(e));
  }

  ExperimentConfig c;
  c.base.name = "base";
  c.base.spec.class_count = 20;
  c.base.spec.tag = "base";
  for (const Entry& e : entries) {
    if (e.key == "profile") c.profile = e.value;
  }
  if (profile) c.profile = *profile;
  try {
    c.train = TrainConfig::profile(c.profile);
  } catch (const Error& err) {
    problems.push_back(err.what());
  }

  // Target sections are created in order of first appearance.
  auto target_for = [&](const std::string& name) -> DomainSource& {
    for (DomainSource& t : c.targets) {
      if (t.name == name) return t;
    }
    DomainSource t;
    t.name = name;
    t.spec.tag = name;
    t.spec.alpha = 0.9;
    c.targets.push_back(std::move(t));
    return c.targets.back();
  };

  std::vector<std::pair<std::string, std::string>> target_keys;
  for (const Entry& e : entries) {
    const std::string& k = e.key;
    const std::string& v = e.value;
    try {
      bool ok = true;
      if (k == "profile") {
      } else if (k == "seed") {
        c.seed = to_u64(v);
      } else if (k == "threads") {
        c.threads = static_cast<int>(to_int(v));
      } else if (k == "methods") {
        c.methods = split_list(v);
      } else if (k == "unlabeled.fraction") {
        c.unlabeled_fraction = to_double(v);
      } else if (k.rfind("base.", 0) == 0) {
        std::string sub = k.substr(5);
        if (sub == "dim") {
          c.base.spec.input_dim = static_cast<Index>(to_int(v));
        } else if (sub == "basis_count") {
          c.base.spec.basis_count = static_cast<int>(to_int(v));
        } else if (sub == "basis_seed") {
          c.base.spec.basis_seed = to_u64(v);
        } else {
          ok = apply_domain_key(c.base, sub, v, base_dir);
        }
      } else if (k.rfind("target.", 0) == 0) {
        std::string rest = k.substr(7);
        std::size_t dot = rest.find('.');
        if (dot == std::string::npos || dot == 0) {
          ok = false;
        } else {
          DomainSource& t = target_for(rest.substr(0, dot));
          std::string sub = rest.substr(dot + 1);
          if (sub == "evaluate") {
            t.evaluate = to_bool(v);
          } else {
            ok = apply_domain_key(t, sub, v, base_dir);
          }
        }
      } else if (k.rfind("train.", 0) == 0) {
        ok = apply_train_key(c.train, k.substr(6), v);
      } else if (k == "eval.way") {
        c.way = static_cast<int>(to_int(v));
      } else if (k == "eval.shots") {
        c.shots = to_list<int>(v, to_int);
      } else if (k == "eval.query") {
        c.query_per_class = static_cast<int>(to_int(v));
      } else if (k == "eval.episodes") {
        c.episodes = static_cast<int>(to_int(v));
      } else if (k == "eval.seed") {
        c.eval_seed = to_u64(v);
      } else if (k == "eval.probe_epochs") {
        c.probe.epochs = static_cast<int>(to_int(v));
      } else if (k == "eval.probe_lr") {
        c.probe.learning_rate = to_double(v);
      } else if (k == "eval.probe_momentum") {
        c.probe.momentum = to_double(v);
      } else if (k == "eval.probe_weight_decay") {
        c.probe.weight_decay = to_double(v);
      } else if (k == "mismatch.pairs") {
        for (const std::string& item : split_list(v)) {
          std::size_t arrow = item.find("<-");
          if (arrow == std::string::npos) throw ConfigError("expected 'target <- source', got '" + item + "'");
          c.mismatch.push_back({trim(item.substr(0, arrow)), trim(item.substr(arrow + 2))});
        }
      } else if (k == "sweep.fractions") {
        c.sweep_fractions = to_list<double>(v, to_double);
      } else if (k == "sweep.target") {
        c.sweep_target = v;
      } else if (k == "sweep.method") {
        c.sweep_method = v;
      } else if (k == "output.dir") {
        fs::path p(v);
        c.output_dir = p;
      } else if (k == "output.save_datasets") {
        c.save_datasets = to_bool(v);
      } else {
        ok = false;
      }
      if (!ok) problems.push_back("line " + std::to_string(e.line) + ": unknown key '" + k + "'");
    } catch (const ConfigError& err) {
      problems.push_back("line " + std::to_string(e.line) + ": " + k + ": " + err.what());
    }
  }

  // Targets live in the base domain's space.
  for (DomainSource& t : c.targets) {
    t.spec.input_dim = c.base.spec.input_dim;
    t.spec.basis_count = c.base.spec.basis_count;
    t.spec.basis_seed = c.base.spec.basis_seed;
  }
  if (!problems.empty()) {
    std::string msg = "invalid experiment config:";
    for (const std::string& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path, const std::optional<std::string>& profile) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path(), profile);
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  auto domain = [&](const std::string& prefix, const DomainSource& d) {
    if (d.path) {
      o << prefix << "path = " << d.path->string() << "\n";
      return;
    }
    o << prefix << "classes = " << d.spec.class_count << "\n";
    o << prefix << "per_class = " << d.spec.per_class_count << "\n";
    o << prefix << "scale = " << fmt(d.spec.mean_scale) << "\n";
    o << prefix << "sigma = " << fmt(d.spec.noise_sigma) << "\n";
    o << prefix << "alpha = " << fmt(d.spec.alpha) << "\n";
    if (!d.spec.alignment.empty()) {
      o << prefix << "alignment = " << join(d.spec.alignment, [](int a) { return std::to_string(a); })
        << "\n";
    }
  };
  const TrainConfig& t = c.train;
  o << "seed = " << c.seed << "\n";
  o << "profile = " << c.profile << "\n";
  o << "threads = " << c.threads << "\n";
  o << "base.dim = " << c.base.spec.input_dim << "\n";
  o << "base.basis_count = " << c.base.spec.basis_count << "\n";
  o << "base.basis_seed = " << c.base.spec.basis_seed << "\n";
  domain("base.", c.base);
  for (const DomainSource& d : c.targets) {
    domain("target." + d.name + ".", d);
    o << "target." << d.name << ".evaluate = " << (d.evaluate ? "true" : "false") << "\n";
  }
  o << "unlabeled.fraction = " << fmt(c.unlabeled_fraction) << "\n";
  o << "methods = " << join(c.methods, [](const std::string& s) { return s; }) << "\n";
  o << "train.epochs = " << t.epochs << "\n";
  o << "train.teacher_epochs = " << t.teacher_epochs << "\n";
  o << "train.batch_size_base = " << t.batch_size_base << "\n";
  o << "train.batch_size_unlabeled = " << t.batch_size_unlabeled << "\n";
  o << "train.momentum = " << fmt(t.momentum) << "\n";
  o << "train.weight_decay = " << fmt(t.weight_decay) << "\n";
  o << "train.lr_candidates = " << join(t.lr_candidates, fmt) << "\n";
  o << "train.min_probe_updates = " << t.min_probe_updates << "\n";
  o << "train.lr_decay_factor = " << fmt(t.lr_decay_factor) << "\n";
  o << "train.lr_patience_epochs = " << t.lr_patience_epochs << "\n";
  o << "train.val_fraction_unlabeled = " << fmt(t.val_fraction_unlabeled) << "\n";
  o << "train.val_fraction_base = " << fmt(t.val_fraction_base) << "\n";
  o << "train.nt_xent_temperature = " << fmt(t.nt_xent_temperature) << "\n";
  o << "train.soft_label_temperature = " << fmt(t.soft_label_temperature) << "\n";
  o << "train.hidden_dims = " << join(t.arch.hidden_dims, [](Index v) { return std::to_string(v); })
    << "\n";
  o << "train.embed_dim = " << t.arch.embed_dim << "\n";
  o << "train.proj_hidden_dim = " << t.arch.proj_hidden_dim << "\n";
  o << "train.proj_dim = " << t.arch.proj_dim << "\n";
  o << "train.augment.noise_sigma = " << fmt(t.augment.noise_sigma) << "\n";
  o << "train.augment.dropout_prob = " << fmt(t.augment.dropout_prob) << "\n";
  o << "train.augment.jitter_lo = " << fmt(t.augment.jitter_lo) << "\n";
  o << "train.augment.jitter_hi = " << fmt(t.augment.jitter_hi) << "\n";
  o << "eval.way = " << c.way << "\n";
  o << "eval.shots = " << join(c.shots, [](int k) { return std::to_string(k); }) << "\n";
  o << "eval.query = " << c.query_per_class << "\n";
  o << "eval.episodes = " << c.episodes << "\n";
  o << "eval.seed = " << c.episode_base_seed() << "\n";
  o << "eval.probe_epochs = " << c.probe.epochs << "\n";
  o << "eval.probe_lr = " << fmt(c.probe.learning_rate) << "\n";
  o << "eval.probe_momentum = " << fmt(c.probe.momentum) << "\n";
  o << "eval.probe_weight_decay = " << fmt(c.probe.weight_decay) << "\n";
  if (!c.mismatch.empty()) {
    o << "mismatch.pairs = "
      << join(c.mismatch, [](const MismatchPair& p) { return p.target + " <- " + p.unlabeled_source; })
      << "\n";
  }
  if (!c.sweep_fractions.empty()) {
    o << "sweep.fractions = " << join(c.sweep_fractions, fmt) << "\n";
    if (!c.sweep_target.empty()) o << "sweep.target = " << c.sweep_target << "\n";
    o << "sweep.method = " << c.sweep_method << "\n";
  }
  o << "output.dir = " << c.output_dir.string() << "\n";
  o << "output.save_datasets = " << (c.save_datasets ? "true" : "false") << "\n";
  return o.str();
}

// ---------------------------------------------------------------- records

std::string format_record(const ResultRecord& r) {
  return r.method + "," + r.target + "," + r.unlabeled_source + "," + std::to_string(r.n_way) + "," +
         std::to_string(r.k_shot) + "," + std::to_string(r.episode_id) + "," + fmt(r.accuracy) + "," +
         std::to_string(r.seed);
}

ResultRecord parse_record(const std::string& line) {
  std::vector<std::string> f;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    f.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (f.size() != 8) {
    throw FormatError("result record needs 8 fields, got " + std::to_string(f.size()));
  }
  ResultRecord r;
  r.method = f[0];
  r.target = f[1];
  r.unlabeled_source = f[2];
  try {
    r.n_way = static_cast<int>(to_int(f[3]));
    r.k_shot = static_cast<int>(to_int(f[4]));
    r.episode_id = static_cast<int>(to_int(f[5]));
    r.accuracy = to_double(f[6]);
    r.seed = to_u64(f[7]);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("result record: ") + e.what());
  }
  if (r.method.empty() || r.target.empty()) throw FormatError("result record: empty method or target");
  if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0)) {
    throw FormatError("result record: accuracy " + f[6] + " outside [0,1]");
  }
  if (r.n_way < 1 || r.k_shot < 1 || r.episode_id < 0) {
    throw FormatError("result record: invalid way/shot/episode");
  }
  return r;
}

std::vector<ResultRecord> read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open results file '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || trim(line) != kResultsHeader) {
    throw ParseError("results header must be '" + std::string(kResultsHeader) + "'", line_no);
  }
  std::vector<ResultRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const FormatError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

// ------------------------------------------------------------------- data

namespace {

Dataset load_or_generate(const DomainSource& d, std::uint64_t seed, std::optional<Index> dim) {
  Dataset data;
  if (d.path) {
    data = load_dataset(*d.path, true);
    data.domain_tag = d.name;
  } else {
    data = generate_domain(d.spec, seed);
  }
  if (dim && data.dim() != *dim) {
    throw DimensionError("domain '" + d.name + "' has width " + std::to_string(data.dim()) +
                         ", base has " + std::to_string(*dim));
  }
  return data;
}

std::string file_safe(std::string s) {
  for (char& ch : s) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  }
  return s;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData p;
  p.base = load_or_generate(config.base, derive_seed(config.seed, stream_id("data:base")), std::nullopt);
  for (const DomainSource& t : config.targets) {
    Dataset d = load_or_generate(t, derive_seed(config.seed, stream_id("data:" + t.name)), p.base.dim());
    p.splits.emplace(t.name, split_unlabeled(d, config.unlabeled_fraction,
                                             derive_seed(config.seed, stream_id("split:" + t.name))));
    p.full.emplace(t.name, std::move(d));
  }
  return p;
}

TrainConfig teacher_config(const ExperimentConfig& config) {
  TrainConfig t = config.train;
  t.seed = derive_seed(config.seed, stream_id("teacher"));
  return t;
}

TrainConfig student_config(const ExperimentConfig& config, const MethodSpec& method) {
  TrainConfig t = config.train;
  t.term_weights = method.weights;
  t.init_strategy = method.init;
  t.seed = derive_seed(config.seed, stream_id("student"));
  return t;
}

Protocol protocol_for(const ExperimentConfig& config, int shot) {
  Protocol p;
  p.way = config.way;
  p.shot = shot;
  p.query_per_class = config.query_per_class;
  p.n_episodes = config.episodes;
  p.base_seed = config.episode_base_seed();
  p.probe = config.probe;
  return p;
}

SweepSplit sweep_split(const Dataset& target, std::span<const double> fractions, std::uint64_t seed) {
  if (fractions.empty()) throw ConfigError("sweep: no fractions");
  std::vector<double> sorted(fractions.begin(), fractions.end());
  std::sort(sorted.begin(), sorted.end());
  UnlabeledSplit top = split_unlabeled(target, sorted.back(), seed);

  const std::vector<int>& truth = target.truth();
  std::vector<int> class_sizes(static_cast<std::size_t>(target.class_count), 0);
  for (int l : truth) ++class_sizes[static_cast<std::size_t>(l)];

  // One shuffled order per class over the largest unlabeled set; every
  // fraction takes a prefix, so smaller sets are nested in larger ones.
  const std::vector<int>& top_truth = top.unlabeled.reference_labels;
  std::vector<std::vector<std::size_t>> by_class(class_sizes.size());
  for (std::size_t i = 0; i < top_truth.size(); ++i) {
    by_class[static_cast<std::size_t>(top_truth[i])].push_back(i);
  }
  Rng rng(derive_seed(seed, 0x5EEDULL));
  for (auto& rows : by_class) std::shuffle(rows.begin(), rows.end(), rng);

  SweepSplit out;
  out.eval_pool = std::move(top.eval_pool);
  for (double f : sorted) {
    std::vector<std::size_t> rows;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto take = static_cast<std::size_t>(std::llround(f * class_sizes[c]));
      take = std::min(take, by_class[c].size());
      rows.insert(rows.end(), by_class[c].begin(), by_class[c].begin() + static_cast<long>(take));
    }
    if (rows.empty()) throw ConfigError("sweep: fraction " + fmt(f) + " selects no examples");
    std::sort(rows.begin(), rows.end());
    out.unlabeled.emplace_back(f, subset(top.unlabeled, rows));
  }
  return out;
}

// -------------------------------------------------------------------- run

namespace {

struct EpisodeRow {
  std::string method;
  std::string target;
  std::string source;
  int k_shot;
  int episode_id;
  std::uint64_t hash;
};

class Runner {
 public:
  explicit Runner(const ExperimentConfig& config) : config_(config), out_(config.output_dir) {}

  RunOutcome run() {
    config_.validate();
    fs::create_directories(out_ / "logs");
    write_text(out_ / "config.resolved", to_text(config_));

    PreparedData data = prepare_data(config_);
    if (config_.save_datasets) {
      fs::create_directories(out_ / "data");
      save_dataset(data.base, out_ / "data" / "base.csv");
      for (const auto& [name, d] : data.full) save_dataset(d, out_ / "data" / (file_safe(name) + ".csv"));
    }

    TrainingRun teacher = train_teacher(data.base, teacher_config(config_));
    save_bundle(teacher.bundle, out_ / "teacher.bundle");
    write_training_log(teacher.log, out_ / "logs" / "teacher.csv");

    write_ami(teacher.bundle, data);

    for (const DomainSource& t : config_.targets) {
      if (!t.evaluate) continue;
      const UnlabeledSplit& split = data.splits.at(t.name);
      std::optional<SoftLabeledSet> soft;
      for (const std::string& name : config_.methods) {
        cell(name + "/" + t.name, [&] {
          MethodSpec m = method_spec(name);
          if (!m.trains_student) {
            evaluate(name, t.name, t.name, teacher.bundle, split.eval_pool);
            return;
          }
          if (!soft) soft = pseudo_label(teacher.bundle, split.unlabeled, config_.train.soft_label_temperature);
          ModelBundle student = train(m, data.base, *soft, split.unlabeled, teacher.bundle, t.name, t.name);
          evaluate(name, t.name, t.name, student, split.eval_pool);
        });
      }
    }

    for (const MismatchPair& p : config_.mismatch) {
      cell("startup/" + p.target + "<-" + p.unlabeled_source, [&] {
        const Dataset& unlabeled = data.splits.at(p.unlabeled_source).unlabeled;
        SoftLabeledSet soft = pseudo_label(teacher.bundle, unlabeled, config_.train.soft_label_temperature);
        MethodSpec m = method_spec("startup");
        ModelBundle student = train(m, data.base, soft, unlabeled, teacher.bundle, p.target, p.unlabeled_source);
        evaluate(m.name, p.target, p.unlabeled_source, student, data.splits.at(p.target).eval_pool);
      });
    }

    if (!config_.sweep_fractions.empty()) run_sweep(data, teacher.bundle);

    write_results();
    if (!failures_.empty()) {
      std::ofstream f(out_ / "failures.csv");
      f << "cell,error\n";
      for (const auto& [where, what] : failures_) f << where << ",\"" << what << "\"\n";
    }
    RunOutcome outcome;
    outcome.output_dir = out_;
    outcome.cells_completed = completed_;
    for (const auto& [where, what] : failures_) outcome.failures.push_back(where + ": " + what);
    if (!records_.empty()) emit_report(out_);
    return outcome;
  }

 private:
  void cell(const std::string& where, const std::function<void()>& body) {
    try {
      body();
      ++completed_;
    } catch (const std::exception& e) {
      failures_.emplace_back(where, e.what());
    }
  }

  ModelBundle train(const MethodSpec& m, const Dataset& base, const SoftLabeledSet& soft,
                    const Dataset& unlabeled, const ModelBundle& teacher, const std::string& target,
                    const std::string& source) {
    TrainingRun run = train_student(base, soft, unlabeled, teacher, student_config(config_, m));
    std::string log_name = m.name + "__" + target + (source == target ? "" : "__from_" + source);
    write_training_log(run.log, out_ / "logs" / (file_safe(log_name) + ".csv"));
    return std::move(run.bundle);
  }

  void evaluate(const std::string& method, const std::string& target, const std::string& source,
                const ModelBundle& bundle, const Dataset& pool) {
    Matrix embeddings = embed(bundle, pool.features);
    for (int k : config_.shots) {
      Protocol protocol = protocol_for(config_, k);
      ResultSummary s = run_evaluation_on_embeddings(embeddings, pool, protocol, method, config_.threads);
      for (int i = 0; i < s.n_episodes; ++i) {
        records_.push_back({method, target, source, protocol.way, k, i,
                            s.per_episode_accuracy[static_cast<std::size_t>(i)], config_.seed});
        episodes_.push_back({method, target, source, k, i, s.episode_hashes[static_cast<std::size_t>(i)]});
      }
    }
  }

  void run_sweep(const PreparedData& data, const ModelBundle& teacher) {
    std::string name = config_.sweep_target;
    if (name.empty()) {
      for (const DomainSource& t : config_.targets) {
        if (t.evaluate) {
          name = t.name;
          break;
        }
      }
    }
    std::string pool_name = name + "/sweep";
    SweepSplit sweep;
    try {
      sweep = sweep_split(data.full.at(name), config_.sweep_fractions,
                          derive_seed(config_.seed, stream_id("sweep:" + name)));
    } catch (const std::exception& e) {
      failures_.emplace_back("sweep/" + name, e.what());
      return;
    }
    cell("transfer/" + pool_name, [&] { evaluate("transfer", pool_name, pool_name, teacher, sweep.eval_pool); });
    std::ofstream table(out_ / "sweep.csv");
    table << "method,target,fraction,unlabeled_count,k_shot,mean,ci_half_width\n";
    for (const auto& [fraction, unlabeled] : sweep.unlabeled) {
      std::string source = name + "@" + fmt(fraction);
      cell(config_.sweep_method + "/" + source, [&] {
        MethodSpec m = method_spec(config_.sweep_method);
        std::size_t before = records_.size();
        if (m.trains_student) {
          SoftLabeledSet soft = pseudo_label(teacher, unlabeled, config_.train.soft_label_temperature);
          ModelBundle student = train(m, data.base, soft, unlabeled, teacher, pool_name, source);
          evaluate(m.name, pool_name, source, student, sweep.eval_pool);
        } else {
          evaluate(m.name, pool_name, source, teacher, sweep.eval_pool);
        }
        for (int k : config_.shots) {
          std::vector<double> acc;
          for (std::size_t i = before; i < records_.size(); ++i) {
            if (records_[i].k_shot == k) acc.push_back(records_[i].accuracy);
          }
          double mean = 0.0, ci = 0.0;
          summarize(acc, mean, ci);
          table << m.name << ',' << name << ',' << fmt(fraction) << ',' << unlabeled.size() << ',' << k
                << ',' << fmt(mean) << ',' << fmt(ci) << '\n';
        }
      });
    }
  }

  void write_ami(const ModelBundle& teacher, const PreparedData& data) {
    std::ofstream f(out_ / "ami.csv");
    if (!f) throw IoError("cannot write '" + (out_ / "ami.csv").string() + "'");
    f << "target,n,ami,mutual_information,expected_mutual_information\n";
    for (const DomainSource& t : config_.targets) {
      cell("ami/" + t.name, [&] {
        const Dataset& d = data.full.at(t.name);
        Partition truth = make_partition(d.truth());
        truth.cluster_count = std::max(truth.cluster_count, d.class_count);
        ClusterAgreement a = cluster_agreement(induced_grouping(teacher, d), truth);
        f << t.name << ',' << d.size() << ',' << fmt(a.ami) << ',' << fmt(a.mutual_information) << ','
          << fmt(a.expected_mutual_information) << '\n';
      });
    }
  }

  void write_results() {
    std::ofstream f(out_ / "results.csv");
    if (!f) throw IoError("cannot write '" + (out_ / "results.csv").string() + "'");
    f << kResultsHeader << '\n';
    for (const ResultRecord& r : records_) f << format_record(r) << '\n';
    std::ofstream e(out_ / "episodes.csv");
    e << "method,target,unlabeled_source,k_shot,episode_id,episode_hash\n";
    char buf[32];
    for (const EpisodeRow& r : episodes_) {
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(r.hash));
      e << r.method << ',' << r.target << ',' << r.source << ',' << r.k_shot << ',' << r.episode_id << ','
        << buf << '\n';
    }
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << text;
  }

  const ExperimentConfig& config_;
  fs::path out_;
  std::vector<ResultRecord> records_;
  std::vector<EpisodeRow> episodes_;
  std::vector<std::pair<std::string, std::string>> failures_;
  int completed_ = 0;
};

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config) { return Runner(config).run(); }

// ----------------------------------------------------------------- report

const ReportTable* Report::find(const std::string& target, int k_shot) const {
  for (const ReportTable& t : tables) {
    if (t.target == target && t.k_shot == k_shot) return &t;
  }
  return nullptr;
}

const ReportRow* Report::row(const std::string& target, int k_shot, const std::string& label) const {
  const ReportTable* t = find(target, k_shot);
  if (!t) return nullptr;
  for (const ReportRow& r : t->rows) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

namespace {

double pair_p_value(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ReportError("cannot pair methods with different episode counts");
  if (a.size() < 2) return a == b ? 1.0 : 0.0;
  return paired_t_test(a, b).p_value;
}

}  // namespace

Report build_report(const std::vector<ResultRecord>& records) {
  if (records.empty()) throw ReportError("no result records to report");
  struct Group {
    std::string target;
    int way;
    int shot;
    std::vector<std::string> labels;
    std::map<std::string, std::map<int, double>> acc;  // label -> episode -> accuracy
  };
  std::vector<Group> groups;
  for (const ResultRecord& r : records) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.target == r.target && g.way == r.n_way && g.shot == r.k_shot;
    });
    if (it == groups.end()) {
      groups.push_back({r.target, r.n_way, r.k_shot, {}, {}});
      it = std::prev(groups.end());
    }
    std::string label = r.unlabeled_source == r.target || r.unlabeled_source.empty()
                            ? r.method
                            : r.method + "[" + r.unlabeled_source + "]";
    if (!it->acc.count(label)) it->labels.push_back(label);
    if (!it->acc[label].emplace(r.episode_id, r.accuracy).second) {
      throw ReportError("duplicate episode " + std::to_string(r.episode_id) + " for " + label + " on " +
                        r.target);
    }
  }

  Report report;
  for (const Group& g : groups) {
    ReportTable table;
    table.target = g.target;
    table.n_way = g.way;
    table.k_shot = g.shot;
    std::vector<std::vector<double>> series;
    for (const std::string& label : g.labels) {
      std::vector<double> v;
      for (const auto& [id, a] : g.acc.at(label)) v.push_back(a);
      ReportRow row;
      row.label = label;
      row.n_episodes = static_cast<int>(v.size());
      summarize(v, row.mean, row.ci_half_width);
      table.rows.push_back(row);
      series.push_back(std::move(v));
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
      if (table.rows[i].mean > table.rows[best].mean) best = i;
    }
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      for (std::size_t j = i + 1; j < table.rows.size(); ++j) {
        const std::string& a = table.rows[i].label;
        const std::string& b = table.rows[j].label;
        double p = pair_p_value(series[i], series[j]);
        table.p_values[a < b ? a + "|" + b : b + "|" + a] = p;
      }
    }
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      table.rows[i].bold = i == best || pair_p_value(series[i], series[best]) >= 0.05;
    }
    report.tables.push_back(std::move(table));
  }
  return report;
}

std::string format_report(const Report& report) {
  std::ostringstream o;
  for (const ReportTable& t : report.tables) {
    std::size_t width = 6;
    for (const ReportRow& r : t.rows) width = std::max(width, r.label.size());
    o << t.target << "  " << t.n_way << "-way " << t.k_shot << "-shot\n";
    o << "  " << std::left << std::setw(static_cast<int>(width)) << "method" << "    accuracy\n";
    for (const ReportRow& r : t.rows) {
      o << (r.bold ? "* " : "  ") << std::left << std::setw(static_cast<int>(width)) << r.label << "  "
        << std::fixed << std::setprecision(4) << r.mean << " +- " << r.ci_half_width << "  (n="
        << r.n_episodes << ")\n";
      o.unsetf(std::ios::fixed);
    }
    o << "\n";
  }
  o << "* best mean, or not different from it (paired t-test, p >= 0.05)\n";
  return o.str();
}

Report emit_report(const fs::path& results_dir) {
  fs::path results = results_dir / "results.csv";
  if (!fs::exists(results)) throw ReportError("no results.csv in '" + results_dir.string() + "'");
  Report report = build_report(read_results(results));

  nlohmann::ordered_json j;
  j["tables"] = nlohmann::ordered_json::array();
  for (const ReportTable& t : report.tables) {
    nlohmann::ordered_json jt;
    jt["target"] = t.target;
    jt["n_way"] = t.n_way;
    jt["k_shot"] = t.k_shot;
    jt["methods"] = nlohmann::ordered_json::array();
    for (const ReportRow& r : t.rows) {
      jt["methods"].push_back({{"method", r.label},
                               {"mean", r.mean},
                               {"ci_half_width", r.ci_half_width},
                               {"n_episodes", r.n_episodes},
                               {"bold", r.bold}});
    }
    jt["p_values"] = nlohmann::ordered_json::object();
    for (const auto& [pair, p] : t.p_values) jt["p_values"][pair] = p;
    j["tables"].push_back(std::move(jt));
  }
  std::ofstream js(results_dir / "summary.json");
  if (!js) throw IoError("cannot write summary.json in '" + results_dir.string() + "'");
  js << j.dump(2) << '\n';
  std::ofstream txt(results_dir / "report.txt");
  if (!txt) throw IoError("cannot write report.txt in '" + results_dir.string() + "'");
  txt << format_report(report);
  return report;
}

}  // namespace startup
