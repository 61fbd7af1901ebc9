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

#include "startup/fewshot_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

#include "startup/error.hpp"
#include "startup/losses.hpp"
#include "startup/random.hpp"

namespace startup {

std::uint64_t Episode::hash() const {
  Fingerprint fp;
  fp.u64(static_cast<std::uint64_t>(way)).u64(static_cast<std::uint64_t>(shot));
  fp.u64(static_cast<std::uint64_t>(query_per_class));
  for (std::size_t r : support_rows) fp.u64(r);
  for (int l : support_labels) fp.u64(static_cast<std::uint64_t>(l));
  for (std::size_t r : query_rows) fp.u64(r);
  for (int l : query_labels) fp.u64(static_cast<std::uint64_t>(l));
  return fp.value();
}

Episode sample_episode(const Dataset& pool, int way, int shot, int query_per_class,
                       std::uint64_t episode_seed) {
  if (way < 1 || shot < 1 || query_per_class < 1) {
    throw ProtocolError("episode: way, shot and query count must be >= 1");
  }
  const std::vector<int>& truth = pool.truth();
  if (truth.empty()) throw ProtocolError("episode: the pool has no labels");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < truth.size(); ++i) by_class[truth[i]].push_back(i);
  std::size_t need = static_cast<std::size_t>(shot + query_per_class);
  std::vector<int> eligible;
  for (const auto& [cls, rows] : by_class) {
    if (rows.size() >= need) eligible.push_back(cls);
  }
  if (eligible.size() < static_cast<std::size_t>(way)) {
    throw ProtocolError("episode: " + std::to_string(way) + "-way " + std::to_string(shot) +
                        "-shot with " + std::to_string(query_per_class) +
                        " queries needs " + std::to_string(way) + " classes with >= " +
                        std::to_string(need) + " examples; the pool has " +
                        std::to_string(eligible.size()));
  }
  Rng rng(episode_seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.query_per_class = query_per_class;
  ep.seed = episode_seed;
  for (int label = 0; label < way; ++label) {
    int cls = eligible[static_cast<std::size_t>(label)];
    ep.classes.push_back(cls);
    std::vector<std::size_t> rows = by_class[cls];
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t i = 0; i < need; ++i) {
      if (i < static_cast<std::size_t>(shot)) {
        ep.support_rows.push_back(rows[i]);
        ep.support_labels.push_back(label);
      } else {
        ep.query_rows.push_back(rows[i]);
        ep.query_labels.push_back(label);
      }
    }
  }
  return ep;
}

Matrix LinearProbe::logits(const Matrix& embeddings) const {
  return (embeddings * weight).rowwise() + bias.row(0);
}

std::vector<int> LinearProbe::predict(const Matrix& embeddings) const {
  Matrix z = logits(embeddings);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Index r = 0; r < z.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < z.cols(); ++c) {
      if (z(r, c) > z(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

LinearProbe fit_linear_probe(const Matrix& support_embeddings, std::span<const int> support_labels,
                             int way, const ProbeConfig& config) {
  if (way < 1) throw ProtocolError("probe: way must be >= 1");
  if (static_cast<Index>(support_labels.size()) != support_embeddings.rows()) {
    throw DimensionError("probe: label count differs from support rows");
  }
  if (!support_embeddings.allFinite()) throw NumericError("probe: non-finite support embeddings");
  Index d = support_embeddings.cols();
  Graph g;
  NodeId w = g.parameter("probe.weight", Matrix::Zero(d, way));
  NodeId b = g.parameter("probe.bias", Matrix::Zero(1, way));
  NodeId x = g.constant(support_embeddings, "support");
  NodeId y = g.constant(one_hot(support_labels, way), "labels");
  NodeId p = g.softmax_rows(g.add(g.matmul(x, w), b));
  NodeId loss = cross_entropy_node(g, p, y);
  OptimizerState state = make_optimizer_state(g, config.learning_rate, config.momentum,
                                              config.weight_decay);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    g.forward();
    std::vector<Matrix> grads = g.backward(loss);
    sgd_step(g, grads, state);
  }
  return LinearProbe{g.value(w), g.value(b)};
}

namespace {

Matrix gather(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i]) >= m.rows()) throw ContractError("episode row outside the pool");
    out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(rows[i]));
  }
  return out;
}

}  // namespace

double evaluate_episode(const Matrix& pool_embeddings, const Episode& episode,
                        const ProbeConfig& config) {
  LinearProbe probe = fit_linear_probe(gather(pool_embeddings, episode.support_rows),
                                       episode.support_labels, episode.way, config);
  std::vector<int> predicted = probe.predict(gather(pool_embeddings, episode.query_rows));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == episode.query_labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

double evaluate_episode(const ModelBundle& bundle, const Dataset& pool, const Episode& episode,
                        const ProbeConfig& config) {
  if (pool.dim() != bundle.arch.input_dim) {
    throw DimensionError("evaluate_episode: pool width does not match the bundle");
  }
  return evaluate_episode(embed(bundle, pool.features), episode, config);
}

std::uint64_t episode_seed(std::uint64_t base_seed, int episode_index) {
  return derive_seed(base_seed, 0xE9150DE0000ULL + static_cast<std::uint64_t>(episode_index));
}

std::uint64_t protocol_fingerprint(const Protocol& protocol, const Dataset& pool) {
  Fingerprint fp;
  fp.u64(static_cast<std::uint64_t>(protocol.way)).u64(static_cast<std::uint64_t>(protocol.shot));
  fp.u64(static_cast<std::uint64_t>(protocol.query_per_class));
  fp.u64(static_cast<std::uint64_t>(protocol.n_episodes)).u64(protocol.base_seed);
  fp.u64(static_cast<std::uint64_t>(protocol.probe.epochs)).f64(protocol.probe.learning_rate);
  fp.f64(protocol.probe.momentum).f64(protocol.probe.weight_decay);
  fp.matrix(pool.features);
  for (int l : pool.truth()) fp.u64(static_cast<std::uint64_t>(l));
  return fp.value();
}

void summarize(std::span<const double> accuracies, double& mean, double& ci_half_width) {
  std::size_t n = accuracies.size();
  if (n == 0) {
    mean = 0.0;
    ci_half_width = 0.0;
    return;
  }
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  mean = sum / static_cast<double>(n);
  if (n < 2) {
    ci_half_width = 0.0;
    return;
  }
  double ss = 0.0;
  for (double a : accuracies) ss += (a - mean) * (a - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  ci_half_width = 1.96 * sd / std::sqrt(static_cast<double>(n));
}

ResultSummary run_evaluation_on_embeddings(const Matrix& pool_embeddings, const Dataset& pool,
                                           const Protocol& protocol, const std::string& method_tag,
                                           int threads) {
  if (protocol.n_episodes < 1) throw ProtocolError("evaluation: n_episodes must be >= 1");
  std::size_t n = static_cast<std::size_t>(protocol.n_episodes);
  ResultSummary summary;
  summary.per_episode_accuracy.assign(n, 0.0);
  summary.episode_hashes.assign(n, 0);
  // Fail fast on an unsatisfiable protocol before spawning workers.
  sample_episode(pool, protocol.way, protocol.shot, protocol.query_per_class,
                 episode_seed(protocol.base_seed, 0));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Episode ep = sample_episode(pool, protocol.way, protocol.shot, protocol.query_per_class,
                                  episode_seed(protocol.base_seed, static_cast<int>(i)));
      summary.per_episode_accuracy[i] = evaluate_episode(pool_embeddings, ep, protocol.probe);
      summary.episode_hashes[i] = ep.hash();
    }
  };
  std::size_t workers = static_cast<std::size_t>(std::max(1, threads));
  workers = std::min(workers, n);
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool_threads;
    std::vector<std::exception_ptr> errors(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      std::size_t begin = w * chunk, end = std::min(n, begin + chunk);
      pool_threads.emplace_back([&, w, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool_threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  summarize(summary.per_episode_accuracy, summary.mean, summary.ci_half_width);
  summary.n_episodes = protocol.n_episodes;
  summary.method_tag = method_tag;
  summary.protocol_fingerprint = protocol_fingerprint(protocol, pool);
  return summary;
}

ResultSummary run_evaluation(const ModelBundle& bundle, const Dataset& pool,
                             const Protocol& protocol, const std::string& method_tag,
                             int threads) {
  if (pool.dim() != bundle.arch.input_dim) {
    throw DimensionError("run_evaluation: pool width does not match the bundle");
  }
  return run_evaluation_on_embeddings(embed(bundle, pool.features), pool, protocol, method_tag,
                                      threads);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ContractError("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw ContractError("incomplete_beta: x must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                     b * std::log1p(-x);
  // Modified Lentz evaluation of the continued fraction.
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_front) * h / a;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ContractError("student_t_two_sided_p: df must be positive");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

Comparison paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ProtocolError("paired t-test: sample sizes differ");
  std::size_t n = a.size();
  if (n < 2) throw ProtocolError("paired t-test: need at least two paired episodes");
  std::vector<double> d(n);
  bool all_zero = true;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    if (d[i] != 0.0) all_zero = false;
  }
  Comparison c;
  if (all_zero) return c;  // t = 0, p = 1
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  c.mean_difference = mean;
  c.direction = mean > 0.0 ? Direction::kAGreater : (mean < 0.0 ? Direction::kBGreater : Direction::kEqual);
  if (sd == 0.0) {
    c.t_statistic = mean > 0.0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
    c.p_value = 0.0;
    c.significant = true;
    return c;
  }
  c.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  c.p_value = student_t_two_sided_p(c.t_statistic, static_cast<double>(n - 1));
  c.significant = c.p_value < 0.05;
  return c;
}

Comparison compare(const ResultSummary& a, const ResultSummary& b) {
  if (a.protocol_fingerprint != b.protocol_fingerprint) {
    throw ProtocolError("compare: summaries come from different protocols (unpaired comparison refused)");
  }
  return paired_t_test(a.per_episode_accuracy, b.per_episode_accuracy);
}

}  // namespace startup
