#include "txadv/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "txadv/error.hpp"
#include "txadv/parallel.hpp"
#include "txadv/random.hpp"

namespace txadv {

const char* loss_name(Loss loss) { return loss == Loss::kSquared ? "squared" : "logistic"; }

Loss parse_loss(const std::string& name) {
  if (name == "squared") return Loss::kSquared;
  if (name == "logistic") return Loss::kLogistic;
  throw Error("unknown loss '" + name + "'");
}

void GbdtParams::validate() const {
  if (n_trees < 0) throw Error("n_trees must be >= 0");
  if (max_depth < 1) throw Error("max_depth must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  if (!(row_subsample > 0.0 && row_subsample <= 1.0)) throw Error("row_subsample must lie in (0, 1]");
  if (!(col_subsample > 0.0 && col_subsample <= 1.0)) throw Error("col_subsample must lie in (0, 1]");
  if (!(l2 >= 0.0)) throw Error("l2 must be >= 0");
  if (min_samples_leaf < 1) throw Error("min_samples_leaf must be >= 1");
  if (!(min_child_weight >= 0.0)) throw Error("min_child_weight must be >= 0");
}

Json GbdtParams::to_json() const {
  Json j;
  j["loss"] = loss_name(loss);
  j["n_trees"] = n_trees;
  j["max_depth"] = max_depth;
  j["learning_rate"] = learning_rate;
  j["row_subsample"] = row_subsample;
  j["col_subsample"] = col_subsample;
  j["l2"] = l2;
  j["min_samples_leaf"] = min_samples_leaf;
  j["min_child_weight"] = min_child_weight;
  j["seed"] = seed;
  return j;
}

GbdtParams GbdtParams::from_json(const Json& j) {
  GbdtParams p;
  for (const auto& [key, value] : j.items()) {
    if (key == "loss") p.loss = parse_loss(value.get<std::string>());
    else if (key == "n_trees") p.n_trees = value.get<int>();
    else if (key == "max_depth") p.max_depth = value.get<int>();
    else if (key == "learning_rate") p.learning_rate = value.get<double>();
    else if (key == "row_subsample") p.row_subsample = value.get<double>();
    else if (key == "col_subsample") p.col_subsample = value.get<double>();
    else if (key == "l2") p.l2 = value.get<double>();
    else if (key == "min_samples_leaf") p.min_samples_leaf = value.get<int>();
    else if (key == "min_child_weight") p.min_child_weight = value.get<double>();
    else if (key == "seed") p.seed = value.get<uint64_t>();
    else throw Error("unknown gbdt parameter '" + key + "'");
  }
  p.validate();
  return p;
}

double Tree::predict(const double* x) const {
  int i = 0;
  for (;;) {
    const TreeNode& n = nodes[static_cast<size_t>(i)];
    if (n.feature < 0) return n.value;
    i = x[n.feature] < n.threshold ? n.left : n.right;
  }
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

Booster::Booster(Loss loss, double base_score, double learning_rate, size_t n_features, std::vector<Tree> trees)
    : loss_(loss),
      base_score_(base_score),
      learning_rate_(learning_rate),
      n_features_(n_features),
      trees_(std::move(trees)) {}

double Booster::raw(const double* x) const {
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return base_score_ + learning_rate_ * sum;
}

namespace {

double sigmoid(double r) {
  if (r >= 0) return 1.0 / (1.0 + std::exp(-r));
  const double e = std::exp(r);
  return e / (1.0 + e);
}

Json node_to_json(const Tree& t, int i) {
  const TreeNode& n = t.nodes[static_cast<size_t>(i)];
  Json j;
  if (n.feature < 0) {
    j["value"] = n.value;
    return j;
  }
  j["feature"] = n.feature;
  j["threshold"] = n.threshold;
  j["left"] = node_to_json(t, n.left);
  j["right"] = node_to_json(t, n.right);
  return j;
}

int node_from_json(const Json& j, Tree& t, size_t n_features) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("value")) {
    t.nodes.back().value = j.at("value").get<double>();
    return id;
  }
  const int f = j.at("feature").get<int>();
  if (f < 0 || static_cast<size_t>(f) >= n_features) throw Error("tree split feature out of range");
  const double thr = j.at("threshold").get<double>();
  const int l = node_from_json(j.at("left"), t, n_features);
  const int r = node_from_json(j.at("right"), t, n_features);
  TreeNode& n = t.nodes[static_cast<size_t>(id)];
  n.feature = f;
  n.threshold = thr;
  n.left = l;
  n.right = r;
  return id;
}

}  // namespace

double Booster::predict(const double* x) const {
  const double r = raw(x);
  return loss_ == Loss::kLogistic ? sigmoid(r) : r;
}

std::vector<int> Booster::used_features() const {
  std::vector<int> f;
  for (const auto& t : trees_)
    for (const auto& n : t.nodes)
      if (n.feature >= 0) f.push_back(n.feature);
  std::sort(f.begin(), f.end());
  f.erase(std::unique(f.begin(), f.end()), f.end());
  return f;
}

Json Booster::to_json() const {
  Json j;
  j["loss"] = loss_name(loss_);
  j["base_score"] = base_score_;
  j["learning_rate"] = learning_rate_;
  j["n_features"] = n_features_;
  Json trees = Json::array();
  for (const auto& t : trees_) trees.push_back(node_to_json(t, 0));
  j["trees"] = std::move(trees);
  return j;
}

Booster Booster::from_json(const Json& j) {
  const auto n_features = j.at("n_features").get<size_t>();
  std::vector<Tree> trees;
  for (const auto& tj : j.at("trees")) {
    Tree t;
    node_from_json(tj, t, n_features);
    trees.push_back(std::move(t));
  }
  return Booster(parse_loss(j.at("loss").get<std::string>()), j.at("base_score").get<double>(),
                 j.at("learning_rate").get<double>(), n_features, std::move(trees));
}

double mean_loss(Loss loss, std::span<const double> raw, std::span<const double> y) {
  double total = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    const double r = raw[i];
    if (loss == Loss::kSquared) {
      total += (r - y[i]) * (r - y[i]);
    } else {
      total += std::max(r, 0.0) - y[i] * r + std::log1p(std::exp(-std::abs(r)));
    }
  }
  return y.empty() ? 0.0 : total / static_cast<double>(y.size());
}

namespace {

struct SplitScan {
  double gl = 0.0, hl = 0.0;
  int64_t nl = 0;
  double prev = 0.0;
  double best_gain = 0.0;
  int best_feature = -1;
  double best_threshold = 0.0;
};

struct NodeStats {
  double g = 0.0, h = 0.0;
  int64_t n = 0;
};

double split_threshold(double a, double b) {
  const double mid = a + (b - a) * 0.5;
  return mid > a ? mid : b;
}

Tree grow_tree(const Matrix& x, const std::vector<std::vector<uint32_t>>& order, std::span<const double> g,
               std::span<const double> h, const std::vector<char>& in_sample, std::span<const int> features,
               const GbdtParams& p) {
  const size_t n = x.rows;
  Tree tree;
  std::vector<NodeStats> stats(1);
  std::vector<int> node_of(n, -1);
  for (size_t i = 0; i < n; ++i) {
    if (!in_sample[i]) continue;
    node_of[i] = 0;
    stats[0].g += g[i];
    stats[0].h += h[i];
    ++stats[0].n;
  }
  tree.nodes.emplace_back();
  std::vector<int> frontier{0};
  const double lambda = p.l2;
  auto score_of = [lambda](double gs, double hs) { return gs * gs / (hs + lambda); };

  for (int depth = 0; depth < p.max_depth && !frontier.empty(); ++depth) {
    std::vector<int> slot_of(tree.nodes.size(), -1);
    for (size_t s = 0; s < frontier.size(); ++s) slot_of[static_cast<size_t>(frontier[s])] = static_cast<int>(s);
    std::vector<SplitScan> scans(frontier.size());

    for (int f : features) {
      for (auto& sc : scans) {
        sc.gl = sc.hl = 0.0;
        sc.nl = 0;
      }
      for (uint32_t i : order[static_cast<size_t>(f)]) {
        const int node = node_of[i];
        if (node < 0) continue;
        const int slot = slot_of[static_cast<size_t>(node)];
        if (slot < 0) continue;
        SplitScan& sc = scans[static_cast<size_t>(slot)];
        const double v = x(i, static_cast<size_t>(f));
        if (sc.nl > 0 && v != sc.prev) {
          const NodeStats& st = stats[static_cast<size_t>(node)];
          const double gr = st.g - sc.gl, hr = st.h - sc.hl;
          const int64_t nr = st.n - sc.nl;
          if (sc.nl >= p.min_samples_leaf && nr >= p.min_samples_leaf && sc.hl >= p.min_child_weight &&
              hr >= p.min_child_weight) {
            const double gain = score_of(sc.gl, sc.hl) + score_of(gr, hr) - score_of(st.g, st.h);
            if (gain > sc.best_gain) {
              sc.best_gain = gain;
              sc.best_feature = f;
              sc.best_threshold = split_threshold(sc.prev, v);
            }
          }
        }
        sc.gl += g[i];
        sc.hl += h[i];
        ++sc.nl;
        sc.prev = v;
      }
    }

    std::vector<int> next;
    std::vector<int> left_child(tree.nodes.size(), -1);
    for (size_t s = 0; s < frontier.size(); ++s) {
      const SplitScan& sc = scans[s];
      if (sc.best_feature < 0) continue;
      const int node = frontier[s];
      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      stats.resize(tree.nodes.size());
      TreeNode& tn = tree.nodes[static_cast<size_t>(node)];
      tn.feature = sc.best_feature;
      tn.threshold = sc.best_threshold;
      tn.left = l;
      tn.right = l + 1;
      left_child[static_cast<size_t>(node)] = l;
      next.push_back(l);
      next.push_back(l + 1);
    }
    if (next.empty()) break;
    for (size_t i = 0; i < n; ++i) {
      const int node = node_of[i];
      if (node < 0 || static_cast<size_t>(node) >= left_child.size() || left_child[static_cast<size_t>(node)] < 0)
        continue;
      const TreeNode& tn = tree.nodes[static_cast<size_t>(node)];
      const int child = x(i, static_cast<size_t>(tn.feature)) < tn.threshold ? tn.left : tn.right;
      node_of[i] = child;
      NodeStats& st = stats[static_cast<size_t>(child)];
      st.g += g[i];
      st.h += h[i];
      ++st.n;
    }
    frontier = std::move(next);
  }

  for (size_t k = 0; k < tree.nodes.size(); ++k) {
    TreeNode& tn = tree.nodes[k];
    if (tn.feature >= 0) continue;
    const double denom = stats[k].h + lambda;
    tn.value = denom > 0.0 ? -stats[k].g / denom : 0.0;
  }
  return tree;
}

}  // namespace

Booster train_gbdt(const Matrix& x, std::span<const double> y, const GbdtParams& params,
                   std::vector<double>* loss_trace) {
  params.validate();
  const size_t n = x.rows, d = x.cols;
  if (n == 0 || d == 0) throw Error("cannot fit gradient boosting on empty data");
  if (y.size() != n) throw Error("target length does not match feature rows");
  for (double v : y) {
    if (!std::isfinite(v)) throw Error("non-finite boosting target");
    if (params.loss == Loss::kLogistic && (v < 0.0 || v > 1.0)) throw Error("logistic targets must lie in [0, 1]");
  }
  for (double v : x.data)
    if (std::isnan(v)) throw Error("NaN in boosting features");

  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double base = mean;
  if (params.loss == Loss::kLogistic) {
    const double p = std::clamp(mean, 1e-6, 1.0 - 1e-6);
    base = std::log(p / (1.0 - p));
  }
  std::vector<double> raw(n, base);
  if (loss_trace) {
    loss_trace->clear();
    loss_trace->push_back(mean_loss(params.loss, raw, y));
  }
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  std::vector<Tree> trees;
  if (*ymin == *ymax) return Booster(params.loss, base, params.learning_rate, d, std::move(trees));

  std::vector<std::vector<uint32_t>> order(d);
  for (size_t f = 0; f < d; ++f) {
    auto& o = order[f];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](uint32_t a, uint32_t b) { return x(a, f) < x(b, f); });
  }

  Rng rng(derive_seed(params.seed, "gbdt"));
  std::vector<double> g(n), h(n);
  std::vector<uint32_t> rows(n);
  std::vector<int> cols(d);
  std::vector<char> in_sample(n);
  const auto n_rows = static_cast<size_t>(std::max(1.0, std::round(params.row_subsample * static_cast<double>(n))));
  const auto n_cols = static_cast<size_t>(std::max(1.0, std::ceil(params.col_subsample * static_cast<double>(d) - 1e-9)));
  for (int t = 0; t < params.n_trees; ++t) {
    for (size_t i = 0; i < n; ++i) {
      if (params.loss == Loss::kSquared) {
        g[i] = raw[i] - y[i];
        h[i] = 1.0;
      } else {
        const double p = sigmoid(raw[i]);
        g[i] = p - y[i];
        h[i] = p * (1.0 - p);
      }
    }
    std::iota(rows.begin(), rows.end(), 0u);
    std::fill(in_sample.begin(), in_sample.end(), 0);
    for (size_t k = 0; k < n_rows; ++k) {
      if (n_rows < n) std::swap(rows[k], rows[k + uniform_index(rng, n - k)]);
      in_sample[rows[k]] = 1;
    }
    std::iota(cols.begin(), cols.end(), 0);
    for (size_t k = 0; k < n_cols && n_cols < d; ++k) std::swap(cols[k], cols[k + uniform_index(rng, d - k)]);
    std::vector<int> features(cols.begin(), cols.begin() + static_cast<std::ptrdiff_t>(n_cols));
    std::sort(features.begin(), features.end());

    Tree tree = grow_tree(x, order, g, h, in_sample, features, params);
    for (size_t i = 0; i < n; ++i) raw[i] += params.learning_rate * tree.predict(x.row(i));
    trees.push_back(std::move(tree));
    if (loss_trace) loss_trace->push_back(mean_loss(params.loss, raw, y));
  }
  return Booster(params.loss, base, params.learning_rate, d, std::move(trees));
}

GbdtModel::GbdtModel(AggregateSpec spec, std::vector<int> columns, Booster booster)
    : spec_(std::move(spec)), columns_(std::move(columns)), booster_(std::move(booster)) {
  const size_t width = columns_.empty() ? static_cast<size_t>(spec_.dim()) : columns_.size();
  if (width != booster_.n_features()) throw Error("booster width does not match the selected aggregate columns");
  for (int c : columns_)
    if (c < 0 || c >= spec_.dim()) throw Error("aggregate column out of range");
}

double GbdtModel::score_features(std::span<const double> features) const {
  double p;
  if (columns_.empty()) {
    p = booster_.predict(features.data());
  } else {
    std::vector<double> sel(columns_.size());
    for (size_t k = 0; k < columns_.size(); ++k) sel[k] = features[static_cast<size_t>(columns_[k])];
    p = booster_.predict(sel.data());
  }
  return std::clamp(p, 0.0, 1.0);
}

double GbdtModel::score(std::span<const Transaction> seq) const {
  return score_features(aggregate_features(seq, spec_));
}

std::vector<double> GbdtModel::score_candidates(std::span<const Transaction> base,
                                                std::span<const Edit> candidates) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  if (base.empty()) return ScoreModel::score_candidates(base, candidates);
  AggregateAccumulator acc(spec_, base);
  std::vector<double> buf(static_cast<size_t>(spec_.dim()));
  for (const auto& c : candidates) {
    if (c.kind == EditKind::kSubstitute) {
      if (c.position < 0 || static_cast<size_t>(c.position) >= base.size())
        throw Error("candidate position out of range");
      const Transaction& old_tx = base[static_cast<size_t>(c.position)];
      Transaction new_tx = old_tx;
      new_tx.mcc = c.new_mcc;
      new_tx.amount = c.new_amount;
      acc.substitute(old_tx, new_tx);
      acc.emit(buf);
      acc.substitute(new_tx, old_tx);
    } else {
      Transaction tx = base.back();
      tx.mcc = c.new_mcc;
      tx.amount = c.new_amount;
      acc.add(tx);
      acc.emit(buf);
      acc.remove(tx);
    }
    out.push_back(score_features(buf));
  }
  return out;
}

Json GbdtModel::to_json() const {
  Json j;
  j["kind"] = kind();
  j["spec"] = spec_.to_json();
  j["columns"] = columns_;
  j["booster"] = booster_.to_json();
  if (!metrics.is_null()) j["metrics"] = metrics;
  return j;
}

std::shared_ptr<GbdtModel> GbdtModel::from_json(const Json& j) {
  auto m = std::make_shared<GbdtModel>(AggregateSpec::from_json(j.at("spec")), j.at("columns").get<std::vector<int>>(),
                                       Booster::from_json(j.at("booster")));
  if (j.contains("metrics")) m->metrics = j.at("metrics");
  return m;
}

Matrix aggregate_matrix(std::span<const ClientSequence> seqs, const AggregateSpec& spec, int workers) {
  Matrix x(seqs.size(), static_cast<size_t>(spec.dim()));
  parallel_for(seqs.size(), workers, [&](size_t i) {
    AggregateAccumulator(spec, seqs[i].transactions).emit(std::span<double>(x.row(i), x.cols));
  });
  return x;
}

Matrix select_columns(const Matrix& x, std::span<const int> columns) {
  if (columns.empty()) return x;
  Matrix out(x.rows, columns.size());
  for (size_t i = 0; i < x.rows; ++i)
    for (size_t k = 0; k < columns.size(); ++k) out(i, k) = x(i, static_cast<size_t>(columns[k]));
  return out;
}

std::shared_ptr<GbdtModel> train_gbdt_model(std::span<const ClientSequence> seqs, std::span<const double> targets,
                                            const AggregateSpec& spec, std::vector<int> columns,
                                            const GbdtParams& params, int workers) {
  const Matrix x = select_columns(aggregate_matrix(seqs, spec, workers), columns);
  std::vector<double> trace;
  Booster booster = train_gbdt(x, targets, params, &trace);
  auto m = std::make_shared<GbdtModel>(spec, std::move(columns), std::move(booster));
  m->metrics["params"] = params.to_json();
  m->metrics["final_train_loss"] = trace.back();
  return m;
}

}  // namespace txadv
