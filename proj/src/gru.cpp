#include "txadv/gru.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "txadv/error.hpp"
#include "txadv/random.hpp"

namespace txadv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int GruHyper::input_dim() const { return std::accumulate(embedding_dims.begin(), embedding_dims.end(), 0); }

void GruHyper::validate() const {
  for (int d : embedding_dims)
    if (d < 1) throw Error("embedding dimensions must be >= 1");
  if (hidden < 1) throw Error("hidden size must be >= 1");
  if (window < 1) throw Error("window must be >= 1");
  if (epochs < 0) throw Error("epochs must be >= 0");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw Error("weight_decay must be >= 0");
  if (!(spatial_dropout >= 0.0 && spatial_dropout < 1.0)) throw Error("spatial_dropout must lie in [0, 1)");
  if (!(head_dropout >= 0.0 && head_dropout < 1.0)) throw Error("head_dropout must lie in [0, 1)");
  if (!(init_scale > 0.0)) throw Error("init_scale must be > 0");
}

Json GruHyper::to_json() const {
  Json j;
  j["embedding_dims"] = embedding_dims;
  j["hidden"] = hidden;
  j["window"] = window;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["spatial_dropout"] = spatial_dropout;
  j["head_dropout"] = head_dropout;
  j["init_scale"] = init_scale;
  j["seed"] = seed;
  return j;
}

GruHyper GruHyper::from_json(const Json& j) {
  GruHyper h;
  for (const auto& [key, v] : j.items()) {
    if (key == "embedding_dims") h.embedding_dims = v.get<std::array<int, kNumChannels>>();
    else if (key == "hidden") h.hidden = v.get<int>();
    else if (key == "window") h.window = v.get<int>();
    else if (key == "epochs") h.epochs = v.get<int>();
    else if (key == "batch_size") h.batch_size = v.get<int>();
    else if (key == "learning_rate") h.learning_rate = v.get<double>();
    else if (key == "weight_decay") h.weight_decay = v.get<double>();
    else if (key == "beta1") h.beta1 = v.get<double>();
    else if (key == "beta2") h.beta2 = v.get<double>();
    else if (key == "adam_eps") h.adam_eps = v.get<double>();
    else if (key == "spatial_dropout") h.spatial_dropout = v.get<double>();
    else if (key == "head_dropout") h.head_dropout = v.get<double>();
    else if (key == "init_scale") h.init_scale = v.get<double>();
    else if (key == "seed") h.seed = v.get<uint64_t>();
    else throw Error("unknown gru parameter '" + key + "'");
  }
  h.validate();
  return h;
}

bool GruParams::all_finite() const {
  for (const auto& e : embeddings)
    if (!e.allFinite()) return false;
  return w_ih.allFinite() && w_hh.allFinite() && b_ih.allFinite() && b_hh.allFinite() && w_head.allFinite() &&
         std::isfinite(b_head);
}

namespace {

template <typename Derived>
MatrixXd sigmoid(const Eigen::MatrixBase<Derived>& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Derived>
MatrixXd tanh_of(const Eigen::MatrixBase<Derived>& a) {
  return (2.0 / (1.0 + (-2.0 * a.array()).exp()) - 1.0).matrix();
}

// One GRU step on column-stacked states. gi and gh are 3H x B.
void gru_step(const MatrixXd& gi, const MatrixXd& gh, const MatrixXd& h_prev, int hidden, MatrixXd& h_next,
              MatrixXd* r_out = nullptr, MatrixXd* z_out = nullptr, MatrixXd* n_out = nullptr) {
  const auto H = static_cast<Eigen::Index>(hidden);
  MatrixXd r = sigmoid(gi.topRows(H) + gh.topRows(H));
  MatrixXd z = sigmoid(gi.middleRows(H, H) + gh.middleRows(H, H));
  MatrixXd n = tanh_of(gi.bottomRows(H) + r.cwiseProduct(gh.bottomRows(H)));
  h_next = (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h_prev);
  if (r_out) *r_out = std::move(r);
  if (z_out) *z_out = std::move(z);
  if (n_out) *n_out = std::move(n);
}

double bce_with_logit(double l, double y) { return std::max(l, 0.0) - y * l + std::log1p(std::exp(-std::abs(l))); }

// Batched forward/backward over explicit input columns. Column b of x[t] is
// sequence b's input at step t; inactive (left-padding) steps carry the
// hidden state through unchanged.
struct Tape {
  std::vector<MatrixXd> x;
  std::vector<std::vector<char>> active;
  std::vector<MatrixXd> h, r, z, n, ghn;
};

void forward(const GruParams& p, int hidden, Tape& tape) {
  const size_t steps = tape.x.size();
  const Eigen::Index batch = steps ? tape.x[0].cols() : 0;
  const auto H = static_cast<Eigen::Index>(hidden);
  tape.h.assign(steps + 1, MatrixXd::Zero(H, batch));
  tape.r.resize(steps);
  tape.z.resize(steps);
  tape.n.resize(steps);
  tape.ghn.resize(steps);
  for (size_t t = 0; t < steps; ++t) {
    const MatrixXd gi = (p.w_ih * tape.x[t]).colwise() + p.b_ih;
    const MatrixXd gh = (p.w_hh * tape.h[t]).colwise() + p.b_hh;
    gru_step(gi, gh, tape.h[t], hidden, tape.h[t + 1], &tape.r[t], &tape.z[t], &tape.n[t]);
    tape.ghn[t] = gh.bottomRows(H);
    for (Eigen::Index b = 0; b < batch; ++b)
      if (!tape.active[t][static_cast<size_t>(b)]) tape.h[t + 1].col(b) = tape.h[t].col(b);
  }
}

// Backpropagates dh (H x B, gradient at the final state). Weight gradients
// accumulate into `grads` when given; returns d(loss)/dx per step.
std::vector<MatrixXd> backward(const GruParams& p, int hidden, const Tape& tape, MatrixXd dh, GruParams* grads) {
  const size_t steps = tape.x.size();
  const auto H = static_cast<Eigen::Index>(hidden);
  std::vector<MatrixXd> dx(steps);
  for (size_t s = steps; s-- > 0;) {
    const MatrixXd& hp = tape.h[s];
    const MatrixXd& r = tape.r[s];
    const MatrixXd& z = tape.z[s];
    const MatrixXd& n = tape.n[s];
    const Eigen::Index batch = hp.cols();
    const MatrixXd dn = dh.cwiseProduct((1.0 - z.array()).matrix());
    const MatrixXd dz = dh.cwiseProduct(hp - n);
    MatrixXd dh_prev = dh.cwiseProduct(z);
    const MatrixXd dan = dn.cwiseProduct((1.0 - n.array().square()).matrix());
    const MatrixXd dar = dan.cwiseProduct(tape.ghn[s]).cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
    const MatrixXd daz = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
    MatrixXd dgi(3 * H, batch), dgh(3 * H, batch);
    dgi << dar, daz, dan;
    dgh << dar, daz, dan.cwiseProduct(r);
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (tape.active[s][static_cast<size_t>(b)]) continue;
      dgi.col(b).setZero();
      dgh.col(b).setZero();
      dh_prev.col(b) = dh.col(b);
    }
    if (grads) {
      grads->w_ih.noalias() += dgi * tape.x[s].transpose();
      grads->b_ih += dgi.rowwise().sum();
      grads->w_hh.noalias() += dgh * hp.transpose();
      grads->b_hh += dgh.rowwise().sum();
    }
    dh_prev.noalias() += p.w_hh.transpose() * dgh;
    dx[s] = p.w_ih.transpose() * dgi;
    dh = std::move(dh_prev);
  }
  return dx;
}

GruParams zeros_like(const GruParams& p) {
  GruParams z;
  for (size_t c = 0; c < kNumChannels; ++c) z.embeddings[c] = MatrixXd::Zero(p.embeddings[c].rows(), p.embeddings[c].cols());
  z.w_ih = MatrixXd::Zero(p.w_ih.rows(), p.w_ih.cols());
  z.w_hh = MatrixXd::Zero(p.w_hh.rows(), p.w_hh.cols());
  z.b_ih = VectorXd::Zero(p.b_ih.size());
  z.b_hh = VectorXd::Zero(p.b_hh.size());
  z.w_head = VectorXd::Zero(p.w_head.size());
  z.b_head = 0.0;
  return z;
}

template <typename Fn>
void for_each_tensor(GruParams& a, GruParams& b, GruParams& c, GruParams& d, Fn&& fn) {
  for (size_t k = 0; k < kNumChannels; ++k)
    fn(a.embeddings[k].data(), b.embeddings[k].data(), c.embeddings[k].data(), d.embeddings[k].data(),
       a.embeddings[k].size());
  fn(a.w_ih.data(), b.w_ih.data(), c.w_ih.data(), d.w_ih.data(), a.w_ih.size());
  fn(a.w_hh.data(), b.w_hh.data(), c.w_hh.data(), d.w_hh.data(), a.w_hh.size());
  fn(a.b_ih.data(), b.b_ih.data(), c.b_ih.data(), d.b_ih.data(), a.b_ih.size());
  fn(a.b_hh.data(), b.b_hh.data(), c.b_hh.data(), d.b_hh.data(), a.b_hh.size());
  fn(a.w_head.data(), b.w_head.data(), c.w_head.data(), d.w_head.data(), a.w_head.size());
  fn(&a.b_head, &b.b_head, &c.b_head, &d.b_head, Eigen::Index{1});
}

Json tensor_to_json(const MatrixXd& m) {
  Json j;
  j["shape"] = {m.rows(), m.cols()};
  std::vector<double> data(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) data[static_cast<size_t>(i * m.cols() + k)] = m(i, k);
  j["data"] = std::move(data);
  return j;
}

MatrixXd tensor_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) throw Error("tensor shape mismatch in model file");
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error("tensor data length mismatch");
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<size_t>(i * cols + k)];
  return m;
}

}  // namespace

GruParams init_gru_params(const std::array<int, kNumChannels>& cards, const GruHyper& hyper) {
  hyper.validate();
  Rng rng(derive_seed(hyper.seed, "gru.init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  const int H = hyper.hidden, D = hyper.input_dim();
  const double bound = hyper.init_scale / std::sqrt(static_cast<double>(H));
  auto fill_uniform = [&](double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] = uniform(rng, -bound, bound);
  };
  GruParams p;
  for (size_t c = 0; c < kNumChannels; ++c) {
    p.embeddings[c] = MatrixXd(cards[c], hyper.embedding_dims[c]);
    for (Eigen::Index i = 0; i < p.embeddings[c].size(); ++i) p.embeddings[c].data()[i] = normal(rng);
  }
  p.w_ih = MatrixXd(3 * H, D);
  p.w_hh = MatrixXd(3 * H, H);
  p.b_ih = VectorXd(3 * H);
  p.b_hh = VectorXd(3 * H);
  p.w_head = VectorXd(H);
  fill_uniform(p.w_ih.data(), p.w_ih.size());
  fill_uniform(p.w_hh.data(), p.w_hh.size());
  fill_uniform(p.b_ih.data(), p.b_ih.size());
  fill_uniform(p.b_hh.data(), p.b_hh.size());
  fill_uniform(p.w_head.data(), p.w_head.size());
  p.b_head = uniform(rng, -bound, bound);
  return p;
}

GruModel::GruModel(AmountBinner binner, std::array<int, kNumChannels> cardinalities, GruHyper hyper, GruParams params)
    : binner_(std::move(binner)), cards_(cardinalities), hyper_(std::move(hyper)), params_(std::move(params)) {
  hyper_.validate();
  const Eigen::Index H = hyper_.hidden, D = hyper_.input_dim();
  int off = 0;
  for (size_t c = 0; c < kNumChannels; ++c) {
    offsets_[c] = off;
    off += hyper_.embedding_dims[c];
    if (params_.embeddings[c].rows() != cards_[c] || params_.embeddings[c].cols() != hyper_.embedding_dims[c])
      throw Error(std::string("embedding table shape mismatch for channel ") + channel_name(static_cast<int>(c)));
  }
  if (params_.w_ih.rows() != 3 * H || params_.w_ih.cols() != D || params_.w_hh.rows() != 3 * H ||
      params_.w_hh.cols() != H || params_.b_ih.size() != 3 * H || params_.b_hh.size() != 3 * H ||
      params_.w_head.size() != H)
    throw Error("GRU parameter shape mismatch");
  if (!params_.all_finite()) throw Error("GRU parameters must be finite");
  build_tables();
}

void GruModel::build_tables() {
  for (size_t c = 0; c < kNumChannels; ++c)
    proj_[c] = params_.w_ih.middleCols(offsets_[c], hyper_.embedding_dims[c]) * params_.embeddings[c].transpose();
}

size_t GruModel::window_start(size_t length) const {
  const auto w = static_cast<size_t>(hyper_.window);
  return length > w ? length - w : 0;
}

std::vector<TokenizedTransaction> GruModel::window_tokens(std::span<const Transaction> seq) const {
  auto toks = tokenize(seq.subspan(window_start(seq.size())), binner_);
  for (const auto& t : toks)
    for (int c = 0; c < kNumChannels; ++c)
      if (t[c] < 0 || t[c] >= cards_[static_cast<size_t>(c)])
        throw Error(std::string("token out of range for channel ") + channel_name(c));
  return toks;
}

void GruModel::input_gates(const TokenizedTransaction& tok, double* out) const {
  const Eigen::Index G = 3 * hyper_.hidden;
  Eigen::Map<VectorXd> gi(out, G);
  gi = params_.b_ih;
  for (size_t c = 0; c < kNumChannels; ++c) gi += proj_[c].col(tok.tokens[c]);
}

Eigen::MatrixXd GruModel::hidden_states(std::span<const Transaction> seq) const {
  const auto toks = window_tokens(seq);
  const Eigen::Index H = hyper_.hidden;
  MatrixXd hs = MatrixXd::Zero(H, static_cast<Eigen::Index>(toks.size()) + 1);
  MatrixXd gi(3 * H, 1), h = MatrixXd::Zero(H, 1), h_next;
  for (size_t t = 0; t < toks.size(); ++t) {
    input_gates(toks[t], gi.data());
    const MatrixXd gh = params_.w_hh * h + params_.b_hh;
    gru_step(gi, gh, h, hyper_.hidden, h_next);
    h = h_next;
    hs.col(static_cast<Eigen::Index>(t) + 1) = h;
  }
  return hs;
}

double GruModel::logit(std::span<const Transaction> seq) const {
  const MatrixXd hs = hidden_states(seq);
  return params_.w_head.dot(hs.col(hs.cols() - 1)) + params_.b_head;
}

double GruModel::score(std::span<const Transaction> seq) const { return sigmoid(logit(seq)); }

std::vector<double> GruModel::score_candidates(std::span<const Transaction> base,
                                               std::span<const Edit> candidates) const {
  std::vector<double> out(candidates.size());
  if (candidates.empty()) return out;
  if (base.empty()) return ScoreModel::score_candidates(base, candidates);
  const size_t start = window_start(base.size());
  const auto toks = window_tokens(base);
  const auto T = static_cast<Eigen::Index>(toks.size());
  const Eigen::Index H = hyper_.hidden;
  const MatrixXd hs = hidden_states(base);
  const double base_score = sigmoid(params_.w_head.dot(hs.col(T)) + params_.b_head);

  struct Sub {
    Eigen::Index step;
    size_t index;
    TokenizedTransaction tok;
  };
  std::vector<Sub> subs;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const Edit& c = candidates[i];
    if (c.kind == EditKind::kAppend) {
      const auto edited = apply_edits(base, std::span<const Edit>(&c, 1));
      out[i] = score(edited);
      continue;
    }
    if (c.position < 0 || static_cast<size_t>(c.position) >= base.size())
      throw Error("candidate position out of range");
    if (static_cast<size_t>(c.position) < start) {
      out[i] = base_score;
      continue;
    }
    Transaction tx = base[static_cast<size_t>(c.position)];
    tx.mcc = c.new_mcc;
    tx.amount = c.new_amount;
    TokenizedTransaction tok = tokenize(tx, binner_);
    if (tok[kChannelMcc] < 0 || tok[kChannelMcc] >= cards_[kChannelMcc]) throw Error("candidate mcc out of range");
    subs.push_back({static_cast<Eigen::Index>(static_cast<size_t>(c.position) - start), i, tok});
  }
  if (subs.empty()) return out;
  std::stable_sort(subs.begin(), subs.end(), [](const Sub& a, const Sub& b) { return a.step < b.step; });

  const auto m = static_cast<Eigen::Index>(subs.size());
  MatrixXd hc(H, m), gi(3 * H, m), h_next;
  VectorXd gi_base(3 * H);
  Eigen::Index active = 0;
  for (Eigen::Index t = subs.front().step; t < T; ++t) {
    input_gates(toks[static_cast<size_t>(t)], gi_base.data());
    const Eigen::Index first_new = active;
    while (active < m && subs[static_cast<size_t>(active)].step == t) {
      hc.col(active) = hs.col(t);
      ++active;
    }
    for (Eigen::Index k = 0; k < first_new; ++k) gi.col(k) = gi_base;
    for (Eigen::Index k = first_new; k < active; ++k) input_gates(subs[static_cast<size_t>(k)].tok, gi.col(k).data());
    const MatrixXd h_prev = hc.leftCols(active);
    const MatrixXd gh = (params_.w_hh * h_prev).colwise() + params_.b_hh;
    gru_step(gi.leftCols(active), gh, h_prev, hyper_.hidden, h_next);
    hc.leftCols(active) = h_next;
  }
  const VectorXd logits = (params_.w_head.transpose() * hc).transpose();
  for (Eigen::Index k = 0; k < m; ++k) out[subs[static_cast<size_t>(k)].index] = sigmoid(logits(k) + params_.b_head);
  return out;
}

Eigen::MatrixXd GruModel::embed(std::span<const Transaction> seq) const {
  const auto toks = window_tokens(seq);
  MatrixXd x(hyper_.input_dim(), static_cast<Eigen::Index>(toks.size()));
  for (size_t t = 0; t < toks.size(); ++t)
    for (size_t c = 0; c < kNumChannels; ++c)
      x.block(offsets_[c], static_cast<Eigen::Index>(t), hyper_.embedding_dims[c], 1) =
          params_.embeddings[c].row(toks[t].tokens[c]).transpose();
  return x;
}

double GruModel::logit_from_embedded(const Eigen::MatrixXd& x) const {
  Tape tape;
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    tape.x.push_back(x.col(t));
    tape.active.push_back({1});
  }
  if (tape.x.empty()) return params_.b_head;
  forward(params_, hyper_.hidden, tape);
  return params_.w_head.dot(tape.h.back().col(0)) + params_.b_head;
}

EmbeddingGradient GruModel::embedding_gradient(std::span<const Transaction> seq) const {
  const MatrixXd x = embed(seq);
  Tape tape;
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    tape.x.push_back(x.col(t));
    tape.active.push_back({1});
  }
  EmbeddingGradient g;
  g.grad = MatrixXd::Zero(x.rows(), x.cols());
  g.window_offset = static_cast<int>(window_start(seq.size()));
  g.offsets = offsets_;
  g.dims = hyper_.embedding_dims;
  if (tape.x.empty()) return g;
  forward(params_, hyper_.hidden, tape);
  const auto dx = backward(params_, hyper_.hidden, tape, MatrixXd(params_.w_head), nullptr);
  for (size_t t = 0; t < dx.size(); ++t) g.grad.col(static_cast<Eigen::Index>(t)) = dx[t].col(0);
  return g;
}

Json GruModel::to_json() const {
  Json j;
  j["kind"] = kind();
  j["cardinalities"] = cards_;
  j["hyper"] = hyper_.to_json();
  j["binner"] = binner_.to_json();
  Json emb = Json::array();
  for (const auto& e : params_.embeddings) emb.push_back(tensor_to_json(e));
  j["embeddings"] = std::move(emb);
  j["w_ih"] = tensor_to_json(params_.w_ih);
  j["w_hh"] = tensor_to_json(params_.w_hh);
  j["b_ih"] = tensor_to_json(params_.b_ih);
  j["b_hh"] = tensor_to_json(params_.b_hh);
  j["w_head"] = tensor_to_json(params_.w_head);
  j["b_head"] = params_.b_head;
  if (!metrics.is_null()) j["metrics"] = metrics;
  return j;
}

std::shared_ptr<GruModel> GruModel::from_json(const Json& j) {
  const auto cards = j.at("cardinalities").get<std::array<int, kNumChannels>>();
  const GruHyper hyper = GruHyper::from_json(j.at("hyper"));
  const Eigen::Index H = hyper.hidden, D = hyper.input_dim();
  GruParams p;
  const auto& emb = j.at("embeddings");
  if (emb.size() != kNumChannels) throw Error("model file has the wrong number of embedding tables");
  for (size_t c = 0; c < kNumChannels; ++c) p.embeddings[c] = tensor_from_json(emb[c], cards[c], hyper.embedding_dims[c]);
  p.w_ih = tensor_from_json(j.at("w_ih"), 3 * H, D);
  p.w_hh = tensor_from_json(j.at("w_hh"), 3 * H, H);
  p.b_ih = tensor_from_json(j.at("b_ih"), 3 * H, 1);
  p.b_hh = tensor_from_json(j.at("b_hh"), 3 * H, 1);
  p.w_head = tensor_from_json(j.at("w_head"), H, 1);
  p.b_head = j.at("b_head").get<double>();
  auto m = std::make_shared<GruModel>(AmountBinner::from_json(j.at("binner")), cards, hyper, std::move(p));
  if (j.contains("metrics")) m->metrics = j.at("metrics");
  return m;
}

int nearest_token(const Eigen::MatrixXd& table, std::span<const double> v, std::span<const int> allowed) {
  if (static_cast<Eigen::Index>(v.size()) != table.cols()) throw Error("vector dimension does not match the table");
  const Eigen::Map<const Eigen::RowVectorXd> q(v.data(), static_cast<Eigen::Index>(v.size()));
  int best = -1;
  double best_d = 0.0;
  auto consider = [&](int row) {
    const double d = (table.row(row) - q).squaredNorm();
    if (best < 0 || d < best_d || (d == best_d && row < best)) {
      best = row;
      best_d = d;
    }
  };
  if (allowed.empty()) {
    for (Eigen::Index r = 0; r < table.rows(); ++r) consider(static_cast<int>(r));
  } else {
    for (int r : allowed) {
      if (r < 0 || r >= table.rows()) throw Error("allowed token out of range");
      consider(r);
    }
  }
  if (best < 0) throw Error("nearest_token over an empty table");
  return best;
}

std::shared_ptr<GruModel> train_gru(std::span<const ClientSequence> train, const AmountBinner& binner, int n_mcc,
                                    int n_currency, const GruHyper& hyper, GruTrainReport* report) {
  hyper.validate();
  std::vector<size_t> labeled;
  for (size_t i = 0; i < train.size(); ++i)
    if (train[i].label && !train[i].transactions.empty()) labeled.push_back(i);
  if (labeled.empty()) throw Error("train_gru needs labeled sequences");
  const auto cards = channel_cardinalities(n_mcc, n_currency);
  GruParams params = init_gru_params(cards, hyper);
  // A throwaway model provides windowing and tokenization.
  const GruModel shape(binner, cards, hyper, params);
  std::vector<std::vector<TokenizedTransaction>> toks(train.size());
  for (size_t i : labeled) {
    const auto& tx = train[i].transactions;
    toks[i] = tokenize(std::span<const Transaction>(tx).subspan(shape.window_start(tx.size())), binner);
  }

  const int H = hyper.hidden, D = hyper.input_dim();
  std::array<int, kNumChannels> offsets{};
  for (size_t c = 1; c < kNumChannels; ++c) offsets[c] = offsets[c - 1] + hyper.embedding_dims[c - 1];
  GruParams m1 = zeros_like(params), m2 = zeros_like(params);
  Rng rng(derive_seed(hyper.seed, "gru.train"));
  const double keep_channel = 1.0 / (1.0 - hyper.spatial_dropout);
  const double keep_head = 1.0 / (1.0 - hyper.head_dropout);
  std::vector<size_t> order = labeled;
  int64_t step = 0;
  GruTrainReport rep;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);
    double epoch_loss = 0.0;
    for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(hyper.batch_size)) {
      const size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(hyper.batch_size));
      const auto B = static_cast<Eigen::Index>(b1 - b0);
      size_t steps = 0;
      for (size_t k = b0; k < b1; ++k) steps = std::max(steps, toks[order[k]].size());
      MatrixXd channel_scale(kNumChannels, B);
      for (Eigen::Index b = 0; b < B; ++b)
        for (int c = 0; c < kNumChannels; ++c)
          channel_scale(c, b) = uniform01(rng) < hyper.spatial_dropout ? 0.0 : keep_channel;
      MatrixXd head_mask(H, B);
      for (Eigen::Index b = 0; b < B; ++b)
        for (int u = 0; u < H; ++u) head_mask(u, b) = uniform01(rng) < hyper.head_dropout ? 0.0 : keep_head;

      Tape tape;
      tape.x.assign(steps, MatrixXd::Zero(D, B));
      tape.active.assign(steps, std::vector<char>(static_cast<size_t>(B), 0));
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto& seq = toks[order[b0 + static_cast<size_t>(b)]];
        const size_t pad = steps - seq.size();
        for (size_t t = 0; t < seq.size(); ++t) {
          tape.active[pad + t][static_cast<size_t>(b)] = 1;
          for (size_t c = 0; c < kNumChannels; ++c)
            tape.x[pad + t].block(offsets[c], b, hyper.embedding_dims[c], 1) =
                channel_scale(static_cast<Eigen::Index>(c), b) * params.embeddings[c].row(seq[t].tokens[c]).transpose();
        }
      }
      forward(params, H, tape);
      const MatrixXd hd = tape.h.back().cwiseProduct(head_mask);
      const Eigen::RowVectorXd logits = (params.w_head.transpose() * hd).array() + params.b_head;
      Eigen::RowVectorXd dlogit(B);
      double batch_loss = 0.0;
      for (Eigen::Index b = 0; b < B; ++b) {
        const double y = *train[order[b0 + static_cast<size_t>(b)]].label;
        batch_loss += bce_with_logit(logits(b), y);
        dlogit(b) = (sigmoid(logits(b)) - y) / static_cast<double>(B);
      }
      batch_loss /= static_cast<double>(B);
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite GRU loss at epoch " << epoch << ", batch starting " << b0 << " (logit range "
            << logits.minCoeff() << ".." << logits.maxCoeff() << ")";
        throw Error(msg.str());
      }
      epoch_loss += batch_loss * static_cast<double>(B);

      GruParams grad = zeros_like(params);
      grad.w_head = hd * dlogit.transpose();
      grad.b_head = dlogit.sum();
      const MatrixXd dh = (params.w_head * dlogit).cwiseProduct(head_mask);
      const auto dx = backward(params, H, tape, dh, &grad);
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto& seq = toks[order[b0 + static_cast<size_t>(b)]];
        const size_t pad = steps - seq.size();
        for (size_t t = 0; t < seq.size(); ++t)
          for (size_t c = 0; c < kNumChannels; ++c) {
            const double s = channel_scale(static_cast<Eigen::Index>(c), b);
            if (s == 0.0) continue;
            grad.embeddings[c].row(seq[t].tokens[c]) +=
                s * dx[pad + t].block(offsets[c], b, hyper.embedding_dims[c], 1).transpose();
          }
      }

      ++step;
      const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
      const double lr = hyper.learning_rate, wd = hyper.weight_decay;
      const double b1c = hyper.beta1, b2c = hyper.beta2, eps = hyper.adam_eps;
      for_each_tensor(params, grad, m1, m2, [&](double* p, double* g, double* m, double* v, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) {
          p[i] *= 1.0 - lr * wd;
          m[i] = b1c * m[i] + (1.0 - b1c) * g[i];
          v[i] = b2c * v[i] + (1.0 - b2c) * g[i] * g[i];
          p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
      });
    }
    rep.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  if (!params.all_finite()) throw Error("GRU training produced non-finite parameters");
  rep.final_train_loss = rep.epoch_loss.empty() ? 0.0 : rep.epoch_loss.back();
  auto model = std::make_shared<GruModel>(binner, cards, hyper, std::move(params));
  model->metrics["hyper"] = hyper.to_json();
  model->metrics["final_train_loss"] = rep.final_train_loss;
  if (report) *report = std::move(rep);
  return model;
}

}  // namespace txadv
