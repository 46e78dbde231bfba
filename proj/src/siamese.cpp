/*
 * Copyright 2026 The kstroke Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "kstroke/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "kstroke/errors.hpp"
#include "kstroke/eval.hpp"

namespace kstroke {
namespace {

constexpr double kScoreClamp = 1e-7;
constexpr double kNormFloor = 1e-12;

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec sigm(const Vec& v) { return v.unaryExpr([](double x) { return sigm(x); }); }
Vec tanhv(const Vec& v) { return v.array().tanh().matrix(); }

// ---------------------------------------------------------------------------
// LSTM

struct LstmStep {
  Vec x, hr, i, f, g, o, c_prev, c, tc;
};

struct LstmTrace {
  std::vector<LstmStep> steps;
  Vec rmask;  // recurrent dropout mask (scaled); empty when disabled
};

std::vector<Vec> lstm_forward(const LstmParams& p, const std::vector<Vec>& xs, LstmTrace* trace) {
  const long H = p.U.cols();
  Vec h = Vec::Zero(H), c = Vec::Zero(H);
  std::vector<Vec> out;
  out.reserve(xs.size());
  for (const Vec& x : xs) {
    Vec hr = (trace && trace->rmask.size() > 0) ? Vec(h.cwiseProduct(trace->rmask)) : h;
    const Vec a = p.W * x + p.U * hr + p.b;
    LstmStep s;
    s.i = sigm(a.segment(0, H));
    s.f = sigm(a.segment(H, H));
    s.g = tanhv(a.segment(2 * H, H));
    s.o = sigm(a.segment(3 * H, H));
    s.c_prev = c;
    c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
    s.c = c;
    s.tc = tanhv(c);
    h = s.o.cwiseProduct(s.tc);
    out.push_back(h);
    if (trace) {
      s.x = x;
      s.hr = std::move(hr);
      trace->steps.push_back(std::move(s));
    }
  }
  return out;
}

// Backpropagates external gradients on each h_t; returns gradients on x_t.
std::vector<Vec> lstm_backward(const LstmParams& p, const LstmTrace& tr,
                               const std::vector<Vec>& dh_ext, LstmParams& g) {
  const long H = p.U.cols();
  const std::size_t T = tr.steps.size();
  std::vector<Vec> dx(T);
  Vec dh_next = Vec::Zero(H), dc_next = Vec::Zero(H);
  Vec da(4 * H);
  for (std::size_t k = T; k-- > 0;) {
    const LstmStep& s = tr.steps[k];
    const Vec dh = dh_ext[k] + dh_next;
    const Vec d_o = dh.cwiseProduct(s.tc);
    const Vec dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct(
                                 (Vec::Ones(H) - s.tc.cwiseProduct(s.tc)));
    const Vec di = dc.cwiseProduct(s.g);
    const Vec dg = dc.cwiseProduct(s.i);
    const Vec df = dc.cwiseProduct(s.c_prev);
    dc_next = dc.cwiseProduct(s.f);
    da.segment(0, H) = di.cwiseProduct(s.i.cwiseProduct(Vec::Ones(H) - s.i));
    da.segment(H, H) = df.cwiseProduct(s.f.cwiseProduct(Vec::Ones(H) - s.f));
    da.segment(2 * H, H) = dg.cwiseProduct(Vec::Ones(H) - s.g.cwiseProduct(s.g));
    da.segment(3 * H, H) = d_o.cwiseProduct(s.o.cwiseProduct(Vec::Ones(H) - s.o));
    g.W.noalias() += da * s.x.transpose();
    g.U.noalias() += da * s.hr.transpose();
    g.b += da;
    dx[k] = p.W.transpose() * da;
    Vec dhr = p.U.transpose() * da;
    dh_next = tr.rmask.size() > 0 ? Vec(dhr.cwiseProduct(tr.rmask)) : dhr;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization over a set of vectors.

struct BnTrace {
  std::vector<Vec> xhat;
  Vec inv_std;
  bool batch_stats = true;
};

std::vector<Vec> bn_forward(const BatchNormParams& p, const std::vector<const Vec*>& xs,
                            bool batch_stats, double eps, BnTrace& tr, Vec* mean_out,
                            Vec* var_out) {
  const long H = p.gamma.size();
  Vec mean = Vec::Zero(H), var = Vec::Zero(H);
  if (batch_stats && !xs.empty()) {
    for (const Vec* x : xs) mean += *x;
    mean /= static_cast<double>(xs.size());
    for (const Vec* x : xs) var += (*x - mean).cwiseAbs2();
    var /= static_cast<double>(xs.size());
  } else {
    mean = p.running_mean;
    var = p.running_var;
  }
  if (mean_out) *mean_out = mean;
  if (var_out) *var_out = var;
  tr.batch_stats = batch_stats;
  tr.inv_std = (var.array() + eps).rsqrt().matrix();
  tr.xhat.clear();
  std::vector<Vec> ys;
  ys.reserve(xs.size());
  for (const Vec* x : xs) {
    Vec xh = (*x - mean).cwiseProduct(tr.inv_std);
    ys.push_back(p.gamma.cwiseProduct(xh) + p.beta);
    tr.xhat.push_back(std::move(xh));
  }
  return ys;
}

std::vector<Vec> bn_backward(const BatchNormParams& p, const BnTrace& tr,
                             const std::vector<Vec>& dy, BatchNormParams& g) {
  const std::size_t n = dy.size();
  const long H = p.gamma.size();
  std::vector<Vec> dx(n);
  if (n == 0) return dx;
  Vec sum_dxhat = Vec::Zero(H), sum_dxhat_xhat = Vec::Zero(H);
  std::vector<Vec> dxhat(n);
  for (std::size_t k = 0; k < n; ++k) {
    g.gamma += dy[k].cwiseProduct(tr.xhat[k]);
    g.beta += dy[k];
    dxhat[k] = dy[k].cwiseProduct(p.gamma);
    sum_dxhat += dxhat[k];
    sum_dxhat_xhat += dxhat[k].cwiseProduct(tr.xhat[k]);
  }
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (tr.batch_stats) {
      dx[k] = (tr.inv_std / nn)
                  .cwiseProduct(nn * dxhat[k] - sum_dxhat - tr.xhat[k].cwiseProduct(sum_dxhat_xhat));
    } else {
      dx[k] = dxhat[k].cwiseProduct(tr.inv_std);
    }
  }
  return dx;
}

Vec dropout_mask(long n, double rate, Rng& rng) {
  Vec m(n);
  const double keep = 1.0 - rate;
  for (long i = 0; i < n; ++i) m[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Batched encoder pass.

struct SeqTrace {
  LstmTrace l1;
  std::vector<Vec> h1;
  std::vector<Vec> z1;     // tanh(BN(h1)), before dropout
  std::vector<Vec> m1;     // dropout masks (empty when off)
  std::vector<Vec> z1d;
  LstmTrace l2;
  Vec h2;
  Vec z2, m2, z2d;
};

struct BatchTrace {
  std::vector<SeqTrace> seqs;
  BnTrace bn1, bn2;
  std::vector<std::pair<std::size_t, std::size_t>> bn1_index;  // (seq, step)
  Vec bn1_mean, bn1_var, bn2_mean, bn2_var;
};

std::vector<Vec> inputs_of(const SeqSample& s) {
  std::vector<Vec> xs;
  for (std::size_t t = 0; t < s.triplets.size(); ++t) {
    if (!s.mask[t]) continue;
    Vec x(3);
    x << s.triplets[t][0], s.triplets[t][1], s.triplets[t][2];
    xs.push_back(std::move(x));
  }
  return xs;
}

std::vector<Vec> encode(const SiameseModel& model, const std::vector<const SeqSample*>& batch,
                        const ForwardOptions& opts, Rng* rng, BatchTrace& bt) {
  const SiameseParams& p = model.params;
  const SiameseConfig& cfg = model.config;
  const long H = static_cast<long>(cfg.hidden_dim);
  const bool drop = opts.dropout && rng != nullptr;
  bt.seqs.assign(batch.size(), SeqTrace{});

  std::vector<const Vec*> all_h1;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    SeqTrace& st = bt.seqs[n];
    if (drop && cfg.recurrent_dropout > 0.0) st.l1.rmask = dropout_mask(H, cfg.recurrent_dropout, *rng);
    st.h1 = lstm_forward(p.lstm1, inputs_of(*batch[n]), &st.l1);
  }
  for (std::size_t n = 0; n < batch.size(); ++n) {
    for (std::size_t t = 0; t < bt.seqs[n].h1.size(); ++t) {
      all_h1.push_back(&bt.seqs[n].h1[t]);
      bt.bn1_index.emplace_back(n, t);
    }
  }
  const std::vector<Vec> y1 = bn_forward(p.bn1, all_h1, opts.batch_stats, cfg.bn_eps, bt.bn1,
                                         &bt.bn1_mean, &bt.bn1_var);
  for (std::size_t k = 0; k < y1.size(); ++k) {
    SeqTrace& st = bt.seqs[bt.bn1_index[k].first];
    Vec z = tanhv(y1[k]);
    if (drop && cfg.dropout > 0.0) {
      Vec m = dropout_mask(H, cfg.dropout, *rng);
      st.z1d.push_back(z.cwiseProduct(m));
      st.m1.push_back(std::move(m));
    } else {
      st.z1d.push_back(z);
    }
    st.z1.push_back(std::move(z));
  }

  std::vector<const Vec*> all_h2;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    SeqTrace& st = bt.seqs[n];
    std::vector<Vec> us;
    us.reserve(st.z1d.size());
    for (const Vec& z : st.z1d) us.push_back(p.fc1.P * z + p.fc1.c);
    if (drop && cfg.recurrent_dropout > 0.0) st.l2.rmask = dropout_mask(H, cfg.recurrent_dropout, *rng);
    const std::vector<Vec> h2s = lstm_forward(p.lstm2, us, &st.l2);
    st.h2 = h2s.empty() ? Vec(Vec::Zero(H)) : h2s.back();
    all_h2.push_back(&st.h2);
  }
  const std::vector<Vec> y2 = bn_forward(p.bn2, all_h2, opts.batch_stats, cfg.bn_eps, bt.bn2,
                                         &bt.bn2_mean, &bt.bn2_var);
  std::vector<Vec> emb;
  emb.reserve(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    SeqTrace& st = bt.seqs[n];
    st.z2 = tanhv(y2[n]);
    st.z2d = st.z2;  // no dropout directly before the embedding
    emb.push_back(p.fc2.P * st.z2d + p.fc2.c);
  }
  return emb;
}

struct PairTerm {
  double loss = 0.0;
  Vec da, db;
};

PairTerm pair_term(const Vec& a, const Vec& b, int label) {
  PairTerm t;
  t.da = Vec::Zero(a.size());
  t.db = Vec::Zero(b.size());
  const double na = a.norm(), nb = b.norm();
  if (na < kNormFloor || nb < kNormFloor) {
    t.loss = std::log(2.0);
    return t;
  }
  const double cos = a.dot(b) / (na * nb);
  const double raw = (1.0 - cos) / 2.0;
  const double s = std::clamp(raw, kScoreClamp, 1.0 - kScoreClamp);
  t.loss = label == 1 ? -std::log(s) : -std::log(1.0 - s);
  if (raw <= kScoreClamp || raw >= 1.0 - kScoreClamp) return t;
  const double dl_ds = label == 1 ? -1.0 / s : 1.0 / (1.0 - s);
  const double dl_dcos = -0.5 * dl_ds;
  t.da = dl_dcos * (b / (na * nb) - cos * a / (na * na));
  t.db = dl_dcos * (a / (na * nb) - cos * b / (nb * nb));
  return t;
}

std::vector<const SeqSample*> interleave(const PairBatch& batch) {
  if (batch.first.size() != batch.labels.size() || batch.second.size() != batch.labels.size()) {
    throw ConfigError("pair batch sides and labels differ in length");
  }
  std::vector<const SeqSample*> seqs;
  seqs.reserve(2 * batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    seqs.push_back(&batch.first[k]);
    seqs.push_back(&batch.second[k]);
  }
  return seqs;
}

double l2_penalty(const SiameseParams& p) {
  return p.lstm1.W.squaredNorm() + p.lstm1.U.squaredNorm() + p.lstm2.W.squaredNorm() +
         p.lstm2.U.squaredNorm() + p.fc1.P.squaredNorm() + p.fc2.P.squaredNorm();
}

bool is_weight(std::string_view name) {
  return name.ends_with(".W") || name.ends_with(".U") || name.ends_with(".P");
}

std::vector<double> flatten(const SiameseParams& p) {
  std::vector<double> out;
  for_each_tensor(p, [&](std::string_view, const double* d, long r, long c) {
    out.insert(out.end(), d, d + r * c);
  });
  return out;
}

void unflatten(const std::vector<double>& flat, SiameseParams& p) {
  std::size_t k = 0;
  for_each_tensor(p, [&](std::string_view, double* d, long r, long c) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), r * c, d);
    k += static_cast<std::size_t>(r * c);
  });
}

void update_running(BatchNormParams& bn, const Vec& mean, const Vec& var, double momentum) {
  bn.running_mean = (1.0 - momentum) * bn.running_mean + momentum * mean;
  bn.running_var = (1.0 - momentum) * bn.running_var + momentum * var;
}

LstmParams init_lstm(long in, long H, Rng& rng) {
  LstmParams p;
  const double aw = std::sqrt(6.0 / static_cast<double>(in + H));
  const double au = 1.0 / std::sqrt(static_cast<double>(H));
  p.W = Mat(4 * H, in);
  p.U = Mat(4 * H, H);
  for (long i = 0; i < p.W.size(); ++i) p.W.data()[i] = rng.uniform(-aw, aw);
  for (long i = 0; i < p.U.size(); ++i) p.U.data()[i] = rng.uniform(-au, au);
  p.b = Vec::Zero(4 * H);
  p.b.segment(H, H).setOnes();  // forget-gate bias
  return p;
}

DenseParams init_dense(long in, long out, Rng& rng) {
  DenseParams d;
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  d.P = Mat(out, in);
  for (long i = 0; i < d.P.size(); ++i) d.P.data()[i] = rng.uniform(-a, a);
  d.c = Vec::Zero(out);
  return d;
}

BatchNormParams init_bn(long H) {
  return {Vec::Ones(H), Vec::Zero(H), Vec::Zero(H), Vec::Ones(H)};
}

}  // namespace

std::size_t SeqSample::valid_length() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

SeqSample prepare_sequence(const Window& window, std::size_t M) {
  SeqSample s;
  s.label = window.label;
  s.triplets.assign(M, {0.0, 0.0, 0.0});
  s.mask.assign(M, false);
  const std::size_t n = std::min(window.events.size(), M);
  if (n == 0) return s;
  double tmin = window.events[0].timestamp, tmax = tmin;
  for (std::size_t i = 0; i < n; ++i) {
    tmin = std::min(tmin, window.events[i].timestamp);
    tmax = std::max(tmax, window.events[i].timestamp);
  }
  const double span = tmax - tmin;
  for (std::size_t i = 0; i < n; ++i) {
    const KeyEvent& e = window.events[i];
    s.triplets[i] = {e.action == KeyAction::Up ? 1.0 : 0.0, e.keycode / 255.0,
                     span > 0.0 ? (e.timestamp - tmin) / span : 0.0};
    s.mask[i] = true;
  }
  return s;
}

void SiameseConfig::validate() const {
  if (M < 25 || M > 500) throw ConfigError("sequence length M must lie in [25, 500]");
  if (batch_size < 32 || batch_size > 512 || (batch_size & (batch_size - 1)) != 0) {
    throw ConfigError("batch size must be a power of two in [32, 512]");
  }
  if (hidden_dim == 0) throw ConfigError("hidden_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0 || recurrent_dropout < 0.0 || recurrent_dropout >= 1.0) {
    throw ConfigError("dropout rates must lie in [0, 1)");
  }
  if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (l2 < 0.0) throw ConfigError("l2 must be non-negative");
}

SiameseParams SiameseParams::zeros_like(const SiameseParams& p) {
  SiameseParams z;
  auto zl = [](const LstmParams& l) {
    return LstmParams{Mat::Zero(l.W.rows(), l.W.cols()), Mat::Zero(l.U.rows(), l.U.cols()),
                      Vec::Zero(l.b.size())};
  };
  auto zb = [](const BatchNormParams& b) {
    return BatchNormParams{Vec::Zero(b.gamma.size()), Vec::Zero(b.beta.size()),
                           Vec::Zero(b.gamma.size()), Vec::Zero(b.gamma.size())};
  };
  auto zd = [](const DenseParams& d) {
    return DenseParams{Mat::Zero(d.P.rows(), d.P.cols()), Vec::Zero(d.c.size())};
  };
  z.lstm1 = zl(p.lstm1);
  z.lstm2 = zl(p.lstm2);
  z.bn1 = zb(p.bn1);
  z.bn2 = zb(p.bn2);
  z.fc1 = zd(p.fc1);
  z.fc2 = zd(p.fc2);
  return z;
}

std::size_t SiameseParams::trainable_count() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](std::string_view, const double*, long r, long c) {
    n += static_cast<std::size_t>(r * c);
  });
  return n;
}

void for_each_tensor(SiameseParams& p,
                     const std::function<void(std::string_view, double*, long, long)>& fn) {
  fn("lstm1.W", p.lstm1.W.data(), p.lstm1.W.rows(), p.lstm1.W.cols());
  fn("lstm1.U", p.lstm1.U.data(), p.lstm1.U.rows(), p.lstm1.U.cols());
  fn("lstm1.b", p.lstm1.b.data(), p.lstm1.b.size(), 1);
  fn("bn1.gamma", p.bn1.gamma.data(), p.bn1.gamma.size(), 1);
  fn("bn1.beta", p.bn1.beta.data(), p.bn1.beta.size(), 1);
  fn("fc1.P", p.fc1.P.data(), p.fc1.P.rows(), p.fc1.P.cols());
  fn("fc1.c", p.fc1.c.data(), p.fc1.c.size(), 1);
  fn("lstm2.W", p.lstm2.W.data(), p.lstm2.W.rows(), p.lstm2.W.cols());
  fn("lstm2.U", p.lstm2.U.data(), p.lstm2.U.rows(), p.lstm2.U.cols());
  fn("lstm2.b", p.lstm2.b.data(), p.lstm2.b.size(), 1);
  fn("bn2.gamma", p.bn2.gamma.data(), p.bn2.gamma.size(), 1);
  fn("bn2.beta", p.bn2.beta.data(), p.bn2.beta.size(), 1);
  fn("fc2.P", p.fc2.P.data(), p.fc2.P.rows(), p.fc2.P.cols());
  fn("fc2.c", p.fc2.c.data(), p.fc2.c.size(), 1);
}

void for_each_tensor(const SiameseParams& p,
                     const std::function<void(std::string_view, const double*, long, long)>& fn) {
  for_each_tensor(const_cast<SiameseParams&>(p),
                  [&](std::string_view name, double* d, long r, long c) { fn(name, d, r, c); });
}

SiameseModel init_siamese(const SiameseConfig& cfg, std::uint64_t seed) {
  if (cfg.hidden_dim == 0) throw ConfigError("hidden_dim must be positive");
  const long H = static_cast<long>(cfg.hidden_dim);
  Rng rng(seed);
  SiameseModel m;
  m.config = cfg;
  m.params.lstm1 = init_lstm(3, H, rng);
  m.params.bn1 = init_bn(H);
  m.params.fc1 = init_dense(H, H, rng);
  m.params.lstm2 = init_lstm(H, H, rng);
  m.params.bn2 = init_bn(H);
  m.params.fc2 = init_dense(H, H, rng);
  return m;
}

Vec embed(const SiameseModel& model, const SeqSample& s) {
  BatchTrace bt;
  const std::vector<const SeqSample*> batch = {&s};
  return encode(model, batch, {false, false}, nullptr, bt).front();
}

double score_embeddings(const Vec& a, const Vec& b, bool* degenerate) {
  const double na = a.norm(), nb = b.norm();
  if (na < kNormFloor || nb < kNormFloor) {
    if (degenerate) *degenerate = true;
    return 0.5;
  }
  if (degenerate) *degenerate = false;
  const double cos = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return (1.0 - cos) / 2.0;
}

double pair_score(const SiameseModel& model, const SeqSample& a, const SeqSample& b,
                  bool* degenerate) {
  BatchTrace ta, tb;
  const Vec ea = encode(model, {&a}, {false, false}, nullptr, ta).front();
  const Vec eb = encode(model, {&b}, {false, false}, nullptr, tb).front();
  return score_embeddings(ea, eb, degenerate);
}

std::vector<PairBatch> sample_pair_batches(std::span<const SeqSample> samples,
                                           std::size_t pairs_per_batch, std::size_t n_batches,
                                           std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].label.is_assisted ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) throw ConfigError("pair sampling needs both classes");
  Rng rng(seed);
  auto pick_two = [&](const std::vector<std::size_t>& cls) {
    const std::size_t a = cls[rng.index(cls.size())];
    if (cls.size() == 1) return std::pair{a, a};
    std::size_t b = a;
    while (b == a) b = cls[rng.index(cls.size())];
    return std::pair{a, b};
  };
  std::vector<PairBatch> batches(n_batches);
  for (PairBatch& batch : batches) {
    for (std::size_t k = 0; k < pairs_per_batch; ++k) {
      std::size_t a, b;
      int label;
      if (k % 2 == 0) {
        a = neg[rng.index(neg.size())];
        b = pos[rng.index(pos.size())];
        if (rng.bernoulli(0.5)) std::swap(a, b);
        label = 1;
      } else {
        std::tie(a, b) = pick_two((k / 2) % 2 == 0 ? neg : pos);
        label = 0;
      }
      batch.first.push_back(samples[a]);
      batch.second.push_back(samples[b]);
      batch.labels.push_back(label);
    }
  }
  return batches;
}

BatchGradient loss_and_gradient(const SiameseModel& model, const PairBatch& batch,
                                const ForwardOptions& opts, Rng& rng) {
  const SiameseParams& p = model.params;
  const std::vector<const SeqSample*> seqs = interleave(batch);
  BatchTrace bt;
  const std::vector<Vec> emb = encode(model, seqs, opts, &rng, bt);

  BatchGradient out;
  out.grad = SiameseParams::zeros_like(p);
  SiameseParams& g = out.grad;
  std::vector<Vec> de(seqs.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    PairTerm t = pair_term(emb[2 * k], emb[2 * k + 1], batch.labels[k]);
    out.loss += t.loss;
    de[2 * k] = std::move(t.da);
    de[2 * k + 1] = std::move(t.db);
  }

  // Dense 2, dropout, tanh.
  std::vector<Vec> dy2(seqs.size());
  for (std::size_t n = 0; n < seqs.size(); ++n) {
    const SeqTrace& st = bt.seqs[n];
    g.fc2.P.noalias() += de[n] * st.z2d.transpose();
    g.fc2.c += de[n];
    Vec dz = p.fc2.P.transpose() * de[n];
    if (st.m2.size() > 0) dz = dz.cwiseProduct(st.m2);
    dy2[n] = dz.cwiseProduct(Vec::Ones(dz.size()) - st.z2.cwiseAbs2());
  }
  const std::vector<Vec> dh2 = bn_backward(p.bn2, bt.bn2, dy2, g.bn2);

  // LSTM 2 (gradient enters at the last valid step), dense 1, dropout, tanh.
  std::vector<Vec> dy1(bt.bn1_index.size());
  std::size_t flat = 0;
  for (std::size_t n = 0; n < seqs.size(); ++n) {
    const SeqTrace& st = bt.seqs[n];
    const std::size_t T = st.l2.steps.size();
    if (T == 0) continue;
    std::vector<Vec> dh_ext(T, Vec::Zero(p.lstm2.U.cols()));
    dh_ext.back() = dh2[n];
    const std::vector<Vec> du = lstm_backward(p.lstm2, st.l2, dh_ext, g.lstm2);
    for (std::size_t t = 0; t < T; ++t) {
      g.fc1.P.noalias() += du[t] * st.z1d[t].transpose();
      g.fc1.c += du[t];
      Vec dz = p.fc1.P.transpose() * du[t];
      if (!st.m1.empty()) dz = dz.cwiseProduct(st.m1[t]);
      dy1[flat + t] = dz.cwiseProduct(Vec::Ones(dz.size()) - st.z1[t].cwiseAbs2());
    }
    flat += T;
  }
  const std::vector<Vec> dh1 = bn_backward(p.bn1, bt.bn1, dy1, g.bn1);

  flat = 0;
  for (std::size_t n = 0; n < seqs.size(); ++n) {
    const SeqTrace& st = bt.seqs[n];
    const std::size_t T = st.l1.steps.size();
    if (T == 0) continue;
    std::vector<Vec> dh_ext(dh1.begin() + static_cast<std::ptrdiff_t>(flat),
                            dh1.begin() + static_cast<std::ptrdiff_t>(flat + T));
    lstm_backward(p.lstm1, st.l1, dh_ext, g.lstm1);
    flat += T;
  }

  out.bn1_mean = bt.bn1_mean;
  out.bn1_var = bt.bn1_var;
  out.bn2_mean = bt.bn2_mean;
  out.bn2_var = bt.bn2_var;
  return out;
}

double objective(const SiameseModel& model, const PairBatch& batch, const ForwardOptions& opts,
                 std::uint64_t dropout_seed) {
  Rng rng(dropout_seed);
  BatchTrace bt;
  const std::vector<Vec> emb = encode(model, interleave(batch), opts, &rng, bt);
  double loss = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    loss += pair_term(emb[2 * k], emb[2 * k + 1], batch.labels[k]).loss;
  }
  return loss + 0.5 * model.config.l2 * l2_penalty(model.params);
}

SiameseModel train_siamese(std::span<const PairBatch> batches, const SiameseConfig& cfg,
                           std::uint64_t seed, TrainHistory* history) {
  cfg.validate();
  return train_siamese(init_siamese(cfg, derive_seed(seed, 1)), batches, seed, history);
}

SiameseModel train_siamese(SiameseModel model, std::span<const PairBatch> batches,
                           std::uint64_t seed, TrainHistory* history) {
  const SiameseConfig& cfg = model.config;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

  std::vector<bool> weight_mask;
  for_each_tensor(model.params, [&](std::string_view name, const double*, long r, long c) {
    weight_mask.insert(weight_mask.end(), static_cast<std::size_t>(r * c), is_weight(name));
  });
  std::vector<double> theta = flatten(model.params);
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  Rng rng(derive_seed(seed, 2));
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_pairs = 0;
    for (const PairBatch& batch : batches) {
      if (batch.size() == 0) continue;
      BatchGradient bg = loss_and_gradient(model, batch, {true, true}, rng);
      if (!std::isfinite(bg.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", step " << step << " (lr " << cfg.lr
            << "); reduce the learning rate";
        throw TrainingError(msg.str());
      }
      epoch_loss += bg.loss;
      epoch_pairs += batch.size();
      const std::vector<double> grad = flatten(bg.grad);
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      ++step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        double gi = grad[i] * inv_b;
        if (weight_mask[i]) gi += cfg.l2 * theta[i];
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gi;
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gi * gi;
        theta[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
      }
      unflatten(theta, model.params);
      update_running(model.params.bn1, bg.bn1_mean, bg.bn1_var, cfg.bn_momentum);
      update_running(model.params.bn2, bg.bn2_mean, bg.bn2_var, cfg.bn_momentum);
    }
    if (history) {
      history->epoch_loss.push_back(epoch_pairs ? epoch_loss / static_cast<double>(epoch_pairs)
                                                : 0.0);
    }
  }
  if (cfg.epochs > 0) recalibrate_batch_norm(model, batches);
  return model;
}

void recalibrate_batch_norm(SiameseModel& model, std::span<const PairBatch> batches) {
  const long H = static_cast<long>(model.config.hidden_dim);
  Vec m1 = Vec::Zero(H), v1 = Vec::Zero(H), m2 = Vec::Zero(H), v2 = Vec::Zero(H);
  std::size_t n = 0;
  for (const PairBatch& batch : batches) {
    if (batch.size() == 0) continue;
    BatchTrace bt;
    encode(model, interleave(batch), {true, false}, nullptr, bt);
    if (bt.bn1_index.empty()) continue;
    m1 += bt.bn1_mean;
    v1 += bt.bn1_var;
    m2 += bt.bn2_mean;
    v2 += bt.bn2_var;
    ++n;
  }
  if (n == 0) return;
  const double inv = 1.0 / static_cast<double>(n);
  model.params.bn1.running_mean = m1 * inv;
  model.params.bn1.running_var = v1 * inv;
  model.params.bn2.running_mean = m2 * inv;
  model.params.bn2.running_var = v2 * inv;
}

double decision_threshold(const SiameseModel& model, const PairBatch& validation_pairs) {
  std::vector<ScoredLabel> scored;
  for (std::size_t k = 0; k < validation_pairs.size(); ++k) {
    scored.push_back({pair_score(model, validation_pairs.first[k], validation_pairs.second[k]),
                      validation_pairs.labels[k] == 1});
  }
  return roc_eer(scored).threshold;
}

GradientCheckResult gradient_check(const SiameseConfig& cfg_in, std::uint64_t seed,
                                   std::size_t n_pairs, double step) {
  SiameseConfig cfg = cfg_in;
  cfg.dropout = 0.0;
  cfg.recurrent_dropout = 0.0;
  SiameseModel model = init_siamese(cfg, seed);
  Rng rng(derive_seed(seed, 99));

  // Perturb normalization parameters away from their identity initialization.
  for (BatchNormParams* bn : {&model.params.bn1, &model.params.bn2}) {
    for (long i = 0; i < bn->gamma.size(); ++i) {
      bn->gamma[i] = rng.uniform(0.5, 1.5);
      bn->beta[i] = rng.uniform(-0.3, 0.3);
    }
  }

  auto random_sample = [&](bool assisted) {
    SeqSample s;
    s.label = {assisted};
    const std::size_t len = cfg.M / 2 + rng.index(cfg.M - cfg.M / 2 + 1);
    s.triplets.assign(cfg.M, {0.0, 0.0, 0.0});
    s.mask.assign(cfg.M, false);
    double t = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      t += rng.uniform();
      s.triplets[i] = {rng.bernoulli(0.5) ? 1.0 : 0.0, rng.uniform(), t};
      s.mask[i] = true;
    }
    for (std::size_t i = 0; i < len; ++i) s.triplets[i][2] /= t;
    return s;
  };
  PairBatch batch;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const int label = static_cast<int>(k % 2);
    batch.first.push_back(random_sample(false));
    batch.second.push_back(random_sample(label == 1));
    batch.labels.push_back(label);
  }

  const ForwardOptions opts{true, false};
  BatchGradient bg = loss_and_gradient(model, batch, opts, rng);
  std::vector<double> analytic = flatten(bg.grad);
  std::vector<double> theta = flatten(model.params);
  std::size_t offset = 0;
  for_each_tensor(model.params, [&](std::string_view name, const double*, long r, long c) {
    if (is_weight(name)) {
      for (long i = 0; i < r * c; ++i) {
        const std::size_t k = offset + static_cast<std::size_t>(i);
        analytic[k] += cfg.l2 * theta[k];
      }
    }
    offset += static_cast<std::size_t>(r * c);
  });

  GradientCheckResult result;
  result.n_parameters = theta.size();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double orig = theta[k];
    theta[k] = orig + step;
    unflatten(theta, model.params);
    const double up = objective(model, batch, opts, 0);
    theta[k] = orig - step;
    unflatten(theta, model.params);
    const double down = objective(model, batch, opts, 0);
    theta[k] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(analytic[k] - numeric) / denom);
  }
  unflatten(theta, model.params);
  return result;
}

}  // namespace kstroke
