#include "tal/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace tal {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd sigmoid_mat(const Eigen::MatrixXd& m) {
  return m.unaryExpr([](double x) { return sigmoid(x); });
}

template <class P, class Fn>
void visit_tensors(P& p, Fn&& fn) {
  for (auto& m : p.w) fn(m);
  for (auto& v : p.b) fn(v);
  fn(p.wz);
  fn(p.bz);
  fn(p.wc);
  fn(p.bc);
  fn(p.wo);
  fn(p.bo);
  fn(p.wb1);
  fn(p.bb1);
  fn(p.wb2);
  fn(p.bb2);
}

}  // namespace

double ScorerParams::squared_norm() const {
  double s = 0.0;
  visit_tensors(*this, [&](const auto& t) { s += t.squaredNorm(); });
  return s;
}

std::size_t ScorerParams::count() const {
  std::size_t n = 0;
  visit_tensors(*this, [&](const auto& t) { n += t.size(); });
  return n;
}

void ScorerParams::set_zero() {
  visit_tensors(*this, [](auto& t) { t.setZero(); });
}

void ScorerParams::add_scaled(const ScorerParams& other, double scale) {
  auto views = tensor_views(*this);
  auto oviews = tensor_views(other);
  for (std::size_t i = 0; i < views.size(); ++i)
    for (std::size_t j = 0; j < views[i].second; ++j)
      views[i].first[j] += scale * oviews[i].first[j];
}

void ScorerParams::scale(double s) {
  visit_tensors(*this, [&](auto& t) { t *= s; });
}

double ScorerParams::get_flat(std::size_t idx) const {
  for (auto [ptr, n] : tensor_views(*this)) {
    if (idx < n) return ptr[idx];
    idx -= n;
  }
  throw std::out_of_range("ScorerParams::get_flat");
}

void ScorerParams::add_flat(std::size_t idx, double delta) {
  for (auto [ptr, n] : tensor_views(*this)) {
    if (idx < n) {
      ptr[idx] += delta;
      return;
    }
    idx -= n;
  }
  throw std::out_of_range("ScorerParams::add_flat");
}

std::vector<std::pair<double*, std::size_t>> tensor_views(ScorerParams& p) {
  std::vector<std::pair<double*, std::size_t>> out;
  visit_tensors(p, [&](auto& t) {
    out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return out;
}

std::vector<std::pair<const double*, std::size_t>> tensor_views(
    const ScorerParams& p) {
  std::vector<std::pair<const double*, std::size_t>> out;
  visit_tensors(p, [&](const auto& t) {
    out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return out;
}

ScorerParams init_scorer(const ScorerConfig& cfg, std::uint64_t seed) {
  ScorerParams p;
  p.cfg = cfg;
  std::mt19937_64 rng(seed);
  auto uniform_init = [&](Eigen::MatrixXd& m, int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    m.resize(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = dist(rng);
  };
  int fan_in = cfg.input_dim();
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    Eigen::MatrixXd wl;
    uniform_init(wl, cfg.hidden_width, fan_in);
    p.w.push_back(std::move(wl));
    p.b.push_back(Eigen::VectorXd::Zero(cfg.hidden_width));
    fan_in = cfg.hidden_width;
  }
  const int concat = cfg.hidden_width + cfg.cell_dim;
  uniform_init(p.wz, cfg.cell_dim, concat);
  p.bz = Eigen::VectorXd::Zero(cfg.cell_dim);
  uniform_init(p.wc, cfg.cell_dim, concat);
  p.bc = Eigen::VectorXd::Zero(cfg.cell_dim);
  uniform_init(p.wo, 4, cfg.cell_dim);
  p.bo = Eigen::VectorXd::Zero(4);
  uniform_init(p.wb1, cfg.boundary_hidden, cfg.feature_dim);
  p.bb1 = Eigen::VectorXd::Zero(cfg.boundary_hidden);
  uniform_init(p.wb2, 2, cfg.boundary_hidden);
  p.bb2 = Eigen::VectorXd::Zero(2);
  return p;
}

ScorerParams zeros_like(const ScorerParams& p) {
  ScorerParams z = p;
  z.set_zero();
  return z;
}

Eigen::VectorXd interpolate_feature(const FeatureSequence& f, double t,
                                    Eigen::VectorXd* slope) {
  const int ts = f.length();
  if (ts == 1) {
    if (slope) *slope = Eigen::VectorXd::Zero(f.dim());
    return f.values.col(0);
  }
  const double pos_raw = t / f.step;
  const double hi = static_cast<double>(ts - 1);
  const double pos = std::clamp(pos_raw, 0.0, hi);
  const int k = std::min(static_cast<int>(pos), ts - 2);
  const double frac = pos - k;
  Eigen::VectorXd v =
      (1.0 - frac) * f.values.col(k) + frac * f.values.col(k + 1);
  if (slope) {
    if (pos_raw < 0.0 || pos_raw > hi)
      *slope = Eigen::VectorXd::Zero(f.dim());
    else
      *slope = (f.values.col(k + 1) - f.values.col(k)) / f.step;
  }
  return v;
}

Eigen::VectorXd soi_pool(const FeatureSequence& f, const Segment& x, int bins) {
  if (bins < 1) throw std::invalid_argument("soi_pool: bins must be >= 1");
  Eigen::VectorXd pool = Eigen::VectorXd::Zero(f.dim());
  const double l = x.length();
  for (int i = 0; i < bins; ++i) {
    const double c = (i + 0.5) / bins;
    pool += interpolate_feature(f, x.start + c * l);
  }
  return pool / bins;
}

namespace {

void build_conditioning(const ScorerParams& params, const FeatureSequence& f,
                        const Eigen::ArrayX2d& coords,
                        ScorerBatchCache& cache) {
  const int n = static_cast<int>(coords.rows());
  const int d = f.dim();
  if (d != params.cfg.feature_dim)
    throw std::invalid_argument("scorer: feature dimension mismatch");
  const double dur = f.duration();
  cache.z.resize(n, params.cfg.input_dim());
  cache.slope_s.resize(n, d);
  cache.slope_e.resize(n, d);
  cache.soi_ds.resize(n, d);
  cache.soi_de.resize(n, d);
  cache.inv_duration = 1.0 / dur;
  const int bins = params.cfg.soi_bins;
  Eigen::VectorXd sl(d);
  for (int i = 0; i < n; ++i) {
    const double xs = coords(i, 0);
    const double xe = coords(i, 1);
    cache.z.row(i).head(d) = interpolate_feature(f, xs, &sl);
    cache.slope_s.row(i) = sl;
    cache.z.row(i).segment(d, d) = interpolate_feature(f, xe, &sl);
    cache.slope_e.row(i) = sl;

    Eigen::VectorXd pool = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd de = Eigen::VectorXd::Zero(d);
    const double l = xe - xs;
    for (int bi = 0; bi < bins; ++bi) {
      const double c = (bi + 0.5) / bins;
      pool += interpolate_feature(f, xs + c * l, &sl);
      ds += (1.0 - c) * sl;
      de += c * sl;
    }
    cache.z.row(i).segment(2 * d, d) = pool / bins;
    cache.soi_ds.row(i) = ds / bins;
    cache.soi_de.row(i) = de / bins;
    cache.z(i, 3 * d) = xs / dur;
    cache.z(i, 3 * d + 1) = xe / dur;
  }
}

}  // namespace

void scorer_forward_batch(const ScorerParams& params, const FeatureSequence& f,
                          const Eigen::ArrayX2d& coords,
                          const Eigen::MatrixXd& h_in,
                          ScorerBatchCache& cache) {
  const int n = static_cast<int>(coords.rows());
  if (h_in.rows() != n || h_in.cols() != params.cfg.cell_dim)
    throw std::invalid_argument("scorer: hidden state shape mismatch");
  build_conditioning(params, f, coords, cache);

  cache.acts.resize(params.w.size());
  const Eigen::MatrixXd* in = &cache.z;
  for (std::size_t l = 0; l < params.w.size(); ++l) {
    cache.acts[l] =
        ((*in) * params.w[l].transpose()).rowwise() + params.b[l].transpose();
    cache.acts[l] = cache.acts[l].array().tanh().matrix();
    in = &cache.acts[l];
  }
  const Eigen::MatrixXd& e = cache.acts.back();

  cache.h_in = h_in;
  Eigen::MatrixXd concat(n, e.cols() + h_in.cols());
  concat << e, h_in;
  cache.gate = sigmoid_mat((concat * params.wz.transpose()).rowwise() +
                           params.bz.transpose());
  cache.cand = (((concat * params.wc.transpose()).rowwise() +
                 params.bc.transpose()))
                   .array()
                   .tanh()
                   .matrix();
  cache.h_out = ((1.0 - cache.gate.array()) * h_in.array() +
                 cache.gate.array() * cache.cand.array())
                    .matrix();

  cache.y = (cache.h_out * params.wo.transpose()).rowwise() +
            params.bo.transpose();
  cache.p1 = sigmoid_mat(cache.y.col(0));
  cache.p2 = sigmoid_mat(cache.y.col(1));
}

void scorer_backward_batch(const ScorerParams& params,
                           const ScorerBatchCache& cache,
                           const Eigen::VectorXd& d_p1,
                           const Eigen::VectorXd& d_p2,
                           const Eigen::MatrixXd& d_offsets,
                           const Eigen::MatrixXd& d_h_out, ScorerParams& grads,
                           Eigen::MatrixXd* d_h_in,
                           Eigen::ArrayX2d* d_coords) {
  const int n = cache.size();
  const int d = params.cfg.feature_dim;

  Eigen::MatrixXd dy(n, 4);
  dy.col(0) = d_p1.array() * cache.p1.array() * (1.0 - cache.p1.array());
  dy.col(1) = d_p2.array() * cache.p2.array() * (1.0 - cache.p2.array());
  dy.col(2) = d_offsets.col(0);
  dy.col(3) = d_offsets.col(1);

  grads.wo += dy.transpose() * cache.h_out;
  grads.bo += dy.colwise().sum().transpose();
  Eigen::MatrixXd dh = dy * params.wo;
  if (d_h_out.size() > 0) dh += d_h_out;

  // Gated cell: h_out = (1-g) .* h_in + g .* c.
  Eigen::MatrixXd dg =
      (dh.array() * (cache.cand.array() - cache.h_in.array())).matrix();
  Eigen::MatrixXd dc = (dh.array() * cache.gate.array()).matrix();
  Eigen::MatrixXd dh_in_direct =
      (dh.array() * (1.0 - cache.gate.array())).matrix();
  Eigen::MatrixXd dzg =
      (dg.array() * cache.gate.array() * (1.0 - cache.gate.array())).matrix();
  Eigen::MatrixXd dzc =
      (dc.array() * (1.0 - cache.cand.array().square())).matrix();

  const Eigen::MatrixXd& e = cache.acts.back();
  Eigen::MatrixXd concat(n, e.cols() + cache.h_in.cols());
  concat << e, cache.h_in;
  grads.wz += dzg.transpose() * concat;
  grads.bz += dzg.colwise().sum().transpose();
  grads.wc += dzc.transpose() * concat;
  grads.bc += dzc.colwise().sum().transpose();

  Eigen::MatrixXd dconcat = dzg * params.wz + dzc * params.wc;
  Eigen::MatrixXd da = dconcat.leftCols(e.cols());
  if (d_h_in)
    *d_h_in = dh_in_direct + dconcat.rightCols(cache.h_in.cols());

  // Trunk, last layer first.
  Eigen::MatrixXd dz;
  for (int l = static_cast<int>(params.w.size()) - 1; l >= 0; --l) {
    Eigen::MatrixXd dpre =
        (da.array() * (1.0 - cache.acts[l].array().square())).matrix();
    const Eigen::MatrixXd& below = (l == 0) ? cache.z : cache.acts[l - 1];
    grads.w[l] += dpre.transpose() * below;
    grads.b[l] += dpre.colwise().sum().transpose();
    if (l == 0)
      dz = dpre * params.w[0];
    else
      da = dpre * params.w[l];
  }

  if (d_coords) {
    d_coords->resize(n, 2);
    for (int i = 0; i < n; ++i) {
      (*d_coords)(i, 0) =
          dz.row(i).head(d).dot(cache.slope_s.row(i)) +
          dz.row(i).segment(2 * d, d).dot(cache.soi_ds.row(i)) +
          dz(i, 3 * d) * cache.inv_duration;
      (*d_coords)(i, 1) =
          dz.row(i).segment(d, d).dot(cache.slope_e.row(i)) +
          dz.row(i).segment(2 * d, d).dot(cache.soi_de.row(i)) +
          dz(i, 3 * d + 1) * cache.inv_duration;
    }
  }
}

std::pair<ScorerOutput, ScorerBatchCache> forward(const ScorerParams& params,
                                                  const FeatureSequence& f,
                                                  const Segment& sample) {
  Eigen::ArrayX2d coords(1, 2);
  coords(0, 0) = sample.start;
  coords(0, 1) = sample.end;
  ScorerBatchCache cache;
  scorer_forward_batch(params, f, coords,
                       Eigen::MatrixXd::Zero(1, params.cfg.cell_dim), cache);
  ScorerOutput out;
  out.p1 = cache.p1(0);
  out.p2 = cache.p2(0);
  out.offset = {cache.y(0, 2), cache.y(0, 3)};
  return {out, std::move(cache)};
}

ScorerParams backward(const ScorerParams& params, const ScorerBatchCache& cache,
                      double d_p1, double d_p2, const OffsetPair& d_offset) {
  if (cache.size() != 1)
    throw std::invalid_argument("backward: cache does not match a single-sample forward");
  ScorerParams grads = zeros_like(params);
  Eigen::VectorXd v1(1), v2(1);
  v1 << d_p1;
  v2 << d_p2;
  Eigen::MatrixXd doff(1, 2);
  doff << d_offset.delta_start, d_offset.delta_end;
  scorer_backward_batch(params, cache, v1, v2, doff, Eigen::MatrixXd(), grads);
  return grads;
}

void boundary_forward(const ScorerParams& params, const FeatureSequence& f,
                      BoundaryCache& cache) {
  cache.hidden = ((params.wb1 * f.values).colwise() + params.bb1)
                     .array()
                     .tanh()
                     .matrix();
  cache.logits = (params.wb2 * cache.hidden).colwise() + params.bb2;
  cache.start_prob = sigmoid_mat(cache.logits.row(0).transpose());
  cache.end_prob = sigmoid_mat(cache.logits.row(1).transpose());
}

void boundary_backward(const ScorerParams& params, const FeatureSequence& f,
                       const BoundaryCache& cache,
                       const std::vector<double>& d_start,
                       const std::vector<double>& d_end, ScorerParams& grads) {
  const int ts = f.length();
  Eigen::MatrixXd dlogits(2, ts);
  for (int k = 0; k < ts; ++k) {
    dlogits(0, k) =
        d_start[k] * cache.start_prob(k) * (1.0 - cache.start_prob(k));
    dlogits(1, k) = d_end[k] * cache.end_prob(k) * (1.0 - cache.end_prob(k));
  }
  grads.wb2 += dlogits * cache.hidden.transpose();
  grads.bb2 += dlogits.rowwise().sum();
  Eigen::MatrixXd dhidden =
      ((params.wb2.transpose() * dlogits).array() *
       (1.0 - cache.hidden.array().square()))
          .matrix();
  grads.wb1 += dhidden * f.values.transpose();
  grads.bb1 += dhidden.rowwise().sum();
}

AdamState init_adam(const ScorerParams& params) {
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  s.step = 0;
  return s;
}

void adam_step(ScorerParams& params, const ScorerParams& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  auto pv = tensor_views(params);
  auto gv = tensor_views(grads);
  auto mv = tensor_views(state.m);
  auto vv = tensor_views(state.v);
  for (std::size_t t = 0; t < pv.size(); ++t) {
    double* p = pv[t].first;
    const double* g = gv[t].first;
    double* m = mv[t].first;
    double* v = vv[t].first;
    for (std::size_t i = 0; i < pv[t].second; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
}

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'T', 'A', 'L', 'C', 'K', 'P', 'T'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_tensors(std::ostream& os, const ScorerParams& p, bool with_dims) {
  auto views = tensor_views(p);
  if (with_dims) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(views.size()));
  std::vector<std::pair<int, int>> dims;
  visit_tensors(p, [&](const auto& t) {
    dims.emplace_back(static_cast<int>(t.rows()), static_cast<int>(t.cols()));
  });
  std::size_t idx = 0;
  visit_tensors(p, [&](const auto& t) {
    if (with_dims) {
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(dims[idx].first));
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(dims[idx].second));
    }
    for (int r = 0; r < t.rows(); ++r)
      for (int c = 0; c < t.cols(); ++c) write_pod<double>(os, t(r, c));
    ++idx;
  });
}

void read_tensors(std::istream& is, ScorerParams& p, bool with_dims) {
  if (with_dims) {
    std::size_t expected = 0;
    visit_tensors(p, [&](const auto&) { ++expected; });
    const auto count = read_pod<std::uint32_t>(is);
    if (count != expected)
      throw std::runtime_error("checkpoint: tensor count mismatch");
  }
  visit_tensors(p, [&](auto& t) {
    if (with_dims) {
      const auto rows = read_pod<std::uint32_t>(is);
      const auto cols = read_pod<std::uint32_t>(is);
      if (rows != static_cast<std::uint32_t>(t.rows()) ||
          cols != static_cast<std::uint32_t>(t.cols()))
        throw std::runtime_error("checkpoint: tensor shape mismatch");
    }
    for (int r = 0; r < t.rows(); ++r)
      for (int c = 0; c < t.cols(); ++c) t(r, c) = read_pod<double>(is);
  });
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::uint32_t>(os, 1);  // version
  const ScorerConfig& c = ckpt.params.cfg;
  write_pod<std::int32_t>(os, c.feature_dim);
  write_pod<std::int32_t>(os, c.hidden_width);
  write_pod<std::int32_t>(os, c.hidden_layers);
  write_pod<std::int32_t>(os, c.cell_dim);
  write_pod<std::int32_t>(os, c.boundary_hidden);
  write_pod<std::int32_t>(os, c.soi_bins);
  write_tensors(os, ckpt.params, true);
  write_pod<std::uint8_t>(os, ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    write_pod<std::int64_t>(os, ckpt.opt.step);
    write_tensors(os, ckpt.opt.m, false);
    write_tensors(os, ckpt.opt.v, false);
    write_pod<std::int32_t>(os, ckpt.next_epoch);
    write_pod<std::uint64_t>(os, ckpt.run_seed);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(is);
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported version");
  ScorerConfig c;
  c.feature_dim = read_pod<std::int32_t>(is);
  c.hidden_width = read_pod<std::int32_t>(is);
  c.hidden_layers = read_pod<std::int32_t>(is);
  c.cell_dim = read_pod<std::int32_t>(is);
  c.boundary_hidden = read_pod<std::int32_t>(is);
  c.soi_bins = read_pod<std::int32_t>(is);
  Checkpoint ckpt;
  ckpt.params = init_scorer(c, 0);
  read_tensors(is, ckpt.params, true);
  ckpt.has_optimizer = read_pod<std::uint8_t>(is) != 0;
  if (ckpt.has_optimizer) {
    ckpt.opt = init_adam(ckpt.params);
    ckpt.opt.step = read_pod<std::int64_t>(is);
    read_tensors(is, ckpt.opt.m, false);
    read_tensors(is, ckpt.opt.v, false);
    ckpt.next_epoch = read_pod<std::int32_t>(is);
    ckpt.run_seed = read_pod<std::uint64_t>(is);
  }
  return ckpt;
}

}  // namespace tal
