// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#include "handocc/occnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "handocc/error.hpp"
#include "handocc/parallel.hpp"

namespace handocc {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr double kPoolTau = 0.05;  // smooth max-pool temperature

double softplus_s(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid_s(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Mat softplus(const Mat& m) { return m.unaryExpr([](double x) { return softplus_s(x); }); }
Mat sigmoid(const Mat& m) { return m.unaryExpr([](double x) { return sigmoid_s(x); }); }

// ---------------------------------------------------------------------------
// Normalization: center at the wrist, scale by the mean bone length.
// ---------------------------------------------------------------------------

struct NormCtx {
  Vec3d wrist;
  double scale = 1.0;
  Mat x;  // 3 x 21 normalized joints
};

NormCtx normalize_ctx(const Skeleton& s) {
  NormCtx ctx;
  ctx.wrist = s.joints[0];
  const auto& topo = HandTopology::canonical();
  double acc = 0.0;
  for (int e = 0; e < 20; ++e) acc += norm(s.joints[topo.edges[e][1]] - s.joints[topo.edges[e][0]]);
  ctx.scale = std::max(acc / 20.0, 1e-6);
  ctx.x.resize(3, 21);
  for (int j = 0; j < 21; ++j) {
    const Vec3d v = (s.joints[j] - ctx.wrist) / ctx.scale;
    ctx.x.col(j) << v.x, v.y, v.z;
  }
  return ctx;
}

Mat normalize_points(const Vec3d* pts, int n, const NormCtx& ctx) {
  Mat q(3, n);
  for (int i = 0; i < n; ++i) {
    const Vec3d v = (pts[i] - ctx.wrist) / ctx.scale;
    q.col(i) << v.x, v.y, v.z;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Forward passes (activations kept for the backward passes)
// ---------------------------------------------------------------------------

struct EncActs {
  Mat x;
  struct Block {
    Mat in, a1, z1, a2;
  };
  std::vector<Block> blocks;
  Mat h_final;
  Mat pool_w;  // H x 21 softmax weights of the LSE pool
  Vec f;
};

EncActs encoder_forward(const OccNetParams& p, const Mat& x) {
  EncActs a;
  a.x = x;
  Mat h = (p.enc_in.w * x).colwise() + p.enc_in.b;
  for (const auto& blk : p.enc) {
    EncActs::Block b;
    b.in = h;
    b.a1 = softplus(h);
    b.z1 = (blk.l1.w * b.a1).colwise() + blk.l1.b;
    b.a2 = softplus(b.z1);
    h = h + ((blk.l2.w * b.a2).colwise() + blk.l2.b);
    a.blocks.push_back(std::move(b));
  }
  a.h_final = h;
  const int H = static_cast<int>(h.rows());
  a.f.resize(H);
  a.pool_w.resize(H, h.cols());
  for (int k = 0; k < H; ++k) {
    const double m = h.row(k).maxCoeff();
    double sum = 0.0;
    for (int j = 0; j < h.cols(); ++j) {
      const double e = std::exp((h(k, j) - m) / kPoolTau);
      a.pool_w(k, j) = e;
      sum += e;
    }
    a.pool_w.row(k) /= sum;
    a.f(k) = m + kPoolTau * std::log(sum);
  }
  return a;
}

struct DecActs {
  Mat q;
  struct Block {
    Mat in;
    Vec gamma, beta;
    Mat t0, a1, z1, a2;
  };
  std::vector<Block> blocks;
  Mat g_final, a_out;
  Vec logits;
};

DecActs decoder_forward(const OccNetParams& p, const Vec& f, const Mat& q) {
  DecActs a;
  a.q = q;
  Mat g = (p.dec_in.w * q).colwise() + p.dec_in.b;
  for (const auto& blk : p.dec) {
    DecActs::Block b;
    b.in = g;
    b.gamma = blk.film_scale.w * f + blk.film_scale.b;
    b.beta = blk.film_shift.w * f + blk.film_shift.b;
    b.t0 = (b.gamma.asDiagonal() * g).colwise() + b.beta;
    b.a1 = softplus(b.t0);
    b.z1 = (blk.l1.w * b.a1).colwise() + blk.l1.b;
    b.a2 = softplus(b.z1);
    g = g + ((blk.l2.w * b.a2).colwise() + blk.l2.b);
    a.blocks.push_back(std::move(b));
  }
  a.g_final = g;
  a.a_out = softplus(g);
  a.logits = (a.a_out.transpose() * p.out_w).array() + p.out_b;
  return a;
}

// ---------------------------------------------------------------------------
// Backward passes
// ---------------------------------------------------------------------------

OccNetParams zeros_like(const OccNetParams& like) {
  OccNetParams g = like;
  auto zero = [](OccNetParams::Linear& l) {
    l.w.setZero();
    l.b.setZero();
  };
  zero(g.enc_in);
  zero(g.dec_in);
  for (auto& b : g.enc) {
    zero(b.l1);
    zero(b.l2);
  }
  for (auto& b : g.dec) {
    zero(b.film_scale);
    zero(b.film_shift);
    zero(b.l1);
    zero(b.l2);
  }
  g.out_w.setZero();
  g.out_b = 0.0;
  return g;
}

/// Backprop through the decoder. Returns dQ, adds the feature gradient into
/// df, and accumulates parameter gradients into pg when non-null.
Mat decoder_backward(const OccNetParams& p, const DecActs& a, const Vec& f, const Vec& dlogits,
                     Vec& df, OccNetParams* pg) {
  if (pg) {
    pg->out_w += a.a_out * dlogits;
    pg->out_b += dlogits.sum();
  }
  Mat dg = (p.out_w * dlogits.transpose()).array() * sigmoid(a.g_final).array();
  for (int l = static_cast<int>(p.dec.size()) - 1; l >= 0; --l) {
    const auto& blk = p.dec[l];
    const auto& b = a.blocks[l];
    if (pg) {
      pg->dec[l].l2.w += dg * b.a2.transpose();
      pg->dec[l].l2.b += dg.rowwise().sum();
    }
    const Mat dz1 = ((blk.l2.w.transpose() * dg).array() * sigmoid(b.z1).array()).matrix();
    if (pg) {
      pg->dec[l].l1.w += dz1 * b.a1.transpose();
      pg->dec[l].l1.b += dz1.rowwise().sum();
    }
    const Mat dt0 = ((blk.l1.w.transpose() * dz1).array() * sigmoid(b.t0).array()).matrix();
    const Vec dgamma = (dt0.array() * b.in.array()).rowwise().sum();
    const Vec dbeta = dt0.rowwise().sum();
    if (pg) {
      pg->dec[l].film_scale.w += dgamma * f.transpose();
      pg->dec[l].film_scale.b += dgamma;
      pg->dec[l].film_shift.w += dbeta * f.transpose();
      pg->dec[l].film_shift.b += dbeta;
    }
    df += blk.film_scale.w.transpose() * dgamma + blk.film_shift.w.transpose() * dbeta;
    dg += b.gamma.asDiagonal() * dt0;
  }
  if (pg) {
    pg->dec_in.w += dg * a.q.transpose();
    pg->dec_in.b += dg.rowwise().sum();
  }
  return p.dec_in.w.transpose() * dg;
}

/// Backprop through the pool and encoder blocks. Returns dX (3 x 21).
Mat encoder_backward(const OccNetParams& p, const EncActs& a, const Vec& df, OccNetParams* pg) {
  Mat dh = (a.pool_w.array().colwise() * df.array()).matrix();
  for (int l = static_cast<int>(p.enc.size()) - 1; l >= 0; --l) {
    const auto& blk = p.enc[l];
    const auto& b = a.blocks[l];
    if (pg) {
      pg->enc[l].l2.w += dh * b.a2.transpose();
      pg->enc[l].l2.b += dh.rowwise().sum();
    }
    const Mat dz1 = ((blk.l2.w.transpose() * dh).array() * sigmoid(b.z1).array()).matrix();
    if (pg) {
      pg->enc[l].l1.w += dz1 * b.a1.transpose();
      pg->enc[l].l1.b += dz1.rowwise().sum();
    }
    dh += ((blk.l1.w.transpose() * dz1).array() * sigmoid(b.in).array()).matrix();
  }
  if (pg) {
    pg->enc_in.w += dh * a.x.transpose();
    pg->enc_in.b += dh.rowwise().sum();
  }
  return p.enc_in.w.transpose() * dh;
}

/// Chains normalized-input gradients (dQ over the points, dX over the
/// conditioning joints) back to world-frame point and joint gradients.
void chain_normalization(const NormCtx& ctx, const Skeleton& cond, const Mat& q, const Mat& dq,
                         const Mat& dx, Vec3d* dpoints, std::array<Vec3d, 21>& djoints) {
  const double inv_s = 1.0 / ctx.scale;
  double ds = 0.0;
  for (int i = 0; i < dq.cols(); ++i) {
    const Vec3d g{dq(0, i), dq(1, i), dq(2, i)};
    if (dpoints) dpoints[i] = g * inv_s;
    djoints[0] -= g * inv_s;
    ds -= (dq(0, i) * q(0, i) + dq(1, i) * q(1, i) + dq(2, i) * q(2, i)) * inv_s;
  }
  for (int j = 0; j < 21; ++j) {
    const Vec3d g{dx(0, j), dx(1, j), dx(2, j)};
    djoints[j] += g * inv_s;
    djoints[0] -= g * inv_s;
    ds -= (dx(0, j) * ctx.x(0, j) + dx(1, j) * ctx.x(1, j) + dx(2, j) * ctx.x(2, j)) * inv_s;
  }
  const auto& topo = HandTopology::canonical();
  for (int e = 0; e < 20; ++e) {
    const Vec3d d = cond.joints[topo.edges[e][1]] - cond.joints[topo.edges[e][0]];
    const double len = norm(d);
    if (len < 1e-12) continue;
    const Vec3d u = d / len;
    djoints[topo.edges[e][1]] += u * (ds / 20.0);
    djoints[topo.edges[e][0]] -= u * (ds / 20.0);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Params
// ---------------------------------------------------------------------------

OccNetParams OccNetParams::init(std::uint64_t seed, int hidden, int feature, int enc_blocks,
                                int dec_blocks) {
  if (hidden != feature)
    throw InvalidInput("occnet: hidden and feature dimensions must match in this architecture");
  std::mt19937_64 rng(seed);
  auto he = [&rng](int rows, int cols) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / cols));
    Mat m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = dist(rng);
    return m;
  };
  auto linear = [&](int rows, int cols) {
    Linear l;
    l.w = he(rows, cols);
    l.b = Vec::Zero(rows);
    return l;
  };

  OccNetParams p;
  p.hidden = hidden;
  p.feature = feature;
  p.enc_in = linear(hidden, 3);
  for (int i = 0; i < enc_blocks; ++i) p.enc.push_back({linear(hidden, hidden), linear(hidden, hidden)});
  p.dec_in = linear(hidden, 3);
  for (int i = 0; i < dec_blocks; ++i) {
    DecBlock b;
    b.film_scale = linear(hidden, feature);
    b.film_scale.w *= 0.1;  // start near identity-free conditioning
    b.film_scale.b = Vec::Ones(hidden);
    b.film_shift = linear(hidden, feature);
    b.film_shift.w *= 0.1;
    b.l1 = linear(hidden, hidden);
    b.l2 = linear(hidden, hidden);
    p.dec.push_back(std::move(b));
  }
  p.out_w = Vec::Zero(hidden);
  p.out_b = 0.0;
  return p;
}

std::int64_t OccNetParams::param_count() const {
  std::int64_t n = 0;
  auto count = [&n](const Linear& l) { n += l.w.size() + l.b.size(); };
  count(enc_in);
  count(dec_in);
  for (const auto& b : enc) {
    count(b.l1);
    count(b.l2);
  }
  for (const auto& b : dec) {
    count(b.film_scale);
    count(b.film_shift);
    count(b.l1);
    count(b.l2);
  }
  return n + out_w.size() + 1;
}

namespace {

void write_f32(std::ofstream& out, const double* data, std::int64_t n) {
  std::vector<float> buf(n);
  for (std::int64_t i = 0; i < n; ++i) buf[i] = static_cast<float>(data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), n * sizeof(float));
}

void read_f32(std::ifstream& in, double* data, std::int64_t n) {
  std::vector<float> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), n * sizeof(float));
  if (!in) throw ParseError("occnet load: truncated weight blob");
  for (std::int64_t i = 0; i < n; ++i) data[i] = buf[i];
}

template <class Fn>
void visit_linears(OccNetParams& p, Fn&& fn) {
  fn(p.enc_in);
  for (auto& b : p.enc) {
    fn(b.l1);
    fn(b.l2);
  }
  fn(p.dec_in);
  for (auto& b : p.dec) {
    fn(b.film_scale);
    fn(b.film_shift);
    fn(b.l1);
    fn(b.l2);
  }
}

}  // namespace

void OccNetParams::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("occnet save: cannot open " + tmp);
    out.write("OCN1", 4);
    const std::int32_t header[4] = {static_cast<std::int32_t>(hidden), static_cast<std::int32_t>(feature),
                                    static_cast<std::int32_t>(enc.size()), static_cast<std::int32_t>(dec.size())};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    auto& self = const_cast<OccNetParams&>(*this);
    visit_linears(self, [&out](Linear& l) {
      write_f32(out, l.w.data(), l.w.size());
      write_f32(out, l.b.data(), l.b.size());
    });
    write_f32(out, out_w.data(), out_w.size());
    write_f32(out, &out_b, 1);
    if (!out) throw Error("occnet save: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("occnet save: cannot rename " + tmp + " to " + path);
}

OccNetParams OccNetParams::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("occnet load: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "OCN1", 4) != 0)
    throw ParseError("occnet load: bad magic bytes (expected OCN1)");
  std::int32_t header[4];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw ParseError("occnet load: truncated header");
  OccNetParams p = init(/*seed=*/0, header[0], header[1], header[2], header[3]);
  visit_linears(p, [&in](Linear& l) {
    read_f32(in, l.w.data(), l.w.size());
    read_f32(in, l.b.data(), l.b.size());
  });
  read_f32(in, p.out_w.data(), p.out_w.size());
  read_f32(in, &p.out_b, 1);
  return p;
}

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

std::vector<LabeledSampleSet> sample_training_set(const std::vector<HandPose>& poses,
                                                  const TrainConfig& cfg, std::uint64_t seed) {
  if (cfg.samples_per_hand < 1) throw InvalidInput("sample_training_set: samples_per_hand must be >= 1");
  if (cfg.point_noise_sigma < 0) throw InvalidInput("sample_training_set: sigma must be >= 0");

  std::vector<LabeledSampleSet> sets(poses.size());
  parallel_for(static_cast<std::int64_t>(poses.size()), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (i + 1)));
      std::uniform_real_distribution<double> u01(0.0, 1.0);

      const Skeleton skel = forward_kinematics(poses[i]);
      HandMesh mesh = generate_mesh(skel, MeshVariant::Plain);

      // Shared random rotation of skeleton and mesh about the wrist.
      const double max_rad = cfg.rotation_augmentation_deg * M_PI / 180.0;
      const double angle = (2.0 * u01(rng) - 1.0) * max_rad;
      const double z = 2.0 * u01(rng) - 1.0;
      const double phi = 2.0 * M_PI * u01(rng);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const Mat3d rot = axis_angle_matrix({r * std::cos(phi), r * std::sin(phi), z}, angle);
      const Vec3d pivot = skel.joints[0];

      LabeledSampleSet set;
      set.pose_id = static_cast<int>(i);
      set.skeleton = skel;
      for (int j = 0; j < 21; ++j) set.skeleton.joints[j] = pivot + rot * (skel.joints[j] - pivot);
      for (auto& v : mesh.vertices) v = pivot + rot * (v - pivot);

      const RayCaster caster(mesh);
      const Aabb bbox = mesh.bounding_box().padded(10.0);
      std::uniform_real_distribution<double> ux(bbox.min.x, bbox.max.x);
      std::uniform_real_distribution<double> uy(bbox.min.y, bbox.max.y);
      std::uniform_real_distribution<double> uz(bbox.min.z, bbox.max.z);
      std::normal_distribution<double> noise(0.0, cfg.point_noise_sigma);
      std::uniform_int_distribution<int> pick(0, static_cast<int>(mesh.vertices.size()) - 1);

      const int m = cfg.samples_per_hand;
      set.points.reserve(m);
      for (int k = 0; k < m / 2; ++k) set.points.push_back({ux(rng), uy(rng), uz(rng)});
      while (static_cast<int>(set.points.size()) < m) {
        Vec3d p = mesh.vertices[pick(rng)];
        if (cfg.point_noise_sigma > 0) p += Vec3d{noise(rng), noise(rng), noise(rng)};
        set.points.push_back(p);
      }
      set.labels.resize(m);
      for (int k = 0; k < m; ++k) set.labels[k] = caster.inside(set.points[k]) ? 1 : 0;
      sets[i] = std::move(set);
    }
  });
  return sets;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<double*, std::int64_t>> param_views(OccNetParams& p) {
  std::vector<std::pair<double*, std::int64_t>> v;
  visit_linears(p, [&v](OccNetParams::Linear& l) {
    v.emplace_back(l.w.data(), l.w.size());
    v.emplace_back(l.b.data(), l.b.size());
  });
  v.emplace_back(p.out_w.data(), p.out_w.size());
  v.emplace_back(&p.out_b, 1);
  return v;
}

double point_label_iou(const OccNetParams& p, const LabeledSampleSet& set) {
  const NormCtx ctx = normalize_ctx(set.skeleton);
  const EncActs enc = encoder_forward(p, ctx.x);
  const Mat q = normalize_points(set.points.data(), static_cast<int>(set.points.size()), ctx);
  const DecActs dec = decoder_forward(p, enc.f, q);
  long tp = 0, fp = 0, fn = 0;
  for (int i = 0; i < dec.logits.size(); ++i) {
    const bool pred = dec.logits[i] > 0.0;
    const bool truth = set.labels[i] != 0;
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  const long denom = tp + fp + fn;
  return denom == 0 ? 1.0 : static_cast<double>(tp) / denom;
}

}  // namespace

TrainResult train_occnet(const std::vector<LabeledSampleSet>& train,
                         const std::vector<LabeledSampleSet>& val, const TrainConfig& cfg) {
  if (train.empty()) throw InvalidInput("train_occnet: empty training data");

  OccNetParams params = OccNetParams::init(cfg.seed);
  OccNetParams grads = zeros_like(params);
  auto pviews = param_views(params);
  auto gviews = param_views(grads);

  std::int64_t total = 0;
  for (auto [ptr, n] : pviews) total += n;
  Vec m_state = Vec::Zero(total), v_state = Vec::Zero(total);

  struct Chunk {
    int set;
    int begin, end;
  };

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::vector<int>> perm(train.size());

  TrainResult result;
  double best_iou = -1.0;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Deterministic per-epoch shuffle of points within sets and of chunks.
    std::vector<Chunk> chunks;
    for (size_t s = 0; s < train.size(); ++s) {
      const int n = static_cast<int>(train[s].points.size());
      perm[s].resize(n);
      std::iota(perm[s].begin(), perm[s].end(), 0);
      std::shuffle(perm[s].begin(), perm[s].end(), rng);
      for (int b = 0; b < n; b += cfg.batch_size)
        chunks.push_back({static_cast<int>(s), b, std::min(n, b + cfg.batch_size)});
    }
    std::shuffle(chunks.begin(), chunks.end(), rng);

    double loss_sum = 0.0;
    std::int64_t loss_count = 0;

    for (size_t ci = 0; ci < chunks.size(); ++ci) {
      const Chunk& ch = chunks[ci];
      const LabeledSampleSet& set = train[ch.set];
      const int bsz = ch.end - ch.begin;

      const NormCtx ctx = normalize_ctx(set.skeleton);
      const EncActs enc = encoder_forward(params, ctx.x);
      std::vector<Vec3d> pts(bsz);
      Vec labels(bsz);
      for (int k = 0; k < bsz; ++k) {
        const int idx = perm[ch.set][ch.begin + k];
        pts[k] = set.points[idx];
        labels[k] = set.labels[idx] ? 1.0 : 0.0;
      }
      const Mat q = normalize_points(pts.data(), bsz, ctx);
      const DecActs dec = decoder_forward(params, enc.f, q);

      // BCE with logits, mean over the batch.
      double loss = 0.0;
      Vec dlogits(bsz);
      for (int k = 0; k < bsz; ++k) {
        const double zlg = dec.logits[k];
        loss += std::max(zlg, 0.0) - zlg * labels[k] + std::log1p(std::exp(-std::abs(zlg)));
        dlogits[k] = (sigmoid_s(zlg) - labels[k]) / bsz;
      }
      loss /= bsz;
      if (!std::isfinite(loss))
        throw NumericalError("train_occnet: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(ci));
      loss_sum += loss * bsz;
      loss_count += bsz;

      for (auto [ptr, n] : gviews) std::fill(ptr, ptr + n, 0.0);
      Vec df = Vec::Zero(params.feature);
      decoder_backward(params, dec, enc.f, dlogits, df, &grads);
      encoder_backward(params, enc, df, &grads);

      // Adam step with cosine-decayed learning rate.
      ++step;
      const double progress = static_cast<double>(epoch) / cfg.epochs;
      const double lr = cfg.learning_rate * (0.55 + 0.45 * std::cos(M_PI * progress));
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
      std::int64_t off = 0;
      for (size_t vi = 0; vi < pviews.size(); ++vi) {
        double* w = pviews[vi].first;
        double* g = gviews[vi].first;
        const std::int64_t n = pviews[vi].second;
        for (std::int64_t k = 0; k < n; ++k) {
          double& m = m_state[off + k];
          double& v2 = v_state[off + k];
          m = b1 * m + (1 - b1) * g[k];
          v2 = b2 * v2 + (1 - b2) * g[k] * g[k];
          w[k] -= lr * (m / bc1) / (std::sqrt(v2 / bc2) + eps);
        }
        off += n;
      }
    }

    // Per-epoch validation on a rotating subset of validation sets.
    double viou = 0.0;
    if (!val.empty()) {
      const int take = std::min<int>(cfg.val_poses_per_epoch, static_cast<int>(val.size()));
      for (int k = 0; k < take; ++k)
        viou += point_label_iou(params, val[(epoch * take + k) % val.size()]);
      viou /= take;
    }
    result.history.push_back({epoch, loss_sum / std::max<std::int64_t>(loss_count, 1), viou});
    if (viou >= best_iou) {
      best_iou = viou;
      result.params = params;
    }
  }
  if (val.empty()) result.params = params;
  return result;
}

TrainResult train_occnet(const std::vector<LabeledSampleSet>& data, const TrainConfig& cfg) {
  std::vector<int> distinct;
  for (const auto& s : data) distinct.push_back(s.pose_id);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2)
    throw InvalidInput("train_occnet: need >= 2 distinct poses for a validation split");

  std::vector<LabeledSampleSet> train, val;
  for (size_t i = 0; i < data.size(); ++i) {
    if (i % 5 == 4)
      val.push_back(data[i]);
    else
      train.push_back(data[i]);
  }
  if (val.empty()) {
    val.push_back(data.back());
    train.pop_back();
  }
  return train_occnet(train, val, cfg);
}

// ---------------------------------------------------------------------------
// Field interface
// ---------------------------------------------------------------------------

Eigen::VectorXd encode_skeleton(const Skeleton& s, const OccNetParams& params) {
  return encoder_forward(params, normalize_ctx(s).x).f;
}

double occnet_eval(const Vec3d& p, const Eigen::VectorXd& feature, const OccNetParams& params) {
  // The caller provides a feature from encode_skeleton; the query still needs
  // the conditioning normalization, so this entry point is only exact for
  // already-normalized workflows. Kept for API parity with the field class.
  Mat q(3, 1);
  q << p.x, p.y, p.z;
  const DecActs dec = decoder_forward(params, feature, q);
  return sigmoid_s(dec.logits[0]);
}

double OccNetField::eval(const Vec3d& p, const Skeleton& cond) const {
  double out;
  eval_batch(&p, 1, cond, &out);
  return out;
}

void OccNetField::eval_batch(const Vec3d* points, int n, const Skeleton& cond, double* out) const {
  const NormCtx ctx = normalize_ctx(cond);
  const EncActs enc = encoder_forward(params_, ctx.x);
  constexpr int kChunk = 4096;
  for (int base = 0; base < n; base += kChunk) {
    const int bsz = std::min(kChunk, n - base);
    const Mat q = normalize_points(points + base, bsz, ctx);
    const DecActs dec = decoder_forward(params_, enc.f, q);
    for (int i = 0; i < bsz; ++i) out[base + i] = sigmoid_s(dec.logits[i]);
  }
}

void OccNetField::backprop_batch(const Vec3d* points, int n, const Skeleton& cond,
                                 const double* dprob, Vec3d* dpoints,
                                 std::array<Vec3d, 21>& dcond) const {
  const NormCtx ctx = normalize_ctx(cond);
  const EncActs enc = encoder_forward(params_, ctx.x);
  const Mat q = normalize_points(points, n, ctx);
  const DecActs dec = decoder_forward(params_, enc.f, q);

  Vec dlogits(n);
  for (int i = 0; i < n; ++i) {
    const double p = sigmoid_s(dec.logits[i]);
    dlogits[i] = dprob[i] * p * (1.0 - p);
  }
  Vec df = Vec::Zero(params_.feature);
  const Mat dq = decoder_backward(params_, dec, enc.f, dlogits, df, nullptr);
  const Mat dx = encoder_backward(params_, enc, df, nullptr);

  std::array<Vec3d, 21> dj{};
  chain_normalization(ctx, cond, q, dq, dx, dpoints, dj);
  for (int j = 0; j < 21; ++j) dcond[j] += dj[j];
}

Vec3d OccNetField::grad_point(const Vec3d& p, const Skeleton& cond) const {
  Vec3d dpoint;
  std::array<Vec3d, 21> dcond{};
  const double one = 1.0;
  backprop_batch(&p, 1, cond, &one, &dpoint, dcond);
  return dpoint;
}

std::array<Vec3d, 21> OccNetField::grad_skeleton(const Vec3d& p, const Skeleton& cond) const {
  Vec3d dpoint;
  std::array<Vec3d, 21> dcond{};
  const double one = 1.0;
  backprop_batch(&p, 1, cond, &one, &dpoint, dcond);
  return dcond;
}

}  // namespace handocc
