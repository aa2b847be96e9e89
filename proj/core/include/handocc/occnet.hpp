// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "handocc/occupancy.hpp"

namespace handocc {

/// Desk-scale learned occupancy network.
///
/// Encoder: shared per-point layers with residual blocks over the 21
/// conditioning joints, pooled to a feature vector f (smooth log-sum-exp
/// max-pool so gradients stay finite-difference clean). Decoder: query point
/// through residual blocks with feature-wise affine conditioning (scale/shift
/// computed from f), ending in a single occupancy logit.
///
/// Inputs are normalized by centering at the wrist and dividing by the mean
/// bone length of the conditioning skeleton; query points share the same
/// normalization. All computation in double; weights serialize as float32.
struct OccNetParams {
  struct Linear {
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
  };
  struct EncBlock {
    Linear l1, l2;
  };
  struct DecBlock {
    Linear film_scale, film_shift;  // feature -> per-channel affine
    Linear l1, l2;
  };

  int hidden = 64;
  int feature = 64;
  Linear enc_in;  // hidden x 3
  std::vector<EncBlock> enc;
  Linear dec_in;  // hidden x 3
  std::vector<DecBlock> dec;
  Eigen::VectorXd out_w;  // hidden
  double out_b = 0.0;

  /// He-style init for hidden layers, zero-initialized output layer
  /// (probability 0.5 everywhere at step zero). Deterministic per seed.
  static OccNetParams init(std::uint64_t seed, int hidden = 64, int feature = 64,
                           int enc_blocks = 2, int dec_blocks = 3);

  std::int64_t param_count() const;

  /// Versioned little-endian binary: magic "OCN1", dimension header,
  /// float32 weight blobs.
  void save(const std::string& path) const;
  static OccNetParams load(const std::string& path);
};

struct TrainConfig {
  int samples_per_hand = 8192;
  double rotation_augmentation_deg = 180.0;  // shared random rotation, +/- this
  double point_noise_sigma = 3.0;            // mm, near-surface sample noise
  int epochs = 16;
  int batch_size = 512;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;
  int val_poses_per_epoch = 8;  // per-epoch validation subset size
};

/// Ray-cast-labeled training samples for one pose.
struct LabeledSampleSet {
  int pose_id = 0;
  Skeleton skeleton;  // conditioning skeleton (after shared rotation)
  std::vector<Vec3d> points;
  std::vector<std::uint8_t> labels;  // inside the pose's plain mesh
};

/// Per pose: samples_per_hand points, half uniform in the padded mesh bbox
/// and half near-surface (mesh vertices plus Gaussian noise sigma), labeled
/// by ray casting against the plain mesh. Skeleton and mesh share one random
/// rotation within +/- rotation_augmentation_deg about the wrist.
/// Byte-identical output for a fixed seed.
std::vector<LabeledSampleSet> sample_training_set(const std::vector<HandPose>& poses,
                                                  const TrainConfig& cfg, std::uint64_t seed);

struct EpochStats {
  int epoch;
  double train_loss;  // mean BCE per sample
  double val_iou;     // point-label IoU on the epoch's validation subset
};

struct TrainResult {
  OccNetParams params;  // best-validation-IoU checkpoint
  std::vector<EpochStats> history;
};

/// Minimizes binary cross-entropy with mini-batch Adam. Deterministic per
/// cfg.seed; throws NumericalError (with the offending batch in the message)
/// if the loss becomes non-finite.
TrainResult train_occnet(const std::vector<LabeledSampleSet>& train,
                         const std::vector<LabeledSampleSet>& val, const TrainConfig& cfg);

/// Splits data by pose (every fifth set validates) and trains. Requires at
/// least two distinct poses.
TrainResult train_occnet(const std::vector<LabeledSampleSet>& data, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Field interface
// ---------------------------------------------------------------------------

/// Encoder output for a conditioning skeleton.
Eigen::VectorXd encode_skeleton(const Skeleton& s, const OccNetParams& params);

/// Decoder probability for a single point given a precomputed feature.
double occnet_eval(const Vec3d& p, const Eigen::VectorXd& feature, const OccNetParams& params);

/// OccupancyField adapter; batch paths encode the conditioning skeleton once.
class OccNetField final : public OccupancyField {
 public:
  explicit OccNetField(OccNetParams params) : params_(std::move(params)) {}
  const OccNetParams& params() const { return params_; }

  double eval(const Vec3d& p, const Skeleton& cond) const override;
  Vec3d grad_point(const Vec3d& p, const Skeleton& cond) const override;
  std::array<Vec3d, 21> grad_skeleton(const Vec3d& p, const Skeleton& cond) const override;
  void eval_batch(const Vec3d* points, int n, const Skeleton& cond, double* out) const override;
  void backprop_batch(const Vec3d* points, int n, const Skeleton& cond, const double* dprob,
                      Vec3d* dpoints, std::array<Vec3d, 21>& dcond) const override;

 private:
  OccNetParams params_;
};

}  // namespace handocc
