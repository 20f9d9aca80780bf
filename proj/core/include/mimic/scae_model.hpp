// Copyright 2026 The Mimic Authors. All Rights Reserved.
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

#ifndef MIMIC_SCAE_MODEL_HPP_
#define MIMIC_SCAE_MODEL_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mimic/checkpoint.hpp"
#include "mimic/graph.hpp"
#include "mimic/gradcheck.hpp"
#include "mimic/kv_config.hpp"

namespace mimic {

struct ScaeConfig {
  int state_dim = 6;
  int latent_channels = 8;
  int window = 51;  // H, odd
  double dt = 0.02;
  int horizon = 50;  // N
  double alpha = 1.0;
  double beta = 1.0;
  int hidden = 64;
  int kernel = 51;
  // BN + ELU after the last decoder conv.
  bool final_decoder_activation = false;
  double bn_momentum = 0.1;

  void validate() const;
  void write(KvDocument& doc, const std::string& section = "scae") const;
  static ScaeConfig read(const KvDocument& doc, const std::string& section = "scae");

  // H samples spaced dt apart, centred on the middle of the window.
  std::vector<double> time_grid() const;
};

// Phase (cycles, in [-0.5, 0.5)), frequency (Hz), amplitude and offset per
// latent channel.
struct LatentParams {
  Eigen::VectorXd phase;
  Eigen::VectorXd frequency;
  Eigen::VectorXd amplitude;
  Eigen::VectorXd offset;

  int channels() const { return static_cast<int>(phase.size()); }
  // Throws ContractError on negative amplitude/frequency or an unwrapped phase.
  void validate() const;
};

// Batched latent parameters as graph tensors: phase [B, c] and (amplitude,
// frequency, offset) [B, c, 3].
struct LatentTensors {
  Tensor phase;
  Tensor params;

  int batch() const { return phase.dim(0); }
  LatentParams row(int b) const;
  static LatentTensors stack(std::span<const LatentParams> rows);
};

double wrap_phase(double cycles);
// Phase after `elapsed_seconds` of propagation at the stored frequencies.
LatentParams advance_phase(const LatentParams& p, double elapsed_seconds);
LatentParams interpolate_params(const LatentParams& a, const LatentParams& b, double lambda);

struct ConvLayer {
  Tensor weight;  // [c_out, c_in, K]
  Tensor bias;    // [c_out]
};

struct NormLayer {
  Tensor scale;  // [c]
  Tensor shift;  // [c]
  BatchNormState stats;
};

enum class ParamGroup { kEncoder, kPhaseHead, kDecoder, kNorm };

// Encoder, phase head and decoder of the periodic autoencoder, plus the
// normalisation statistics of the data it was trained on.
class ScaeModel {
 public:
  ScaeModel() = default;
  ScaeModel(const ScaeConfig& config, std::uint64_t seed);

  const ScaeConfig& config() const { return config_; }
  int channels() const { return config_.latent_channels; }

  // ---- graph builders; x is [B, d, H] in normalised units
  struct Encoded {
    Graph::NodeId z = -1;       // [B, c, H]
    Graph::NodeId phase = -1;   // [B, c]
    Graph::NodeId params = -1;  // [B, c, 3]
  };
  Encoded encode_graph(Graph& g, Graph::NodeId x, BnMode mode);
  // [B, c, H] -> [B, d, H]
  Graph::NodeId decode_graph(Graph& g, Graph::NodeId zhat, BnMode mode);
  // One reconstruction per shift: [M * B, c, H], row m * B + b.
  Graph::NodeId reconstruct_graph(Graph& g, Graph::NodeId phase, Graph::NodeId params,
                                  std::span<const double> shifts) const;

  // ---- eval-mode convenience wrappers
  Tensor encode(const Tensor& x);
  LatentTensors parameterize(const Tensor& z);
  Tensor reconstruct_latent(const LatentTensors& params) const;
  Tensor decode(const Tensor& zhat);
  struct Prediction {
    Tensor zhat;  // [B, c, H]
    Tensor tau;   // [B, d, H]
    LatentTensors params;  // with the advanced phase
  };
  // Encode once, advance the phase by i * f * dt, reconstruct and decode.
  Prediction predict_forward(const Tensor& x, int i);
  // Newest decoded column for each latent row: [B, d] in normalised units.
  Eigen::MatrixXd decode_newest(const LatentTensors& params);

  // ---- parameters
  std::vector<NamedParam> named_parameters(ParamGroup group);
  std::vector<NamedParam> named_parameters();
  std::vector<ParamRef> param_refs(ParamGroup group);
  std::vector<ParamRef> param_refs();
  // Toggles gradient tracking for every tensor of the group.
  void set_trainable(ParamGroup group, bool trainable);
  bool trainable(ParamGroup group);
  // Hash of every encoder, phase-head and normalisation value (including the
  // running statistics of all batch-norm layers).
  std::uint64_t frozen_hash();
  std::uint64_t decoder_hash();

  // ---- data statistics
  Eigen::VectorXd state_mean;
  Eigen::VectorXd state_std;
  Eigen::VectorXd normalize(const Eigen::VectorXd& s) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& s) const;

  // ---- persistence
  void write(Checkpoint& ck) const;
  void read(const Checkpoint& ck);
  void save(const std::filesystem::path& path) const;
  static ScaeModel load(const std::filesystem::path& path);

 private:
  Graph::NodeId conv_block(Graph& g, Graph::NodeId x, ConvLayer& conv, NormLayer* norm, BnMode mode);
  template <typename F>
  void for_each(ParamGroup group, F&& f);

  ScaeConfig config_;
  ConvLayer enc_[3];
  NormLayer enc_norm_[3];
  Tensor phase_weight_;  // [c, 2, H]
  Tensor phase_bias_;    // [c, 2]
  ConvLayer dec_[3];
  NormLayer dec_norm_[3];  // the last one is used only with final_decoder_activation
};

}  // namespace mimic

#endif  // MIMIC_SCAE_MODEL_HPP_
