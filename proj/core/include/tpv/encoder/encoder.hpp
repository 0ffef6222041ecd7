#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tpv/encoder/attention.hpp"
#include "tpv/encoder/config.hpp"
#include "tpv/geometry/camera.hpp"
#include "tpv/triplane/planes.hpp"

namespace tpv::encoder {

using geometry::CameraRig;
using triplane::PlaneVars;
using triplane::TpvPlanes;

inline constexpr const char* kEncoderPrefix = "encoder";

// Feature map extents of one backbone scale and its pixel mapping:
// feature (row, col) = (v * row_scale - 0.5, u * col_scale - 0.5).
struct ScaleGeometry {
  std::int64_t height = 0;
  std::int64_t width = 0;
  double row_scale = 1.0;
  double col_scale = 1.0;
};

std::vector<ScaleGeometry> feature_geometry(const BackboneConfig& backbone, std::int64_t image_height,
                                            std::int64_t image_width);

// Per camera, per scale: [h_s x w_s x C].
template <typename T>
struct ImageFeatures {
  std::vector<std::vector<Var<T>>> maps;
};

// Queries of one view seen by one camera, with their image reference points.
struct IcaBatch {
  int camera = 0;
  std::vector<std::int64_t> rows;
  std::vector<std::vector<double>> refs;  // per scale, [M x R x 2] feature sample coords
  std::vector<std::uint8_t> live;         // [M x R] projection validity
};

struct IcaViewPlan {
  std::int64_t refs = 0;
  std::vector<IcaBatch> batches;
  std::vector<double> inv_valid;  // 1/|valid cameras| per query, 0 when unseen
  std::vector<double> seen;       // 1 when at least one camera sees the query
};

struct CvhaViewPlan {
  std::array<std::int64_t, 3> counts = {0, 0, 0};
  std::array<std::vector<double>, 3> refs;  // per plane, [N x R x 2] sample coords
};

// Everything about the attention geometry that does not depend on parameters.
struct EncoderPlan {
  std::int64_t image_height = 0;
  std::int64_t image_width = 0;
  std::size_t cameras = 0;
  std::vector<ScaleGeometry> scales;
  std::array<IcaViewPlan, 3> ica;
  std::vector<std::array<CvhaViewPlan, 3>> cvha;  // per block

  // Throws ConfigError on an invalid config and DimensionError when the rig's
  // cameras disagree on image extents.
  static EncoderPlan build(const EncoderConfig& config, const CameraRig& rig);
};

// Creates every encoder parameter under "encoder.". Offset projections start
// at zero weight with a ring bias; attention-weight projections and
// positional embeddings start at zero.
template <typename T>
void init_encoder(ParameterStore<T>& store, const EncoderConfig& config);

// Zeroes every attention output projection and the second feed-forward layer
// so each block reduces to the identity.
template <typename T>
void zero_residual_branches(ParameterStore<T>& store, const EncoderConfig& config);

// images: one [H x W x 3] tensor per camera, all of equal extents.
template <typename T>
ImageFeatures<T> backbone(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& config,
                          const std::vector<BasicTensor<T>>& images);

// Query rows per view, [N_v x C]; views absent in BEV mode stay invalid.
template <typename T>
using QueryVars = std::array<Var<T>, 3>;

template <typename T>
QueryVars<T> initial_queries(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& config);

template <typename T>
QueryVars<T> cross_view_hybrid_attention(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& config,
                                         const EncoderPlan& plan, int block, const QueryVars<T>& queries);

template <typename T>
QueryVars<T> image_cross_attention(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& config,
                                   const EncoderPlan& plan, int block, const QueryVars<T>& queries,
                                   const ImageFeatures<T>& features);

// CVHA, ICA, then feed-forward, each as a pre-norm residual branch.
template <typename T>
QueryVars<T> hcab_block(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& config,
                        const EncoderPlan& plan, int block, const QueryVars<T>& queries,
                        const ImageFeatures<T>& features);
// CVHA then feed-forward.
template <typename T>
QueryVars<T> hab_block(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& config,
                       const EncoderPlan& plan, int block, const QueryVars<T>& queries);

template <typename T>
PlaneVars<T> encode(Tape<T>& tape, const ParameterStore<T>& store, const EncoderConfig& config,
                    const EncoderPlan& plan, const std::vector<BasicTensor<T>>& images);

// Inference convenience: runs encode on a private tape and returns the planes.
TpvPlanes encode_planes(const ParameterStore<float>& store, const EncoderConfig& config, const EncoderPlan& plan,
                        const std::vector<numeric::Tensor>& images);

}  // namespace tpv::encoder
