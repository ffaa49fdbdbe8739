// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <type_traits>
#include <stdexcept>
#include <string>
#include <vector>

#include "apf/adam.hpp"
#include "apf/camera.hpp"
#include "apf/encoding.hpp"
#include "apf/hash_grid.hpp"
#include "apf/image.hpp"
#include "apf/losses.hpp"
#include "apf/mlp.hpp"
#include "apf/parallel.hpp"
#include "apf/types.hpp"

namespace apf {

struct AppearanceConfig {
  HashGridConfig grid;
  std::vector<int> mlp_hidden = {128, 64};
  int embedding_dim = 32;
  AblationEncoding encoding;

  void validate() const {
    grid.validate();
    if (embedding_dim < 1) throw std::invalid_argument("embedding_dim must be >= 1");
    for (int h : mlp_hidden)
      if (h < 1) throw std::invalid_argument("mlp_hidden widths must be >= 1");
  }

  int local_feature_length() const { return grid.feature_length(); }
  int feature_length() const { return grid.feature_length() + embedding_dim; }
};

/// Full trainable state: hash grids (xyz encoding only), decoder MLP, and one
/// appearance embedding column per training view.
template <typename Scalar>
struct AppearanceModel {
  AppearanceConfig config;
  HashGridStack<Scalar> grids;
  Mlp<Scalar> mlp;
  MatrixX<Scalar> embeddings;  // embedding_dim x num_views, column per view
  std::vector<std::string> view_ids;

  int num_views() const { return static_cast<int>(view_ids.size()); }

  int view_index(const std::string& id) const {
    for (int i = 0; i < num_views(); ++i)
      if (view_ids[i] == id) return i;
    throw std::out_of_range("unknown view id: " + id);
  }

  std::int64_t parameter_count() const {
    std::int64_t n = mlp.parameter_count() + embeddings.size();
    if (config.encoding.kind == EncodingKind::xyz) n += grids.parameter_count();
    return n;
  }
};

/// Builds a model with zero embeddings and a zero final decoder layer, so
/// every decoded matrix starts exactly at the identity transform.
template <typename Scalar>
AppearanceModel<Scalar> create_appearance_model(const AppearanceConfig& config,
                                                const std::vector<std::string>& view_ids,
                                                std::uint64_t seed) {
  config.validate();
  AppearanceModel<Scalar> model;
  model.config = config;
  model.grids.config = config.grid;
  if (config.encoding.kind == EncodingKind::xyz) model.grids.init(seed);
  model.mlp = Mlp<Scalar>::create(config.feature_length(), config.mlp_hidden, 12, seed + 1);
  model.embeddings = MatrixX<Scalar>::Zero(config.embedding_dim,
                                           static_cast<int>(view_ids.size()));
  model.view_ids = view_ids;
  return model;
}

/// Everything one cell exposes to the feature encoders: the back-projected
/// world point plus the raw screen-space quantities the ablations consume.
template <typename Scalar>
struct CellQuery {
  Vector3<Scalar> world = Vector3<Scalar>::Zero();
  Scalar u = 0, v = 0, depth = 0;
  Vector3<Scalar> color = Vector3<Scalar>::Zero();
  int image_width = 0, image_height = 0;
};

template <typename Scalar>
VectorX<Scalar> local_features(const AppearanceModel<Scalar>& model,
                               const CellQuery<Scalar>& q) {
  if (model.config.encoding.kind == EncodingKind::xyz)
    return grid_query(model.grids, q.world);
  return ablation_encode(model.config.encoding, q.u, q.v, q.depth, q.color, q.image_width,
                         q.image_height, model.config.local_feature_length());
}

/// Feature layout: grid levels first (f_0 ... f_{L-1}), embedding last. The
/// checkpoint format depends on this order.
template <typename Scalar>
VectorX<Scalar> splice_features(const VectorX<Scalar>& local,
                                const VectorX<Scalar>& embedding) {
  VectorX<Scalar> out(local.size() + embedding.size());
  out.head(local.size()) = local;
  out.tail(embedding.size()) = embedding;
  return out;
}

template <typename Scalar>
VectorX<Scalar> assemble_features(const AppearanceModel<Scalar>& model,
                                  const CellQuery<Scalar>& q, int view) {
  if (view < 0 || view >= model.num_views())
    throw std::out_of_range("assemble_features: view index out of range");
  return splice_features<Scalar>(local_features(model, q), model.embeddings.col(view));
}

/// Row-major reshape of a 12-vector into a 3x4 matrix, offset by the identity
/// transform: M[r][c] = v[4r + c] + M_ID[r][c].
template <typename Scalar>
Matrix34<Scalar> matrix_from_decoder_output(const VectorX<Scalar>& v) {
  Matrix34<Scalar> m = identity_transform<Scalar>();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) += v[4 * r + c];
  return m;
}

template <typename Scalar>
Matrix34<Scalar> decode_matrix(const AppearanceModel<Scalar>& model,
                               const VectorX<Scalar>& features) {
  const MatrixX<Scalar> out = mlp_forward(model.mlp, MatrixX<Scalar>(features));
  return matrix_from_decoder_output<Scalar>(out.col(0));
}

template <typename Scalar>
Vector3<Scalar> apply_affine(const Vector3<Scalar>& color, const Matrix34<Scalar>& m) {
  return m * Vector4<Scalar>(color[0], color[1], color[2], Scalar(1));
}

/// Per-cell affine matrices over an image, on a uniform lattice of c x c pixel
/// cells with nominal centers at ((j+0.5)c, (i+0.5)c).
template <typename Scalar>
struct TransformField {
  int height = 0, width = 0;
  int cell_size = 1;
  int cells_y = 0, cells_x = 0;
  std::vector<Matrix34<Scalar>> cells;  // row-major, cells_y x cells_x
  std::vector<char> cell_valid;         // 0 = no valid depth, matrix forced to M_ID

  // Validates before the divisions in the initializer list run.
  static int count_cells(int extent, int c) {
    if (extent < 1 || c < 1)
      throw std::invalid_argument("TransformField: need h, w, c >= 1");
    return (extent + c - 1) / c;
  }

  TransformField() = default;
  TransformField(int h, int w, int c)
      : height(h),
        width(w),
        cell_size(c),
        cells_y(count_cells(h, c)),
        cells_x(count_cells(w, c)),
        cells(static_cast<size_t>(cells_y) * cells_x, identity_transform<Scalar>()),
        cell_valid(static_cast<size_t>(cells_y) * cells_x, 0) {}

  int cell_count() const { return cells_y * cells_x; }
  Matrix34<Scalar>& cell(int i, int j) { return cells[static_cast<size_t>(i) * cells_x + j]; }
  const Matrix34<Scalar>& cell(int i, int j) const {
    return cells[static_cast<size_t>(i) * cells_x + j];
  }
};

/// Intermediates needed to push gradients back through a field build. Column k
/// of the decoder batch corresponds to flat cell `columns[k]`.
template <typename Scalar>
struct FieldCache {
  std::vector<int> columns;
  std::vector<CellQuery<Scalar>> queries;
  MlpCache<Scalar> mlp;
};

/// Samples one affine matrix per cell: mean valid depth, back-projected cell
/// center, features, batched decode. Cells without any valid depth keep M_ID
/// and are marked invalid. `rendered` is only read by the color encoding.
template <typename Scalar>
TransformField<Scalar> build_transform_field(const AppearanceModel<Scalar>& model,
                                             const DepthMap<Scalar>& depth,
                                             const Camera<Scalar>& camera, int view,
                                             int cell_size,
                                             std::type_identity_t<const Image<Scalar>*> rendered = nullptr,
                                             std::type_identity_t<FieldCache<Scalar>*> cache = nullptr,
                                             int threads = 1) {
  if (view < 0 || view >= model.num_views())
    throw std::out_of_range("build_transform_field: view index out of range");
  const int h = depth.height(), w = depth.width();
  if (camera.height != h || camera.width != w)
    throw std::invalid_argument("build_transform_field: camera/depth size mismatch");
  if (model.config.encoding.kind == EncodingKind::color && rendered == nullptr)
    throw std::invalid_argument("build_transform_field: color encoding needs the image");
  if (rendered && (rendered->height() != h || rendered->width() != w))
    throw std::invalid_argument("build_transform_field: image/depth size mismatch");

  TransformField<Scalar> field(h, w, cell_size);
  const int n_cells = field.cell_count();
  std::vector<CellQuery<Scalar>> queries(n_cells);
  std::vector<char> valid(n_cells, 0);

  parallel_for(0, n_cells, threads, [&](int idx) {
    const int ci = idx / field.cells_x;
    const int cj = idx % field.cells_x;
    const int r0 = ci * cell_size, r1 = std::min(r0 + cell_size, h);
    const int c0 = cj * cell_size, c1 = std::min(c0 + cell_size, w);
    Scalar depth_sum = 0;
    Vector3<Scalar> color_sum = Vector3<Scalar>::Zero();
    int count = 0;
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) {
        if (!depth.valid(r, c) || depth.values(r, c) <= Scalar(0)) continue;
        depth_sum += depth.values(r, c);
        if (rendered) color_sum += rendered->pixel(r, c);
        ++count;
      }
    if (count == 0) return;
    CellQuery<Scalar>& q = queries[idx];
    // Covered-extent midpoint; equals the nominal center for full cells and
    // stays inside the image for partial border cells.
    q.u = static_cast<Scalar>(c0 + c1) / 2;
    q.v = static_cast<Scalar>(r0 + r1) / 2;
    q.depth = depth_sum / count;
    if (rendered) q.color = color_sum / count;
    q.image_width = w;
    q.image_height = h;
    q.world = back_project(camera, q.u, q.v, q.depth);
    valid[idx] = 1;
  });

  std::vector<int> columns;
  columns.reserve(n_cells);
  for (int idx = 0; idx < n_cells; ++idx)
    if (valid[idx]) columns.push_back(idx);
  if (columns.empty()) {
    if (cache) *cache = FieldCache<Scalar>{};
    return field;
  }

  const int in = model.config.feature_length();
  MatrixX<Scalar> features(in, static_cast<int>(columns.size()));
  parallel_for(0, static_cast<int>(columns.size()), threads, [&](int k) {
    features.col(k) = assemble_features(model, queries[columns[k]], view);
  });

  MlpCache<Scalar> mlp_cache;
  const MatrixX<Scalar> out = mlp_forward(model.mlp, features, &mlp_cache);
  for (int k = 0; k < static_cast<int>(columns.size()); ++k) {
    field.cells[columns[k]] = matrix_from_decoder_output<Scalar>(out.col(k));
    field.cell_valid[columns[k]] = 1;
  }
  if (cache) {
    cache->columns = std::move(columns);
    cache->queries.clear();
    for (int idx : cache->columns) cache->queries.push_back(queries[idx]);
    cache->mlp = std::move(mlp_cache);
  }
  return field;
}

namespace detail {

/// Bilinear lattice coordinates of a pixel center inside the cell grid.
template <typename Scalar>
struct CellWeights {
  int i0, j0, i1, j1;
  Scalar wy, wx;
  bool exact;  // pixel sits exactly on a cell center: single-cell lookup
};

template <typename Scalar>
CellWeights<Scalar> cell_weights(const TransformField<Scalar>& field, Scalar u, Scalar v) {
  const Scalar c = static_cast<Scalar>(field.cell_size);
  Scalar gx = u / c - Scalar(0.5);
  Scalar gy = v / c - Scalar(0.5);
  gx = std::min(std::max(gx, Scalar(0)), static_cast<Scalar>(field.cells_x - 1));
  gy = std::min(std::max(gy, Scalar(0)), static_cast<Scalar>(field.cells_y - 1));
  CellWeights<Scalar> cw;
  cw.j0 = static_cast<int>(std::floor(gx));
  cw.i0 = static_cast<int>(std::floor(gy));
  cw.wx = gx - static_cast<Scalar>(cw.j0);
  cw.wy = gy - static_cast<Scalar>(cw.i0);
  cw.j1 = std::min(cw.j0 + 1, field.cells_x - 1);
  cw.i1 = std::min(cw.i0 + 1, field.cells_y - 1);
  cw.exact = (cw.wx == Scalar(0) && cw.wy == Scalar(0));
  return cw;
}

}  // namespace detail

/// Entrywise bilinear interpolation of the four surrounding cell matrices at
/// pixel center (u, v), accumulated as deviations from the identity so an
/// all-identity field reproduces M_ID bitwise. A pixel exactly on a cell
/// center returns that cell's matrix unchanged, which makes cell size 1
/// bitwise identical to direct per-pixel queries.
template <typename Scalar>
Matrix34<Scalar> interpolate_matrix(const TransformField<Scalar>& field, Scalar u, Scalar v) {
  const auto cw = detail::cell_weights(field, u, v);
  if (cw.exact) return field.cell(cw.i0, cw.j0);
  const Matrix34<Scalar> id = identity_transform<Scalar>();
  Matrix34<Scalar> m = id;
  m += (1 - cw.wy) * (1 - cw.wx) * (field.cell(cw.i0, cw.j0) - id);
  m += (1 - cw.wy) * cw.wx * (field.cell(cw.i0, cw.j1) - id);
  m += cw.wy * (1 - cw.wx) * (field.cell(cw.i1, cw.j0) - id);
  m += cw.wy * cw.wx * (field.cell(cw.i1, cw.j1) - id);
  return m;
}

/// Applies the field to an image: per-pixel matrix interpolation followed by
/// the affine transform. Output is intentionally unclamped.
template <typename Scalar>
Image<Scalar> transform_image(const Image<Scalar>& rendered, const TransformField<Scalar>& field,
                              std::type_identity_t<std::vector<Matrix34<Scalar>>*> pixel_matrices = nullptr,
                              int threads = 1) {
  if (rendered.height() != field.height || rendered.width() != field.width)
    throw std::invalid_argument("transform_image: image/field size mismatch");
  Image<Scalar> out(rendered.height(), rendered.width());
  if (pixel_matrices)
    pixel_matrices->assign(static_cast<size_t>(field.height) * field.width,
                           identity_transform<Scalar>());
  parallel_for(0, field.height, threads, [&](int r) {
    for (int c = 0; c < field.width; ++c) {
      const Matrix34<Scalar> m = interpolate_matrix(
          field, static_cast<Scalar>(c) + Scalar(0.5), static_cast<Scalar>(r) + Scalar(0.5));
      out.set_pixel(r, c, apply_affine(rendered.pixel(r, c), m));
      if (pixel_matrices)
        (*pixel_matrices)[static_cast<size_t>(r) * field.width + c] = m;
    }
  });
  return out;
}

/// Scatters d(loss)/d(transformed image) back onto the cell matrices. The
/// interpolation is linear in the matrices, so each pixel contributes its
/// bilinear weight times (upstream pixel gradient) x [r, g, b, 1].
template <typename Scalar>
std::vector<Matrix34<Scalar>> transform_image_backward(const Image<Scalar>& rendered,
                                                       const TransformField<Scalar>& field,
                                                       const Image<Scalar>& grad_out) {
  if (!rendered.same_size(grad_out) || rendered.height() != field.height ||
      rendered.width() != field.width)
    throw std::invalid_argument("transform_image_backward: size mismatch");
  std::vector<Matrix34<Scalar>> grads(static_cast<size_t>(field.cell_count()),
                                      Matrix34<Scalar>::Zero());
  for (int r = 0; r < field.height; ++r)
    for (int c = 0; c < field.width; ++c) {
      const auto cw = detail::cell_weights(field, static_cast<Scalar>(c) + Scalar(0.5),
                                           static_cast<Scalar>(r) + Scalar(0.5));
      const Vector3<Scalar> rgb = rendered.pixel(r, c);
      const Vector4<Scalar> hvec(rgb[0], rgb[1], rgb[2], Scalar(1));
      const Matrix34<Scalar> g = grad_out.pixel(r, c) * hvec.transpose();
      if (cw.exact) {
        grads[static_cast<size_t>(cw.i0) * field.cells_x + cw.j0] += g;
        continue;
      }
      grads[static_cast<size_t>(cw.i0) * field.cells_x + cw.j0] +=
          (1 - cw.wy) * (1 - cw.wx) * g;
      grads[static_cast<size_t>(cw.i0) * field.cells_x + cw.j1] += (1 - cw.wy) * cw.wx * g;
      grads[static_cast<size_t>(cw.i1) * field.cells_x + cw.j0] += cw.wy * (1 - cw.wx) * g;
      grads[static_cast<size_t>(cw.i1) * field.cells_x + cw.j1] += cw.wy * cw.wx * g;
    }
  return grads;
}

/// Mean absolute deviation from the identity transform, over all matrices and
/// all 12 entries. Identity matrices contribute exactly zero.
template <typename Scalar>
Scalar identity_regularizer(const std::vector<Matrix34<Scalar>>& matrices) {
  if (matrices.empty()) throw std::invalid_argument("identity_regularizer: empty set");
  const Matrix34<Scalar> id = identity_transform<Scalar>();
  Scalar sum = 0;
  for (const auto& m : matrices) sum += (m - id).array().abs().sum();
  return sum / static_cast<Scalar>(12 * matrices.size());
}

/// Adds scale * d(identity_regularizer)/d(matrix) to each valid cell's
/// gradient. Invalid cells are pinned to M_ID and receive nothing.
template <typename Scalar>
void identity_regularizer_backward(const TransformField<Scalar>& field, Scalar scale,
                                   std::vector<Matrix34<Scalar>>& cell_grads) {
  const Matrix34<Scalar> id = identity_transform<Scalar>();
  const Scalar k = scale / static_cast<Scalar>(12 * field.cell_count());
  for (int idx = 0; idx < field.cell_count(); ++idx) {
    if (!field.cell_valid[idx]) continue;
    cell_grads[idx] += k * (field.cells[idx] - id).array().sign().matrix();
  }
}

/// Parameter-space gradients of one view's field build. Embedding gradients
/// accumulate into column `view` of `embedding_grads`; grid gradients are
/// only produced for the xyz encoding (pass nullptr otherwise or to skip).
template <typename Scalar>
void field_backward(const AppearanceModel<Scalar>& model, const FieldCache<Scalar>& cache,
                    int view, const std::vector<Matrix34<Scalar>>& cell_grads,
                    MlpGrads<Scalar>& mlp_grads, std::type_identity_t<HashGridGrads<Scalar>*> grid_grads,
                    MatrixX<Scalar>& embedding_grads) {
  const int batch = static_cast<int>(cache.columns.size());
  if (batch == 0) return;
  MatrixX<Scalar> upstream(12, batch);
  for (int k = 0; k < batch; ++k) {
    const Matrix34<Scalar>& g = cell_grads[cache.columns[k]];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) upstream(4 * r + c, k) = g(r, c);
  }
  const MatrixX<Scalar> input_grads = mlp_backward(model.mlp, cache.mlp, upstream, mlp_grads);
  const int lf = model.config.local_feature_length();
  for (int k = 0; k < batch; ++k)
    embedding_grads.col(view) += input_grads.col(k).tail(model.config.embedding_dim);
  if (grid_grads && model.config.encoding.kind == EncodingKind::xyz) {
    for (int k = 0; k < batch; ++k) {
      const VectorX<Scalar> up = input_grads.col(k).head(lf);
      grid_query_backward(model.grids, cache.queries[k].world, up, *grid_grads);
    }
  }
}

/// One view's complete loss and pixel-space gradient. The data terms may be
/// restricted to the leftmost `data_columns` pixel columns (negative means
/// the whole image); the regularizer always covers every cell.
template <typename Scalar>
struct ViewLoss {
  Scalar l1 = 0, dssim = 0, lid = 0;
  double lambda2 = 0;
  Scalar total = 0;
  Image<Scalar> grad_transformed;  // d(total)/d(transformed image)
  Image<Scalar> transformed;       // unclamped
};

template <typename Scalar>
ViewLoss<Scalar> view_loss(const Image<Scalar>& transformed, const Image<Scalar>& target,
                           const TransformField<Scalar>& field, const LossConfig& cfg,
                           double lambda2, bool with_grad, int data_columns = -1) {
  check_same_size(transformed, target, "view_loss");
  ViewLoss<Scalar> out;
  out.lambda2 = lambda2;
  out.transformed = transformed;
  const int w = data_columns < 0 ? transformed.width() : data_columns;
  if (w < 1 || w > transformed.width())
    throw std::invalid_argument("view_loss: bad data column count");

  const Image<Scalar> a = (w == transformed.width()) ? transformed
                                                     : crop_columns(transformed, 0, w);
  const Image<Scalar> b = (w == target.width()) ? target : crop_columns(target, 0, w);
  const Scalar lam1 = static_cast<Scalar>(cfg.lambda1);
  Image<Scalar> ssim_grad;
  out.l1 = l1_loss(a, b);
  out.dssim = d_ssim(a, b, cfg, with_grad ? &ssim_grad : nullptr);
  out.lid = identity_regularizer(field.cells);
  out.total = (1 - lam1) * out.l1 + lam1 * out.dssim + static_cast<Scalar>(lambda2) * out.lid;

  if (with_grad) {
    const Image<Scalar> l1_grad = l1_loss_backward(a, b);
    out.grad_transformed = Image<Scalar>(transformed.height(), transformed.width());
    for (int c = 0; c < 3; ++c)
      out.grad_transformed.ch[c].leftCols(w) =
          (1 - lam1) * l1_grad.ch[c] + lam1 * ssim_grad.ch[c];
  }
  return out;
}

struct FitConfig {
  int iters = 500;
  AdamConfig adam{1e-2, 0.9, 0.999, 1e-15};
  LossConfig loss;
  int cell_size = 8;
  int threads = 1;
};

/// Clone of the model's frozen state with a single view whose embedding is
/// given explicitly; used to query held-out views.
template <typename Scalar>
AppearanceModel<Scalar> single_view_model(const AppearanceModel<Scalar>& model,
                                          const VectorX<Scalar>& embedding,
                                          const std::string& view_id = "held_out") {
  if (embedding.size() != model.config.embedding_dim)
    throw std::invalid_argument("single_view_model: embedding dimension mismatch");
  AppearanceModel<Scalar> probe;
  probe.config = model.config;
  probe.grids = model.grids;
  probe.mlp = model.mlp;
  probe.embeddings = embedding;
  probe.view_ids = {view_id};
  return probe;
}

/// Optimizes a fresh appearance embedding for one held-out view using only
/// the leftmost half of the reference image; grids and MLP stay frozen. The
/// regularizer weight is the schedule's final value, matching a model that
/// finished training. `final_loss` (optional) receives the last iteration's
/// left-half objective.
template <typename Scalar>
VectorX<Scalar> fit_test_embedding(const AppearanceModel<Scalar>& model,
                                   const Image<Scalar>& reference,
                                   const Image<Scalar>& rendered,
                                   const DepthMap<Scalar>& depth, const Camera<Scalar>& camera,
                                   const FitConfig& cfg, double* final_loss = nullptr) {
  check_same_size(reference, rendered, "fit_test_embedding");
  const int half = rendered.width() / 2;
  if (half < 1) throw std::invalid_argument("fit_test_embedding: image too narrow");
  const double lambda2 = cfg.loss.lambda2.final_value;

  AppearanceModel<Scalar> probe =
      single_view_model(model, VectorX<Scalar>::Zero(model.config.embedding_dim).eval());

  AdamMoments<MatrixX<Scalar>> moments;
  MlpGrads<Scalar> mlp_scratch(probe.mlp);
  for (int it = 1; it <= cfg.iters; ++it) {
    FieldCache<Scalar> cache;
    const TransformField<Scalar> field = build_transform_field(
        probe, depth, camera, 0, cfg.cell_size, &rendered, &cache, cfg.threads);
    const Image<Scalar> transformed = transform_image(rendered, field, nullptr, cfg.threads);
    ViewLoss<Scalar> loss =
        view_loss(transformed, reference, field, cfg.loss, lambda2, true, half);
    std::vector<Matrix34<Scalar>> cell_grads =
        transform_image_backward(rendered, field, loss.grad_transformed);
    identity_regularizer_backward(field, static_cast<Scalar>(lambda2), cell_grads);
    MatrixX<Scalar> egrad = MatrixX<Scalar>::Zero(probe.config.embedding_dim, 1);
    mlp_scratch.clear();
    field_backward(probe, cache, 0, cell_grads, mlp_scratch, nullptr, egrad);
    adam_step(probe.embeddings, egrad, moments, it, cfg.adam);
    if (final_loss) *final_loss = static_cast<double>(loss.total);
  }
  return probe.embeddings.col(0);
}

}  // namespace apf
