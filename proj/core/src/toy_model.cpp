#include "congruence/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "congruence/congruence.hpp"
#include "congruence/divergence.hpp"
#include "congruence/gradients.hpp"
#include "congruence/rng.hpp"

namespace congruence {

namespace {

constexpr int kNumFillers = 4;
constexpr std::uint64_t kGeometrySeed = 0x67656F6D65747279ull;  // "geometry"
constexpr double kRoleOffsetScale = 0.5;

void validate_gen_config(const SceneGenConfig& cfg) {
  if (cfg.entities < 3) throw DomainError("scene config: needs >= 3 entities");
  if (cfg.d < 1) throw DomainError("scene config: d must be >= 1");
  if (cfg.noise < 0.0) throw DomainError("scene config: noise must be >= 0");
  if (cfg.min_lang < 3 || cfg.max_lang < cfg.min_lang) {
    throw DomainError("scene config: language length range must satisfy 3 <= min <= max");
  }
  if (cfg.min_vis < 2 || cfg.max_vis < cfg.min_vis) {
    throw DomainError("scene config: visual length range must satisfy 2 <= min <= max");
  }
}

std::vector<double> unit_normal_vector(Rng& rng, int d) {
  std::vector<double> v(d);
  double norm2 = 0.0;
  for (int i = 0; i < d; ++i) {
    v[i] = rng.normal();
    norm2 += v[i] * v[i];
  }
  const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-30));
  for (double& x : v) x *= inv;
  return v;
}

// Everything shared between a quadruple's four scenes: entities, caption
// shapes, shuffled visual slots and the noise draws.
struct ItemDraft {
  int subject = 0;
  int object = 0;
  int n_lang = 3;
  int n_vis = 2;
  std::vector<int> fillers;          // filler symbol ids
  std::vector<int> slot_entity;      // entity id per visual slot
  int subject_slot = 0;              // slot holding the subject entity
  int object_slot = 0;
  Matrix base_noise;                 // n_vis x d, pre-scaled by cfg.noise
};

ItemDraft draw_item(Rng& rng, const SceneGenConfig& cfg) {
  ItemDraft it;
  it.subject = rng.uniform_int(0, cfg.entities - 1);
  it.object = rng.uniform_int(0, cfg.entities - 2);
  if (it.object >= it.subject) ++it.object;

  it.n_lang = rng.uniform_int(cfg.min_lang, cfg.max_lang);
  it.n_vis = rng.uniform_int(cfg.min_vis, cfg.max_vis);
  for (int k = 0; k < it.n_lang - 3; ++k) {
    it.fillers.push_back(filler_symbol(cfg, rng.uniform_int(0, kNumFillers - 1)));
  }

  // Distractor objects come from entities other than the pair, so clean
  // scenes have an unambiguous correspondence.
  std::vector<int> pool;
  for (int e = 0; e < cfg.entities; ++e) {
    if (e != it.subject && e != it.object) pool.push_back(e);
  }
  it.slot_entity.assign({it.subject, it.object});
  for (int k = 0; k < it.n_vis - 2; ++k) {
    it.slot_entity.push_back(pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)]);
  }
  // Fisher-Yates so the entity pair does not sit at fixed slots.
  for (int i = it.n_vis - 1; i > 0; --i) {
    const int j = rng.uniform_int(0, i);
    std::swap(it.slot_entity[i], it.slot_entity[j]);
  }
  for (int s = 0; s < it.n_vis; ++s) {
    if (it.slot_entity[s] == it.subject) it.subject_slot = s;
    if (it.slot_entity[s] == it.object) it.object_slot = s;
  }

  it.base_noise = Matrix(it.n_vis, cfg.d);
  for (int s = 0; s < it.n_vis; ++s) {
    for (int c = 0; c < cfg.d; ++c) {
      it.base_noise(s, c) = cfg.noise * rng.normal();
    }
  }
  return it;
}

// Renders the item as an image; the role offset lands on whichever entity is
// the relation source.
Matrix render_image(const ItemDraft& it, const SceneGenConfig& cfg,
                    const Matrix& centroids, const std::vector<double>& offset,
                    int source_entity) {
  Matrix vis(it.n_vis, cfg.d);
  for (int s = 0; s < it.n_vis; ++s) {
    const int e = it.slot_entity[s];
    for (int c = 0; c < cfg.d; ++c) {
      double v = centroids(e, c) + it.base_noise(s, c);
      if (e == source_entity) v += offset[c];
      vis(s, c) = v;
    }
  }
  return vis;
}

std::vector<int> make_caption(const ItemDraft& it, const SceneGenConfig& cfg,
                              int first_entity, int second_entity) {
  std::vector<int> tokens{subject_symbol(first_entity), relation_symbol(cfg),
                          object_symbol(second_entity)};
  tokens.insert(tokens.end(), it.fillers.begin(), it.fillers.end());
  return tokens;
}

ToyScene make_scene(const ItemDraft& it, const SceneGenConfig& cfg,
                    Matrix vis, int first_entity, int second_entity,
                    int image_source, int label) {
  ToyScene s;
  s.lang_tokens = make_caption(it, cfg, first_entity, second_entity);
  s.vis_tokens = std::move(vis);
  const int first_slot = first_entity == it.subject ? it.subject_slot : it.object_slot;
  const int second_slot = second_entity == it.subject ? it.subject_slot : it.object_slot;
  s.correspondence = {{0, first_slot}, {2, second_slot}};
  s.relation_subject = image_source;
  s.relation_object = image_source == it.subject ? it.object : it.subject;
  s.label = label;
  return s;
}

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double bce_with_logit(double z, double y) {
  // log(1 + e^z) - y z, in the overflow-safe form
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

struct ForwardCache {
  Matrix x;        // n x d token inputs
  Matrix q, k, v;  // n x d projections
  std::vector<Matrix> s;  // per head, n x n raw scores
  std::vector<Matrix> a;  // per head, n x n attention
  Matrix z;        // n x d mixed values
  std::vector<double> pooled;  // d
  double logit = 0.0;
};

ForwardCache forward_cached(const EncoderParams& params, const ToyScene& scene) {
  params.validate();
  const int d = params.d();
  if (scene.vis_tokens.cols() != d) {
    throw DimensionError("forward: visual feature dimension disagrees with encoder d");
  }
  const int nl = scene.n_lang();
  const int nv = scene.n_vis();
  if (nl < 1 || nv < 1) {
    throw DimensionError("forward: scene needs at least one token per modality");
  }
  const int n = nl + nv;

  ForwardCache c;
  c.x = Matrix(n, d);
  for (int i = 0; i < nl; ++i) {
    const int sym = scene.lang_tokens[i];
    if (sym < 0 || sym >= params.token_embeddings.rows()) {
      throw DataError("forward: symbol id " + std::to_string(sym) + " outside the embedding table");
    }
    for (int cdim = 0; cdim < d; ++cdim) c.x(i, cdim) = params.token_embeddings(sym, cdim);
  }
  for (int i = 0; i < nv; ++i) {
    for (int cdim = 0; cdim < d; ++cdim) c.x(nl + i, cdim) = scene.vis_tokens(i, cdim);
  }

  c.q = matmul(c.x, params.w_q);
  c.k = matmul(c.x, params.w_k);
  c.v = matmul(c.x, params.w_v);

  const int heads = params.heads;
  const int dh = d / heads;
  c.s.reserve(heads);
  c.a.reserve(heads);
  c.z = Matrix(n, d);
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh;
    Matrix s(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int cd = 0; cd < dh; ++cd) acc += c.q(i, c0 + cd) * c.k(j, c0 + cd);
        s(i, j) = acc;
      }
    }
    Matrix a = row_softmax(s);
    for (int i = 0; i < n; ++i) {
      for (int cd = 0; cd < dh; ++cd) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += a(i, j) * c.v(j, c0 + cd);
        c.z(i, c0 + cd) = acc;
      }
    }
    c.s.push_back(std::move(s));
    c.a.push_back(std::move(a));
  }

  c.pooled.assign(d, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int cdim = 0; cdim < d; ++cdim) c.pooled[cdim] += c.z(i, cdim);
  }
  for (double& p : c.pooled) p /= n;

  c.logit = params.itm_bias;
  for (int cdim = 0; cdim < d; ++cdim) c.logit += params.itm_head[cdim] * c.pooled[cdim];
  return c;
}

struct ParamGrads {
  Matrix d_emb;
  Matrix d_wq, d_wk, d_wv;
  std::vector<double> d_head;
  double d_bias = 0.0;

  explicit ParamGrads(const EncoderParams& p)
      : d_emb(p.token_embeddings.rows(), p.token_embeddings.cols()),
        d_wq(p.d(), p.d()),
        d_wk(p.d(), p.d()),
        d_wv(p.d(), p.d()),
        d_head(p.d(), 0.0) {}
};

// Backward through one sample. d_logit is the upstream gradient of the
// matching loss; d_scores, when non-null, holds per-head gradients w.r.t.
// the raw score matrices (the congruence term enters through it).
void backward_sample(const EncoderParams& params, const ToyScene& scene,
                     const ForwardCache& c, double d_logit,
                     const std::vector<Matrix>* d_scores, ParamGrads& g) {
  const int d = params.d();
  const int heads = params.heads;
  const int dh = d / heads;
  const int nl = scene.n_lang();
  const int n = c.x.rows();

  for (int cdim = 0; cdim < d; ++cdim) {
    g.d_head[cdim] += d_logit * c.pooled[cdim];
  }
  g.d_bias += d_logit;

  // dZ from the pooled readout
  Matrix dz(n, d);
  for (int i = 0; i < n; ++i) {
    for (int cdim = 0; cdim < d; ++cdim) {
      dz(i, cdim) = d_logit * params.itm_head[cdim] / n;
    }
  }

  Matrix dq(n, d), dk(n, d), dv(n, d);
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh;
    const Matrix& a = c.a[h];

    Matrix da(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int cd = 0; cd < dh; ++cd) acc += dz(i, c0 + cd) * c.v(j, c0 + cd);
        da(i, j) = acc;
      }
    }
    for (int j = 0; j < n; ++j) {
      for (int cd = 0; cd < dh; ++cd) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += a(i, j) * dz(i, c0 + cd);
        dv(j, c0 + cd) += acc;
      }
    }

    Matrix ds = row_softmax_backward(a, da);
    if (d_scores != nullptr) {
      const Matrix& extra = (*d_scores)[h];
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) ds(i, j) += extra(i, j);
      }
    }

    for (int i = 0; i < n; ++i) {
      for (int cd = 0; cd < dh; ++cd) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += ds(i, j) * c.k(j, c0 + cd);
        dq(i, c0 + cd) += acc;
      }
    }
    for (int j = 0; j < n; ++j) {
      for (int cd = 0; cd < dh; ++cd) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += ds(i, j) * c.q(i, c0 + cd);
        dk(j, c0 + cd) += acc;
      }
    }
  }

  // dW = X^T dProj, dX = dProj W^T
  const Matrix xt = transpose(c.x);
  auto accumulate = [&](const Matrix& dproj, const Matrix& w, Matrix& dw, Matrix& dx) {
    const Matrix dwp = matmul(xt, dproj);
    for (std::size_t i = 0; i < dw.data().size(); ++i) dw.data()[i] += dwp.data()[i];
    const Matrix dxp = matmul(dproj, transpose(w));
    for (std::size_t i = 0; i < dx.data().size(); ++i) dx.data()[i] += dxp.data()[i];
  };
  Matrix dx(n, d);
  accumulate(dq, params.w_q, g.d_wq, dx);
  accumulate(dk, params.w_k, g.d_wk, dx);
  accumulate(dv, params.w_v, g.d_wv, dx);

  for (int i = 0; i < nl; ++i) {
    const int sym = scene.lang_tokens[i];
    for (int cdim = 0; cdim < d; ++cdim) g.d_emb(sym, cdim) += dx(i, cdim);
  }
  // visual rows are data, not parameters
}

// Mean over heads of cacr_total on the raw scores; optionally also the
// per-head gradients of that mean, assembled back to full-score shape.
double cacr_over_heads(const ForwardCache& c, int nl, int nv,
                       std::vector<Matrix>* d_scores, double weight) {
  const int heads = static_cast<int>(c.s.size());
  double total = 0.0;
  for (int h = 0; h < heads; ++h) {
    const AttentionBundle bundle{nl, nv, c.s[h]};
    const BlockPartition part = partition(bundle);
    total += cacr_total(part).total;
    if (d_scores != nullptr) {
      const BlockGradients bg = cacr_gradients(part);
      const double w = weight / heads;
      Matrix ds(nl + nv, nl + nv);
      for (int i = 0; i < nl; ++i) {
        for (int j = 0; j < nl; ++j) ds(i, j) = w * bg.d_s_ll(i, j);
        for (int j = 0; j < nv; ++j) ds(i, nl + j) = w * bg.d_s_lv(i, j);
      }
      for (int i = 0; i < nv; ++i) {
        for (int j = 0; j < nl; ++j) ds(nl + i, j) = w * bg.d_s_vl(i, j);
        for (int j = 0; j < nv; ++j) ds(nl + i, nl + j) = w * bg.d_s_vv(i, j);
      }
      (*d_scores)[h] = std::move(ds);
    }
  }
  return total / heads;
}

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adamw_update(std::vector<double>& theta, const std::vector<double>& grad,
                  AdamState& state, double lr, int step, bool decay) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8, kDecay = 0.01;
  const double bc1 = 1.0 - std::pow(kBeta1, step);
  const double bc2 = 1.0 - std::pow(kBeta2, step);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * grad[i];
    state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    double update = mhat / (std::sqrt(vhat) + kEps);
    if (decay) update += kDecay * theta[i];
    theta[i] -= lr * update;
  }
}

ToyScene mismatched_negative(const ToyScene& caption_scene, const ToyScene& image_scene) {
  ToyScene s;
  s.lang_tokens = caption_scene.lang_tokens;
  s.vis_tokens = image_scene.vis_tokens;
  s.correspondence = {};  // no ground-truth alignment for a mismatch
  s.relation_subject = image_scene.relation_subject;
  s.relation_object = image_scene.relation_object;
  s.label = 0;
  return s;
}

}  // namespace

int subject_symbol(int entity) { return 2 * entity; }
int object_symbol(int entity) { return 2 * entity + 1; }
int relation_symbol(const SceneGenConfig& cfg) { return 2 * cfg.entities; }
int filler_symbol(const SceneGenConfig& cfg, int k) { return 2 * cfg.entities + 1 + k; }
int vocabulary_size(const SceneGenConfig& cfg) { return 2 * cfg.entities + 1 + kNumFillers; }

Matrix entity_centroids(const SceneGenConfig& cfg) {
  validate_gen_config(cfg);
  Rng rng(derive_seed(kGeometrySeed, 0));
  Matrix out(cfg.entities, cfg.d);
  for (int e = 0; e < cfg.entities; ++e) {
    const std::vector<double> v = unit_normal_vector(rng, cfg.d);
    for (int c = 0; c < cfg.d; ++c) out(e, c) = v[c];
  }
  return out;
}

std::vector<double> role_offset(const SceneGenConfig& cfg) {
  validate_gen_config(cfg);
  Rng rng(derive_seed(kGeometrySeed, 1));
  std::vector<double> v = unit_normal_vector(rng, cfg.d);
  for (double& x : v) x *= kRoleOffsetScale;
  return v;
}

std::vector<ToyScene> generate_scenes(int count, std::uint64_t seed,
                                      const SceneGenConfig& cfg) {
  validate_gen_config(cfg);
  if (count < 1) throw DomainError("generate_scenes: count must be >= 1");
  const Matrix centroids = entity_centroids(cfg);
  const std::vector<double> offset = role_offset(cfg);
  Rng rng(seed);
  std::vector<ToyScene> out;
  out.reserve(2 * static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const ItemDraft it = draw_item(rng, cfg);
    Matrix image = render_image(it, cfg, centroids, offset, it.subject);
    out.push_back(make_scene(it, cfg, image, it.subject, it.object, it.subject, 1));
    out.push_back(make_scene(it, cfg, std::move(image), it.object, it.subject, it.subject, 0));
  }
  return out;
}

std::vector<ToyScene> generate_winoground_quads(int count, std::uint64_t seed,
                                                const SceneGenConfig& cfg) {
  validate_gen_config(cfg);
  if (count < 1) throw DomainError("generate_winoground_quads: count must be >= 1");
  const Matrix centroids = entity_centroids(cfg);
  const std::vector<double> offset = role_offset(cfg);
  Rng rng(seed);
  std::vector<ToyScene> out;
  out.reserve(4 * static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const ItemDraft it = draw_item(rng, cfg);
    Matrix image0 = render_image(it, cfg, centroids, offset, it.subject);
    Matrix image1 = render_image(it, cfg, centroids, offset, it.object);
    out.push_back(make_scene(it, cfg, image0, it.subject, it.object, it.subject, 1));
    out.push_back(make_scene(it, cfg, std::move(image0), it.object, it.subject, it.subject, 0));
    out.push_back(make_scene(it, cfg, image1, it.object, it.subject, it.object, 1));
    out.push_back(make_scene(it, cfg, std::move(image1), it.subject, it.object, it.object, 0));
  }
  return out;
}

void EncoderParams::validate() const {
  const int dim = w_q.rows();
  if (dim < 1) throw DimensionError("EncoderParams: d must be >= 1");
  if (w_q.cols() != dim || w_k.rows() != dim || w_k.cols() != dim ||
      w_v.rows() != dim || w_v.cols() != dim) {
    throw DimensionError("EncoderParams: projection matrices must all be d x d");
  }
  if (token_embeddings.cols() != dim || token_embeddings.rows() < 1) {
    throw DimensionError("EncoderParams: embedding table must be vocabulary x d");
  }
  if (static_cast<int>(itm_head.size()) != dim) {
    throw DimensionError("EncoderParams: itm_head must have length d");
  }
  if (heads < 1 || dim % heads != 0) {
    throw DimensionError("EncoderParams: heads must divide d");
  }
}

EncoderParams init_params(int vocabulary, int d, int heads, std::uint64_t seed) {
  if (vocabulary < 1 || d < 1) {
    throw DimensionError("init_params: vocabulary and d must be >= 1");
  }
  Rng rng(seed);
  EncoderParams p;
  p.token_embeddings = Matrix(vocabulary, d);
  for (double& v : p.token_embeddings.data()) v = 0.3 * rng.normal();
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(d));
  p.w_q = Matrix(d, d);
  p.w_k = Matrix(d, d);
  p.w_v = Matrix(d, d);
  for (double& v : p.w_q.data()) v = proj_scale * rng.normal();
  for (double& v : p.w_k.data()) v = proj_scale * rng.normal();
  for (double& v : p.w_v.data()) v = proj_scale * rng.normal();
  p.itm_head.resize(d);
  for (double& v : p.itm_head) v = 0.3 * rng.normal();
  p.itm_bias = 0.0;
  p.heads = heads;
  p.validate();
  return p;
}

ForwardResult forward(const EncoderParams& params, const ToyScene& scene) {
  const ForwardCache c = forward_cached(params, scene);
  ForwardResult r;
  r.head_scores.reserve(c.s.size());
  for (const Matrix& s : c.s) {
    r.head_scores.push_back(AttentionBundle{scene.n_lang(), scene.n_vis(), s});
  }
  r.match_logit = c.logit;
  return r;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw DomainError("TrainConfig: learning_rate must be positive");
  if (batch_size < 1) throw DomainError("TrainConfig: batch_size must be >= 1");
  if (negatives_per_positive < 1) throw DomainError("TrainConfig: negatives_per_positive must be >= 1");
  if (cacr_weight_max < 0.0) throw DomainError("TrainConfig: cacr_weight_max must be >= 0");
  if (steps < 0) throw DomainError("TrainConfig: steps must be >= 0");
  if (train_items < 2) throw DomainError("TrainConfig: train_items must be >= 2");
  if (holdout_items < 1) throw DomainError("TrainConfig: holdout_items must be >= 1");
  if (heads < 1) throw DomainError("TrainConfig: heads must be >= 1");
  validate_gen_config(scene);
}

double warmup_weight(const TrainConfig& cfg, int step) {
  const double tau = cfg.warmup_tau > 0.0 ? cfg.warmup_tau
                                          : std::max(1.0, cfg.steps / 5.0);
  return cfg.cacr_weight_max * (1.0 - std::exp(-static_cast<double>(step) / tau));
}

TrainResult train(const TrainConfig& config, bool use_cacr) {
  config.validate();
  const SceneGenConfig& gen = config.scene;

  const std::vector<ToyScene> pool = generate_scenes(config.train_items, derive_seed(config.seed, 1), gen);
  const std::vector<ToyScene> holdout = generate_scenes(config.holdout_items, derive_seed(config.seed, 2), gen);

  EncoderParams params = init_params(vocabulary_size(gen), gen.d, config.heads, derive_seed(config.seed, 0));
  Rng batch_rng(derive_seed(config.seed, 3));

  AdamState adam_emb(params.token_embeddings.size());
  AdamState adam_wq(params.w_q.size()), adam_wk(params.w_k.size()), adam_wv(params.w_v.size());
  AdamState adam_head(params.itm_head.size());
  AdamState adam_bias(1);

  const int group = 1 + config.negatives_per_positive;

  auto holdout_metrics = [&](StepMetrics& m) {
    double congruence_sum = 0.0;
    int ranked = 0;
    for (std::size_t i = 0; i + 1 < holdout.size(); i += 2) {
      const ForwardCache pos = forward_cached(params, holdout[i]);
      const ForwardCache neg = forward_cached(params, holdout[i + 1]);
      congruence_sum += cacr_over_heads(pos, holdout[i].n_lang(), holdout[i].n_vis(), nullptr, 0.0);
      if (pos.logit > neg.logit) ++ranked;
    }
    const double items = static_cast<double>(holdout.size() / 2);
    m.congruence = congruence_sum / items;
    m.holdout_acc = ranked / items;
  };

  // One batch: BCE over each group's positive + negatives, plus the
  // congruence term on positives. Returns pre-update losses; fills grads
  // unless null.
  auto run_batch = [&](double cacr_weight, ParamGrads* grads, double& itm_loss, double& cacr_loss) {
    itm_loss = 0.0;
    cacr_loss = 0.0;
    const double inv_samples = 1.0 / (config.batch_size * group);
    for (int b = 0; b < config.batch_size; ++b) {
      const int item = batch_rng.uniform_int(0, config.train_items - 1);
      const ToyScene& positive = pool[2 * item];
      const ToyScene& hard_negative = pool[2 * item + 1];

      std::vector<ToyScene> mismatches;
      mismatches.reserve(config.negatives_per_positive - 1);
      for (int k = 0; k + 1 < config.negatives_per_positive; ++k) {
        int other = batch_rng.uniform_int(0, config.train_items - 2);
        if (other >= item) ++other;
        mismatches.push_back(mismatched_negative(positive, pool[2 * other]));
      }

      auto process = [&](const ToyScene& sample, bool is_positive) {
        const ForwardCache cache = forward_cached(params, sample);
        const double y = sample.label;
        itm_loss += bce_with_logit(cache.logit, y) * inv_samples;
        std::vector<Matrix> d_scores(cache.s.size());
        std::vector<Matrix>* ds_ptr = nullptr;
        if (is_positive) {
          const bool need_grad = grads != nullptr && use_cacr && cacr_weight > 0.0;
          const double w = need_grad ? cacr_weight / config.batch_size : 0.0;
          cacr_loss += cacr_over_heads(cache, sample.n_lang(), sample.n_vis(),
                                       need_grad ? &d_scores : nullptr, w) /
                       config.batch_size;
          if (need_grad) ds_ptr = &d_scores;
        }
        if (grads != nullptr) {
          const double d_logit = (sigmoid(cache.logit) - y) * inv_samples;
          backward_sample(params, sample, cache, d_logit, ds_ptr, *grads);
        }
      };

      process(positive, true);
      process(hard_negative, false);
      for (const ToyScene& s : mismatches) process(s, false);
    }
  };

  TrainResult result;
  result.metrics.reserve(config.steps + 1);

  for (int t = 0; t < config.steps; ++t) {
    const double w = warmup_weight(config, t);
    ParamGrads grads(params);
    StepMetrics m;
    m.step = t;
    run_batch(w, &grads, m.itm_loss, m.cacr_loss);
    holdout_metrics(m);
    result.metrics.push_back(m);

    if (!std::isfinite(m.itm_loss) || !std::isfinite(m.cacr_loss)) {
      throw DomainError("training diverged: non-finite loss at step " + std::to_string(t));
    }

    const int adam_step = t + 1;
    adamw_update(params.token_embeddings.data(), grads.d_emb.data(), adam_emb,
                 config.learning_rate, adam_step, true);
    adamw_update(params.w_q.data(), grads.d_wq.data(), adam_wq, config.learning_rate, adam_step, true);
    adamw_update(params.w_k.data(), grads.d_wk.data(), adam_wk, config.learning_rate, adam_step, true);
    adamw_update(params.w_v.data(), grads.d_wv.data(), adam_wv, config.learning_rate, adam_step, true);
    adamw_update(params.itm_head, grads.d_head, adam_head, config.learning_rate, adam_step, true);
    std::vector<double> bias{params.itm_bias}, dbias{grads.d_bias};
    adamw_update(bias, dbias, adam_bias, config.learning_rate, adam_step, false);
    params.itm_bias = bias[0];
  }

  // Final (or, when steps == 0, initial) evaluation row.
  StepMetrics last;
  last.step = config.steps;
  run_batch(0.0, nullptr, last.itm_loss, last.cacr_loss);
  holdout_metrics(last);
  result.metrics.push_back(last);

  result.model = std::move(params);
  return result;
}

std::string metrics_to_csv(std::span<const StepMetrics> metrics) {
  std::string out = "step,itm_loss,cacr_loss,congruence,holdout_acc\n";
  char buf[256];
  for (const StepMetrics& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", m.step,
                  m.itm_loss, m.cacr_loss, m.congruence, m.holdout_acc);
    out += buf;
  }
  return out;
}

WinogroundScores winoground_scores_from_logits(std::span<const double> logits) {
  if (logits.empty() || logits.size() % 4 != 0) {
    throw DataError("winoground scoring: logits must come in groups of four");
  }
  WinogroundScores s;
  s.items = static_cast<int>(logits.size() / 4);
  int text = 0, image = 0, both = 0;
  for (int g = 0; g < s.items; ++g) {
    const double c0i0 = logits[4 * g + 0];
    const double c1i0 = logits[4 * g + 1];
    const double c1i1 = logits[4 * g + 2];
    const double c0i1 = logits[4 * g + 3];
    const bool text_ok = c0i0 > c1i0 && c1i1 > c0i1;
    const bool image_ok = c0i0 > c0i1 && c1i1 > c1i0;
    text += text_ok;
    image += image_ok;
    both += text_ok && image_ok;
  }
  s.text = static_cast<double>(text) / s.items;
  s.image = static_cast<double>(image) / s.items;
  s.group = static_cast<double>(both) / s.items;
  return s;
}

WinogroundScores winoground_style_eval(const EncoderParams& model,
                                       const std::vector<ToyScene>& quads) {
  if (quads.empty() || quads.size() % 4 != 0) {
    throw DataError("winoground eval: scenes must come in quadruples");
  }
  for (std::size_t g = 0; g + 3 < quads.size(); g += 4) {
    const ToyScene& q0 = quads[g];
    const ToyScene& q1 = quads[g + 1];
    const ToyScene& q2 = quads[g + 2];
    const ToyScene& q3 = quads[g + 3];
    const bool labels_ok = q0.label == 1 && q1.label == 0 && q2.label == 1 && q3.label == 0;
    const bool captions_ok = q0.lang_tokens == q3.lang_tokens && q1.lang_tokens == q2.lang_tokens;
    const bool images_ok = q0.vis_tokens == q1.vis_tokens && q2.vis_tokens == q3.vis_tokens;
    if (!labels_ok || !captions_ok || !images_ok) {
      throw DataError("winoground eval: unpaired scenes at group " + std::to_string(g / 4));
    }
  }
  std::vector<double> logits;
  logits.reserve(quads.size());
  for (const ToyScene& s : quads) {
    logits.push_back(forward(model, s).match_logit);
  }
  return winoground_scores_from_logits(logits);
}

}  // namespace congruence
