#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "congruence/attention.hpp"

namespace congruence {

/// Knobs for the synthetic scene generator. Entity geometry (centroids, role
/// offset) is a fixed function of `entities` and `d` so that scene sets drawn
/// with different seeds stay mutually compatible.
struct SceneGenConfig {
  int entities = 8;    // distinct entity concepts
  int d = 16;          // visual feature / embedding dimension
  double noise = 0.1;  // stddev of per-dimension feature noise
  int min_lang = 3;
  int max_lang = 6;
  int min_vis = 3;
  int max_vis = 6;
};

/// One synthetic paired scene: a caption over discrete symbols, visual
/// feature tokens, the ground-truth word-object correspondence, a directed
/// relation between the two entities, and the match label (1 when caption
/// order agrees with the relation direction encoded in the image).
struct ToyScene {
  std::vector<int> lang_tokens;                     // symbol ids, length n_lang
  Matrix vis_tokens;                                // n_vis x d feature rows
  std::vector<std::pair<int, int>> correspondence;  // (lang idx, vis idx)
  int relation_subject = 0;                         // entity id of the source
  int relation_object = 0;                          // entity id of the target
  int label = 0;

  int n_lang() const { return static_cast<int>(lang_tokens.size()); }
  int n_vis() const { return vis_tokens.rows(); }
};

// Caption symbol layout. Captions have no positional encoding in the
// encoder, so slot order is marked lexically: the entity filling the first
// (subject) slot and the second (object) slot use distinct symbol ids, the
// way case marking does in language.
int subject_symbol(int entity);
int object_symbol(int entity);
int relation_symbol(const SceneGenConfig& cfg);
int filler_symbol(const SceneGenConfig& cfg, int k);
int vocabulary_size(const SceneGenConfig& cfg);

/// Fixed entity cluster centroids, one row per entity. Deterministic in
/// (entities, d) only; independent of the scene seed.
Matrix entity_centroids(const SceneGenConfig& cfg);

/// Fixed offset added to the visual token of the relation *subject*; this is
/// the geometric encoding of relation direction.
std::vector<double> role_offset(const SceneGenConfig& cfg);

/// Generates `count` positive scenes, each immediately followed by its
/// hard negative (same image, the two entity words swapped). Deterministic
/// given the seed; output length is 2 * count.
std::vector<ToyScene> generate_scenes(int count, std::uint64_t seed,
                                      const SceneGenConfig& cfg = {});

/// Generates `count` caption/image swap quadruples for Winoground-style
/// scoring; output length is 4 * count, each group ordered as
/// (C0,I0,1), (C1,I0,0), (C1,I1,1), (C0,I1,0) where C1 swaps the entity
/// words of C0 and I1 swaps the relation direction of I0.
std::vector<ToyScene> generate_winoground_quads(int count, std::uint64_t seed,
                                                const SceneGenConfig& cfg = {});

/// Single-layer joint-attention encoder parameters with an image-text
/// matching head. d is fixed per run; token_embeddings has one row per
/// vocabulary symbol.
struct EncoderParams {
  Matrix token_embeddings;  // vocabulary x d
  Matrix w_q, w_k, w_v;     // d x d
  std::vector<double> itm_head;  // d
  double itm_bias = 0.0;
  int heads = 1;

  int d() const { return w_q.rows(); }
  void validate() const;
};

EncoderParams init_params(int vocabulary, int d, int heads, std::uint64_t seed);

/// One encoder pass: raw joint score matrices (one bundle per head, for the
/// congruence loss) plus the scalar matching logit.
struct ForwardResult {
  std::vector<AttentionBundle> head_scores;
  double match_logit = 0.0;
};

ForwardResult forward(const EncoderParams& params, const ToyScene& scene);

struct TrainConfig {
  double learning_rate = 5e-5;
  int batch_size = 4;
  int negatives_per_positive = 31;
  double cacr_weight_max = 1.0;
  double warmup_tau = 0.0;  // <= 0 means steps / 5
  int steps = 2000;
  std::uint64_t seed = 0;
  int heads = 1;
  int train_items = 64;
  int holdout_items = 16;
  SceneGenConfig scene;

  void validate() const;
};

/// Warmup weight of the congruence term at a given step:
/// cacr_weight_max * (1 - exp(-step / tau)); 0 at step 0.
double warmup_weight(const TrainConfig& cfg, int step);

struct StepMetrics {
  int step = 0;
  double itm_loss = 0.0;     // batch matching loss
  double cacr_loss = 0.0;    // batch congruence loss (logged even when unused)
  double congruence = 0.0;   // mean cacr_total on held-out positives
  double holdout_acc = 0.0;  // held-out positive-over-negative ranking accuracy
};

struct TrainResult {
  EncoderParams model;
  std::vector<StepMetrics> metrics;
};

/// Deterministic training loop: image-text matching BCE over 1 positive +
/// negatives_per_positive negatives per group, plus the warmup-weighted
/// congruence loss on positives when use_cacr is set. Throws DomainError if
/// the loss diverges to NaN.
TrainResult train(const TrainConfig& config, bool use_cacr);

std::string metrics_to_csv(std::span<const StepMetrics> metrics);

struct WinogroundScores {
  double text = 0.0;
  double image = 0.0;
  double group = 0.0;
  int items = 0;
};

/// Scores quadruples produced by generate_winoground_quads (or any
/// collection with the same group-of-4 structure). Throws DataError when the
/// collection is not properly paired.
WinogroundScores winoground_style_eval(const EncoderParams& model,
                                       const std::vector<ToyScene>& quads);

/// The scoring rule alone, on logits laid out in groups of four
/// (s(C0,I0), s(C1,I0), s(C1,I1), s(C0,I1)).
WinogroundScores winoground_scores_from_logits(std::span<const double> logits);

}  // namespace congruence
