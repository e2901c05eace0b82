#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "congruence/attention.hpp"
#include "congruence/toy_model.hpp"

namespace congruence {

// JSON interchange formats shared by every CLI subcommand. Matrix:
//   {"rows": R, "cols": C, "data": [R*C doubles, row-major]}
// AttentionBundle:
//   {"n_lang": L, "n_vis": V, "scores": <Matrix>}
// Malformed input throws DataError; shape/value violations surface as
// DimensionError / DomainError from validation.

std::string matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const std::string& text);

std::string bundle_to_json(const AttentionBundle& b);
AttentionBundle bundle_from_json(const std::string& text);

std::string scenes_to_json(const std::vector<ToyScene>& scenes,
                           const SceneGenConfig& cfg, const std::string& kind);
struct SceneFile {
  std::vector<ToyScene> scenes;
  SceneGenConfig cfg;
  std::string kind;  // "train-pairs" or "eval-quads"
};
SceneFile scenes_from_json(const std::string& text);

std::string model_to_json(const EncoderParams& params);
EncoderParams model_from_json(const std::string& text);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

// File helpers; read throws DataError when the file can't be opened.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

AttentionBundle load_bundle(const std::string& path);
SceneFile load_scenes(const std::string& path);
EncoderParams load_model(const std::string& path);
TrainConfig load_train_config(const std::string& path);

/// FNV-1a 64-bit digest, hex-encoded; used for config digests in run
/// manifests.
std::string fnv1a_hex(const std::string& text);

}  // namespace congruence
