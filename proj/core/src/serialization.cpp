#include "congruence/serialization.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace congruence {

namespace {

using nlohmann::json;

json parse(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw DataError(std::string(what) + ": malformed JSON");
  }
  return j;
}

json require(const json& j, const char* key, const char* what) {
  if (!j.is_object() || !j.contains(key)) {
    throw DataError(std::string(what) + ": missing field '" + key + "'");
  }
  return j.at(key);
}

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from(const json& j, const char* what) {
  try {
    const int rows = require(j, "rows", what).get<int>();
    const int cols = require(j, "cols", what).get<int>();
    std::vector<double> data = require(j, "data", what).get<std::vector<double>>();
    return Matrix(rows, cols, std::move(data));
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
}

json scene_json(const ToyScene& s) {
  json corr = json::array();
  for (const auto& [li, vi] : s.correspondence) corr.push_back({li, vi});
  return json{{"lang_tokens", s.lang_tokens},
              {"vis_tokens", matrix_json(s.vis_tokens)},
              {"correspondence", corr},
              {"relation", {s.relation_subject, s.relation_object}},
              {"label", s.label}};
}

ToyScene scene_from(const json& j) {
  try {
    ToyScene s;
    s.lang_tokens = require(j, "lang_tokens", "scene").get<std::vector<int>>();
    s.vis_tokens = matrix_from(require(j, "vis_tokens", "scene"), "scene vis_tokens");
    for (const json& pair : require(j, "correspondence", "scene")) {
      if (!pair.is_array() || pair.size() != 2) {
        throw DataError("scene: correspondence entries must be [lang, vis] pairs");
      }
      const int li = pair[0].get<int>();
      const int vi = pair[1].get<int>();
      if (li < 0 || li >= s.n_lang() || vi < 0 || vi >= s.n_vis()) {
        throw DataError("scene: correspondence index out of range");
      }
      s.correspondence.emplace_back(li, vi);
    }
    const json rel = require(j, "relation", "scene");
    if (!rel.is_array() || rel.size() != 2) {
      throw DataError("scene: relation must be a [subject, object] pair");
    }
    s.relation_subject = rel[0].get<int>();
    s.relation_object = rel[1].get<int>();
    s.label = require(j, "label", "scene").get<int>();
    if (s.label != 0 && s.label != 1) {
      throw DataError("scene: label must be 0 or 1");
    }
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("scene: ") + e.what());
  }
}

json gen_config_json(const SceneGenConfig& cfg) {
  return json{{"entities", cfg.entities}, {"d", cfg.d},       {"noise", cfg.noise},
              {"min_lang", cfg.min_lang}, {"max_lang", cfg.max_lang},
              {"min_vis", cfg.min_vis},   {"max_vis", cfg.max_vis}};
}

SceneGenConfig gen_config_from(const json& j, const char* what) {
  SceneGenConfig cfg;
  try {
    if (j.contains("entities")) cfg.entities = j.at("entities").get<int>();
    if (j.contains("d")) cfg.d = j.at("d").get<int>();
    if (j.contains("noise")) cfg.noise = j.at("noise").get<double>();
    if (j.contains("min_lang")) cfg.min_lang = j.at("min_lang").get<int>();
    if (j.contains("max_lang")) cfg.max_lang = j.at("max_lang").get<int>();
    if (j.contains("min_vis")) cfg.min_vis = j.at("min_vis").get<int>();
    if (j.contains("max_vis")) cfg.max_vis = j.at("max_vis").get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
  return cfg;
}

}  // namespace

std::string matrix_to_json(const Matrix& m) { return matrix_json(m).dump(); }

Matrix matrix_from_json(const std::string& text) {
  return matrix_from(parse(text, "matrix"), "matrix");
}

std::string bundle_to_json(const AttentionBundle& b) {
  return json{{"n_lang", b.n_lang}, {"n_vis", b.n_vis}, {"scores", matrix_json(b.scores)}}.dump();
}

AttentionBundle bundle_from_json(const std::string& text) {
  const json j = parse(text, "bundle");
  AttentionBundle b;
  try {
    b.n_lang = require(j, "n_lang", "bundle").get<int>();
    b.n_vis = require(j, "n_vis", "bundle").get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bundle: ") + e.what());
  }
  b.scores = matrix_from(require(j, "scores", "bundle"), "bundle scores");
  return b;
}

std::string scenes_to_json(const std::vector<ToyScene>& scenes,
                           const SceneGenConfig& cfg, const std::string& kind) {
  json arr = json::array();
  for (const ToyScene& s : scenes) arr.push_back(scene_json(s));
  return json{{"kind", kind}, {"generator", gen_config_json(cfg)}, {"scenes", arr}}.dump();
}

SceneFile scenes_from_json(const std::string& text) {
  const json j = parse(text, "scenes");
  SceneFile f;
  try {
    f.kind = require(j, "kind", "scenes").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(std::string("scenes: ") + e.what());
  }
  f.cfg = gen_config_from(require(j, "generator", "scenes"), "scenes generator");
  for (const json& s : require(j, "scenes", "scenes")) {
    f.scenes.push_back(scene_from(s));
  }
  if (f.scenes.empty()) throw DataError("scenes: empty collection");
  for (const ToyScene& s : f.scenes) {
    if (s.vis_tokens.cols() != f.cfg.d) {
      throw DataError("scenes: visual feature dimension disagrees with generator d");
    }
  }
  return f;
}

std::string model_to_json(const EncoderParams& params) {
  return json{{"d", params.d()},
              {"heads", params.heads},
              {"token_embeddings", matrix_json(params.token_embeddings)},
              {"w_q", matrix_json(params.w_q)},
              {"w_k", matrix_json(params.w_k)},
              {"w_v", matrix_json(params.w_v)},
              {"itm_head", params.itm_head},
              {"itm_bias", params.itm_bias}}
      .dump();
}

EncoderParams model_from_json(const std::string& text) {
  const json j = parse(text, "model");
  EncoderParams p;
  try {
    p.heads = require(j, "heads", "model").get<int>();
    p.token_embeddings = matrix_from(require(j, "token_embeddings", "model"), "model embeddings");
    p.w_q = matrix_from(require(j, "w_q", "model"), "model w_q");
    p.w_k = matrix_from(require(j, "w_k", "model"), "model w_k");
    p.w_v = matrix_from(require(j, "w_v", "model"), "model w_v");
    p.itm_head = require(j, "itm_head", "model").get<std::vector<double>>();
    p.itm_bias = require(j, "itm_bias", "model").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
  p.validate();
  return p;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  return json{{"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"negatives_per_positive", cfg.negatives_per_positive},
              {"cacr_weight_max", cfg.cacr_weight_max},
              {"warmup_tau", cfg.warmup_tau},
              {"steps", cfg.steps},
              {"seed", cfg.seed},
              {"heads", cfg.heads},
              {"train_items", cfg.train_items},
              {"holdout_items", cfg.holdout_items},
              {"scene", gen_config_json(cfg.scene)}}
      .dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = parse(text, "train config");
  TrainConfig cfg;
  try {
    if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("negatives_per_positive")) {
      cfg.negatives_per_positive = j.at("negatives_per_positive").get<int>();
    }
    if (j.contains("cacr_weight_max")) cfg.cacr_weight_max = j.at("cacr_weight_max").get<double>();
    if (j.contains("warmup_tau")) cfg.warmup_tau = j.at("warmup_tau").get<double>();
    if (j.contains("steps")) cfg.steps = j.at("steps").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("heads")) cfg.heads = j.at("heads").get<int>();
    if (j.contains("train_items")) cfg.train_items = j.at("train_items").get<int>();
    if (j.contains("holdout_items")) cfg.holdout_items = j.at("holdout_items").get<int>();
    if (j.contains("scene")) cfg.scene = gen_config_from(j.at("scene"), "train config scene");
  } catch (const json::exception& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  return cfg;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open file: " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write file: " + path);
  }
  out << content;
}

AttentionBundle load_bundle(const std::string& path) {
  return bundle_from_json(read_text_file(path));
}

SceneFile load_scenes(const std::string& path) {
  return scenes_from_json(read_text_file(path));
}

EncoderParams load_model(const std::string& path) {
  return model_from_json(read_text_file(path));
}

TrainConfig load_train_config(const std::string& path) {
  return train_config_from_json(read_text_file(path));
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace congruence
