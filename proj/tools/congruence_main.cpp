// congruence: command-line front end for the attention-congruence toolkit.
//
// Subcommands: loss, oracle-check, gradcheck, train, eval, analyze, gen-scenes.
// Structured results go to stdout as JSON; every run also emits a manifest
// (manifest.json next to file outputs, otherwise one JSON line on stderr).
// Exit codes: 0 success, 1 failed numeric check, 2 validation error,
// 64 usage error, 65 malformed input data.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "congruence/analysis.hpp"
#include "congruence/congruence.hpp"
#include "congruence/divergence.hpp"
#include "congruence/gradients.hpp"
#include "congruence/rng.hpp"
#include "congruence/serialization.hpp"
#include "congruence/toy_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace congruence;

namespace {

constexpr const char* kVersion = "0.1.0";

int worker_count(int cases) {
  const unsigned hw = std::thread::hardware_concurrency();
  int n = hw > 0 ? static_cast<int>(hw) : 1;
  if (const char* env = std::getenv("CONGRUENCE_LAB_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return std::max(1, std::min(n, cases));
}

// Runs fn(case_id) for every case and max-reduces the returned values.
// Case results are independent of the thread count.
template <typename Fn>
double parallel_max(int cases, Fn&& fn) {
  const int workers = worker_count(cases);
  std::vector<double> worst(workers, 0.0);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      double local = 0.0;
      for (int c = w; c < cases; c += workers) {
        local = std::max(local, fn(c));
      }
      worst[w] = local;
    });
  }
  for (std::thread& t : threads) t.join();
  double out = 0.0;
  for (double v : worst) out = std::max(out, v);
  return out;
}

double matrix_rel_error(const Matrix& a, const Matrix& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    diff = std::max(diff, std::abs(a.data()[i] - b.data()[i]));
    scale = std::max({scale, std::abs(a.data()[i]), std::abs(b.data()[i])});
  }
  return diff / (scale + 1e-300);
}

BlockPartition random_partition(Rng& rng, int nl, int nv, double lo, double hi) {
  auto rand_matrix = [&](int r, int c) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
  };
  return BlockPartition{rand_matrix(nl, nl), rand_matrix(nl, nv),
                        rand_matrix(nv, nl), rand_matrix(nv, nv)};
}

void emit_manifest(const std::string& subcommand, const json& effective_config,
                   std::uint64_t seed, const std::vector<std::string>& artifacts,
                   const std::string& manifest_path) {
  const json m{{"subcommand", subcommand},
               {"config_digest", fnv1a_hex(effective_config.dump())},
               {"seed", seed},
               {"artifacts", artifacts},
               {"tool_version", kVersion}};
  if (manifest_path.empty()) {
    std::cerr << m.dump() << "\n";
  } else {
    write_text_file(manifest_path, m.dump() + "\n");
  }
}

// ---- subcommand bodies ----

struct OracleCheckConfig {
  int cases = 1000;
  std::uint64_t seed = 1;
  int min_side = 1;
  int max_side = 8;
  double scale = 3.0;
  double tolerance = 1e-10;
  bool mean_form = false;
};

int run_oracle_check(const OracleCheckConfig& cfg, const std::string& out_dir) {
  const double worst = parallel_max(cfg.cases, [&cfg](int case_id) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(case_id)));
    const int nl = rng.uniform_int(cfg.min_side, cfg.max_side);
    const int nv = rng.uniform_int(cfg.min_side, cfg.max_side);
    const BlockPartition p = random_partition(rng, nl, nv, -cfg.scale, cfg.scale);
    const WeightingForm form = cfg.mean_form ? WeightingForm::kMean : WeightingForm::kSum;

    Matrix closed_v = change_of_basis_v(p);
    Matrix closed_l = change_of_basis_l(p);
    if (cfg.mean_form) {
      // the mean form divides by the number of weighted terms per entry
      for (double& v : closed_v.data()) v /= static_cast<double>(nl) * nl;
      for (double& v : closed_l.data()) v /= static_cast<double>(nv) * nv;
    }
    const double err_v = matrix_rel_error(soft_equivalence_oracle_v(p, form), closed_v);
    const double err_l = matrix_rel_error(soft_equivalence_oracle_l(p, form), closed_l);
    return std::max(err_v, err_l);
  });

  const bool pass = worst < cfg.tolerance;
  const json config{{"cases", cfg.cases},       {"seed", cfg.seed},
                    {"min_side", cfg.min_side}, {"max_side", cfg.max_side},
                    {"scale", cfg.scale},       {"tolerance", cfg.tolerance},
                    {"form", cfg.mean_form ? "mean" : "sum"}};
  const json result{{"cases", cfg.cases},
                    {"form", cfg.mean_form ? "mean" : "sum"},
                    {"max_rel_error", worst},
                    {"tolerance", cfg.tolerance},
                    {"pass", pass}};
  std::cout << result.dump() << "\n";
  std::vector<std::string> artifacts;
  std::string manifest_path;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "oracle_check.json").string();
    write_text_file(path, result.dump() + "\n");
    artifacts.push_back(path);
    manifest_path = (fs::path(out_dir) / "manifest.json").string();
  }
  emit_manifest("oracle-check", config, cfg.seed, artifacts, manifest_path);
  return pass ? 0 : 1;
}

struct GradCheckConfig {
  int cases = 200;
  int probes = 100;
  std::uint64_t seed = 1;
  int min_side = 1;
  int max_side = 6;
  double scale = 2.0;
  double h = 1e-5;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradCheckConfig& cfg, const std::string& out_dir) {
  const double worst = parallel_max(cfg.cases, [&cfg](int case_id) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(case_id)));
    const int nl = rng.uniform_int(cfg.min_side, cfg.max_side);
    const int nv = rng.uniform_int(cfg.min_side, cfg.max_side);
    const BlockPartition p = random_partition(rng, nl, nv, -cfg.scale, cfg.scale);
    const BlockGradients g = cacr_gradients(p);
    const Matrix* blocks[4] = {&g.d_s_ll, &g.d_s_lv, &g.d_s_vl, &g.d_s_vv};

    double case_worst = 0.0;
    for (int probe = 0; probe < cfg.probes; ++probe) {
      const int which = rng.uniform_int(0, 3);
      const Matrix& block = *blocks[which];
      const int i = rng.uniform_int(0, block.rows() - 1);
      const int j = rng.uniform_int(0, block.cols() - 1);
      const double numeric = finite_difference(p, static_cast<BlockId>(which), i, j, cfg.h);
      const double err = std::abs(block(i, j) - numeric) / (std::abs(numeric) + 1e-8);
      case_worst = std::max(case_worst, err);
    }
    return case_worst;
  });

  const bool pass = worst < cfg.tolerance;
  const json config{{"cases", cfg.cases}, {"probes", cfg.probes}, {"seed", cfg.seed},
                    {"min_side", cfg.min_side}, {"max_side", cfg.max_side},
                    {"scale", cfg.scale}, {"h", cfg.h}, {"tolerance", cfg.tolerance}};
  const json result{{"cases", cfg.cases},         {"probes", cfg.probes},
                    {"h", cfg.h},                 {"max_rel_error", worst},
                    {"tolerance", cfg.tolerance}, {"pass", pass}};
  std::cout << result.dump() << "\n";
  std::vector<std::string> artifacts;
  std::string manifest_path;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "gradcheck.json").string();
    write_text_file(path, result.dump() + "\n");
    artifacts.push_back(path);
    manifest_path = (fs::path(out_dir) / "manifest.json").string();
  }
  emit_manifest("gradcheck", config, cfg.seed, artifacts, manifest_path);
  return pass ? 0 : 1;
}

int run_train(const std::string& config_path, const std::string& cacr_mode,
              const std::string& out_dir) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_train_config(config_path);
  const bool use_cacr = cacr_mode == "on";
  cfg.validate();

  const TrainResult result = train(cfg, use_cacr);

  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  const std::string model_path = (fs::path(out_dir) / "model.json").string();
  write_text_file(metrics_path, metrics_to_csv(result.metrics));
  write_text_file(model_path, model_to_json(result.model) + "\n");

  const json config = json::parse(train_config_to_json(cfg));
  emit_manifest("train", json{{"config", config}, {"cacr", use_cacr}}, cfg.seed,
                {metrics_path, model_path},
                (fs::path(out_dir) / "manifest.json").string());

  const StepMetrics& last = result.metrics.back();
  const json summary{{"out", out_dir},
                     {"steps", cfg.steps},
                     {"cacr", use_cacr ? "on" : "off"},
                     {"final_itm_loss", last.itm_loss},
                     {"final_cacr_loss", last.cacr_loss},
                     {"final_congruence", last.congruence},
                     {"final_holdout_acc", last.holdout_acc}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int run_eval(const std::string& model_path, const std::string& scenes_path) {
  const EncoderParams model = load_model(model_path);
  const SceneFile scenes = load_scenes(scenes_path);
  const WinogroundScores s = winoground_style_eval(model, scenes.scenes);
  const json result{{"text", s.text}, {"image", s.image}, {"group", s.group}, {"items", s.items}};
  std::cout << result.dump() << "\n";
  emit_manifest("eval", json{{"model", model_path}, {"scenes", scenes_path}}, 0, {}, "");
  return 0;
}

int run_analyze(const std::string& bundles_dir, const std::string& out_path) {
  if (!fs::is_directory(bundles_dir)) {
    throw DataError("analyze: not a directory: " + bundles_dir);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(bundles_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, AttentionBundle>> bundles;
  for (const fs::path& f : files) {
    bundles.emplace_back(f.stem().string(), load_bundle(f.string()));
  }
  if (bundles.empty()) {
    throw DataError("analyze: no bundle .json files in " + bundles_dir);
  }

  const CongruenceReport report = congruence_report(bundles);
  write_text_file(out_path, report_to_csv(report));

  emit_manifest("analyze", json{{"bundles", bundles_dir}, {"out", out_path}}, 0,
                {out_path}, out_path + ".manifest.json");
  std::cout << json{{"bundles", bundles.size()}, {"out", out_path}}.dump() << "\n";
  return 0;
}

int run_gen_scenes(int count, std::uint64_t seed, bool eval_quads,
                   const SceneGenConfig& gen, const std::string& out_path) {
  const std::vector<ToyScene> scenes =
      eval_quads ? generate_winoground_quads(count, seed, gen)
                 : generate_scenes(count, seed, gen);
  const std::string kind = eval_quads ? "eval-quads" : "train-pairs";
  write_text_file(out_path, scenes_to_json(scenes, gen, kind) + "\n");

  const json config{{"count", count}, {"seed", seed}, {"kind", kind},
                    {"entities", gen.entities}, {"d", gen.d}, {"noise", gen.noise},
                    {"min_lang", gen.min_lang}, {"max_lang", gen.max_lang},
                    {"min_vis", gen.min_vis}, {"max_vis", gen.max_vis}};
  emit_manifest("gen-scenes", config, seed, {out_path}, out_path + ".manifest.json");
  std::cout << json{{"scenes", scenes.size()}, {"kind", kind}, {"out", out_path}}.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-modal attention congruence toolkit"};
  app.require_subcommand(1);

  std::string bundle_path;
  auto* loss_cmd = app.add_subcommand("loss", "congruence losses of one attention bundle");
  loss_cmd->add_option("--bundle", bundle_path, "AttentionBundle JSON file")->required();

  OracleCheckConfig oracle_cfg;
  std::string oracle_out;
  auto* oracle_cmd = app.add_subcommand(
      "oracle-check", "loop-based soft-equivalence oracle vs the closed form");
  oracle_cmd->add_option("--cases", oracle_cfg.cases, "number of random partitions")
      ->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--seed", oracle_cfg.seed, "master seed");
  oracle_cmd->add_option("--min-side", oracle_cfg.min_side, "minimum tokens per modality");
  oracle_cmd->add_option("--max-side", oracle_cfg.max_side, "maximum tokens per modality");
  oracle_cmd->add_option("--scale", oracle_cfg.scale, "score entries drawn from [-scale, scale]");
  oracle_cmd->add_option("--tolerance", oracle_cfg.tolerance, "max relative error allowed");
  oracle_cmd->add_flag("--mean", oracle_cfg.mean_form,
                       "use the mean weighting form instead of the sum");
  oracle_cmd->add_option("--out", oracle_out, "directory for result + manifest files");

  GradCheckConfig grad_cfg;
  std::string grad_out;
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "analytic congruence gradients vs central finite differences");
  grad_cmd->add_option("--cases", grad_cfg.cases, "number of random partitions")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--probes", grad_cfg.probes, "probes per partition")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_cfg.seed, "master seed");
  grad_cmd->add_option("--min-side", grad_cfg.min_side, "minimum tokens per modality");
  grad_cmd->add_option("--max-side", grad_cfg.max_side, "maximum tokens per modality");
  grad_cmd->add_option("--scale", grad_cfg.scale, "score entries drawn from [-scale, scale]");
  grad_cmd->add_option("--fd-step", grad_cfg.h, "central difference step");
  grad_cmd->add_option("--tolerance", grad_cfg.tolerance, "max relative error allowed");
  grad_cmd->add_option("--out", grad_out, "directory for result + manifest files");

  std::string train_config_path, cacr_mode, train_out;
  auto* train_cmd = app.add_subcommand("train", "train the toy encoder");
  train_cmd->add_option("--config", train_config_path, "TrainConfig JSON file");
  train_cmd->add_option("--cacr", cacr_mode, "apply the congruence term")
      ->required()
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--out", train_out, "output directory")->required();

  std::string model_path, scenes_path;
  auto* eval_cmd = app.add_subcommand("eval", "Winoground-style scoring of a trained model");
  eval_cmd->add_option("--model", model_path, "model JSON file")->required();
  eval_cmd->add_option("--scenes", scenes_path, "eval-quads scenes JSON file")->required();

  std::string bundles_dir, analyze_out;
  auto* analyze_cmd = app.add_subcommand("analyze", "congruence report over bundle files");
  analyze_cmd->add_option("--bundles", bundles_dir, "directory of AttentionBundle .json files")
      ->required();
  analyze_cmd->add_option("--out", analyze_out, "output CSV path")->required();

  int gen_count = 16;
  std::uint64_t gen_seed = 0;
  bool eval_quads = false;
  SceneGenConfig gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-scenes", "generate synthetic paired scenes");
  gen_cmd->add_option("--count", gen_count, "number of items")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_flag("--eval-quads", eval_quads,
                    "emit caption/image swap quadruples instead of training pairs");
  gen_cmd->add_option("--entities", gen.entities, "distinct entity concepts");
  gen_cmd->add_option("--d", gen.d, "feature dimension");
  gen_cmd->add_option("--noise", gen.noise, "feature noise stddev");
  gen_cmd->add_option("--min-lang", gen.min_lang, "min caption length");
  gen_cmd->add_option("--max-lang", gen.max_lang, "max caption length");
  gen_cmd->add_option("--min-vis", gen.min_vis, "min visual tokens");
  gen_cmd->add_option("--max-vis", gen.max_vis, "max visual tokens");
  gen_cmd->add_option("--out", gen_out, "output scenes JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 64;
  }

  try {
    if (loss_cmd->parsed()) {
      const AttentionBundle bundle = load_bundle(bundle_path);
      const CacrLoss loss = cacr_total(partition(bundle));
      std::cout << json{{"loss_l", loss.loss_l}, {"loss_v", loss.loss_v}, {"total", loss.total}}
                       .dump()
                << "\n";
      emit_manifest("loss", json{{"bundle", bundle_path}}, 0, {}, "");
      return 0;
    }
    if (oracle_cmd->parsed()) return run_oracle_check(oracle_cfg, oracle_out);
    if (grad_cmd->parsed()) return run_gradcheck(grad_cfg, grad_out);
    if (train_cmd->parsed()) return run_train(train_config_path, cacr_mode, train_out);
    if (eval_cmd->parsed()) return run_eval(model_path, scenes_path);
    if (analyze_cmd->parsed()) return run_analyze(bundles_dir, analyze_out);
    if (gen_cmd->parsed()) return run_gen_scenes(gen_count, gen_seed, eval_quads, gen, gen_out);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 65;
  } catch (const DimensionError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
