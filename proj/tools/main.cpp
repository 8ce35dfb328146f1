#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "spigot/bench/analysis.hpp"
#include "spigot/bench/experiment.hpp"
#include "spigot/bench/io.hpp"
#include "spigot/bench/synthetic.hpp"
#include "spigot/decode.hpp"
#include "spigot/learn/gradient_checks.hpp"
#include "spigot/marginals.hpp"
#include "spigot/project.hpp"
#include "spigot/util/keyvalue.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace spigot;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
  }
}

std::vector<std::string> word_forms(const SentenceInstance& inst) {
  std::vector<std::string> forms;
  for (int t : inst.tokens) forms.push_back("w" + std::to_string(t));
  return forms;
}

int cmd_decode(const std::string& scores_path, const std::string& format, const std::string& out) {
  const auto records = read_score_records(read_file(scores_path));
  std::string text;
  if (format == "conll") {
    for (const auto& r : records) text += write_conll(eisner_decode(r.scores), r.forms) + "\n";
  } else {
    for (const auto& r : records) {
      const DepTree t = eisner_decode(r.scores);
      text += ordered_json{{"heads", t.heads()}, {"score", tree_score(r.scores, t)}}.dump() + "\n";
    }
  }
  emit(text, out);
  return 0;
}

int cmd_project(const std::string& polytope, const std::string& input, const std::string& out) {
  const ProjectionInput in = read_projection_input(read_file(input));
  const ArcIndexer idx = build_arc_indexer(in.n, in.root);
  StructureVec p;
  if (polytope == "dep") {
    if (in.values.size() != idx.size()) {
      throw std::invalid_argument("project: expected " + std::to_string(idx.size()) + " values for n = " +
                                  std::to_string(in.n) + ", got " + std::to_string(in.values.size()));
    }
    p = project_dep(in.values, idx);
  } else {
    if (in.labels < 1) throw std::invalid_argument("project: sdp polytope needs \"labels\" >= 1");
    const LabeledArcIndexer lidx(idx, in.labels);
    const std::size_t want = idx.size() + lidx.size();
    if (in.values.size() != want) {
      throw std::invalid_argument("project: expected " + std::to_string(want) + " values, got " +
                                  std::to_string(in.values.size()));
    }
    p = project_sdp(in.values, lidx);
  }
  emit(ordered_json(p.values).dump() + "\n", out);
  return 0;
}

int cmd_marginals(const std::string& input, const std::string& out) {
  std::string text;
  for (const auto& r : read_score_records(read_file(input))) {
    const MarginalResult m = inside_outside(r.scores);
    ordered_json matrix = ordered_json::array();
    const int n = r.scores.indexer.length();
    for (int h = 0; h <= n; ++h) {
      ordered_json row = ordered_json::array();
      for (int j = 0; j <= n; ++j) {
        row.push_back(r.scores.indexer.contains(h, j) ? m.arc_marginals.values[r.scores.indexer.index(h, j)] : 0.0);
      }
      matrix.push_back(row);
    }
    text += ordered_json{{"log_partition", m.log_partition}, {"marginals", m.arc_marginals.values}, {"matrix", matrix}}
                .dump() +
            "\n";
  }
  emit(text, out);
  return 0;
}

int cmd_gradcheck(const std::string& module, int instances, std::uint64_t seed) {
  const auto results = run_gradient_checks(module, instances, seed);
  bool ok = true;
  std::printf("%-30s %9s %14s %10s  %s\n", "block", "instances", "max_rel_error", "tolerance", "status");
  for (const auto& r : results) {
    std::printf("%-30s %9d %14.3e %10.0e  %s\n", r.block.c_str(), r.instances, r.max_rel_error, r.tolerance,
                r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? 0 : kExitFailure;
}

int cmd_train(const std::string& config_path, const std::string& proxy_name, std::uint64_t seed, std::string out) {
  ExperimentConfig cfg = parse_experiment_config(read_file(config_path), config_path);
  const ProxyVariant proxy = parse_proxy_variant(proxy_name);
  if (out.empty()) out = cfg.output_dir.empty() ? "." : cfg.output_dir;
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  const SyntheticData data = load_experiment_data(cfg);

  fs::create_directories(out);
  std::ofstream metrics(fs::path(out) / "metrics.jsonl");
  PipelineModel model(tc.model);
  std::mt19937_64 rng(seed);
  model.initialize(rng);
  auto sink = [&](const EpochMetrics& m) {
    metrics << m.to_json_line() << '\n';
    std::cerr << m.to_json_line() << '\n';
  };
  if (tc.sampling == SamplingMode::kUnion && tc.pretrain_epochs > 0) {
    train_intermediate(model, data.intermediate, tc, tc.pretrain_epochs, &data.eval, sink);
  }
  train_joint(model, data.intermediate, data.end, tc, proxy, &data.eval, sink);
  write_file((fs::path(out) / "model.json").string(), model.to_json());

  const MetricCounts c = evaluate(model, data.eval, proxy);
  ordered_json summary{{"proxy", std::string(to_string(proxy))}, {"seed", seed}, {"accuracy", c.accuracy()}};
  if (model.spec().intermediate == IntermediateKind::kTree) {
    summary["uas"] = c.uas();
  } else {
    summary["unlabeled_f1"] = c.unlabeled_f1();
    summary["labeled_f1"] = c.labeled_f1();
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_analyze(const std::string& a_path, const std::string& b_path, const std::string& data_path,
                const std::string& out) {
  const PipelineModel a = PipelineModel::from_json(read_file(a_path));
  const PipelineModel b = PipelineModel::from_json(read_file(b_path));
  if (a.spec().intermediate != b.spec().intermediate) {
    throw std::invalid_argument("analyze: the two models have different intermediate structures");
  }
  const Dataset eval = read_dataset_jsonl(read_file(data_path), a.spec().vocab_size);
  const AgreementReport r = partition_by_agreement(a, a.trained_proxy(), b, b.trained_proxy(), eval);
  emit(agreement_to_json(r, a.spec().intermediate == IntermediateKind::kGraph, 2) + "\n", out);
  return 0;
}

int cmd_gen(const std::string& spec_path, const std::string& out) {
  const SyntheticTaskSpec spec = parse_task_spec(read_file(spec_path), spec_path);
  const SyntheticData data = generate_dataset(spec);
  fs::create_directories(out);
  write_file((fs::path(out) / "intermediate.jsonl").string(), write_dataset_jsonl(data.intermediate));
  write_file((fs::path(out) / "end.jsonl").string(), write_dataset_jsonl(data.end));
  write_file((fs::path(out) / "eval.jsonl").string(), write_dataset_jsonl(data.eval));
  if (spec.kind == IntermediateKind::kTree) {
    std::string conll;
    for (const auto& inst : data.intermediate) conll += write_conll(*inst.gold_tree, word_forms(inst)) + "\n";
    write_file((fs::path(out) / "intermediate.conll").string(), conll);
  }
  ordered_json meta{{"intermediate", std::string(to_string(spec.kind))},
                    {"seed", spec.seed},
                    {"noise", spec.noise},
                    {"measured_corruption_rate", data.corruption_rate()},
                    {"label_threshold", data.label_threshold},
                    {"positive_rate", data.positive_rate},
                    {"surface_baseline_accuracy", data.surface_baseline},
                    {"sizes",
                     {{"intermediate", data.intermediate.size()},
                      {"end", data.end.size()},
                      {"eval", data.eval.size()}}}};
  write_file((fs::path(out) / "meta.json").string(), meta.dump(2) + "\n");
  std::cout << meta.dump() << '\n';
  return 0;
}

int cmd_experiment(const std::string& config_path, std::string out, int threads, bool quiet) {
  ExperimentConfig cfg = parse_experiment_config(read_file(config_path), config_path);
  if (threads > 0) cfg.threads = threads;
  if (out.empty()) out = cfg.output_dir;
  if (out.empty()) throw std::invalid_argument("experiment: no output directory (use --out or output_dir)");
  const ExperimentResult r = run_experiment(cfg, [&](const std::string& msg) {
    if (!quiet) std::cerr << msg << '\n';
  });
  write_experiment(r, out);
  std::cout << r.summary_csv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured argmax layers: decoding, projections, gradient proxies and pipeline training"};
  app.require_subcommand(1);
  std::string out;

  auto* decode = app.add_subcommand("decode", "Eisner-decode arc score files");
  std::string scores_path, format = "conll";
  decode->add_option("--scores", scores_path, "JSON score file (object, array or JSON lines)")->required();
  decode->add_option("--format", format, "Output format")->check(CLI::IsMember({"conll", "json"}));
  decode->add_option("--out", out, "Output file (default stdout)");

  auto* project = app.add_subcommand("project", "Euclidean projection onto a relaxed polytope");
  std::string polytope, input;
  project->add_option("--polytope", polytope, "dep or sdp")->required()->check(CLI::IsMember({"dep", "sdp"}));
  project->add_option("--input", input, "JSON {n, root?, labels?, values}")->required();
  project->add_option("--out", out, "Output file (default stdout)");

  auto* marginals = app.add_subcommand("marginals", "Arc marginals by inside-outside");
  marginals->add_option("--input", input, "JSON score file")->required();
  marginals->add_option("--out", out, "Output file (default stdout)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of the backward passes");
  std::string module = "all";
  int instances = 20;
  std::uint64_t gc_seed = 7;
  gradcheck->add_option("--module", module, "Module to check")->check(CLI::IsMember(gradient_check_modules()));
  gradcheck->add_option("--instances", instances, "Random instances per block")->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", gc_seed, "Random seed");

  auto* train = app.add_subcommand("train", "Train one pipeline with one proxy");
  std::string config_path, proxy = "spigot";
  std::uint64_t seed = 1;
  train->add_option("--config", config_path, "key = value configuration file")->required();
  train->add_option("--proxy", proxy, "Gradient proxy")->check(CLI::IsMember({"pipeline", "ste", "spigot", "sa"}));
  train->add_option("--seed", seed, "Model seed");
  train->add_option("--out", out, "Output directory (default: output_dir from the config, else .)");

  auto* analyze = app.add_subcommand("analyze", "Agreement partition and head-change categories of two models");
  std::string a_path, b_path, data_path;
  analyze->add_option("--a", a_path, "First model (model.json)")->required();
  analyze->add_option("--b", b_path, "Second model (model.json)")->required();
  analyze->add_option("--data", data_path, "Evaluation JSON lines")->required();
  analyze->add_option("--out", out, "Output file (default stdout)");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic task");
  std::string spec_path;
  gen->add_option("--spec", spec_path, "key = value task specification")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* experiment = app.add_subcommand("experiment", "Train every proxy on every seed and tabulate");
  int threads = 0;
  bool quiet = false;
  experiment->add_option("--config", config_path, "key = value configuration file")->required();
  experiment->add_option("--out", out, "Output directory (default: output_dir from the config)");
  experiment->add_option("--threads", threads, "Parallel runs (default: threads from the config)");
  experiment->add_flag("--quiet", quiet, "No progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*decode) return cmd_decode(scores_path, format, out);
    if (*project) return cmd_project(polytope, input, out);
    if (*marginals) return cmd_marginals(input, out);
    if (*gradcheck) return cmd_gradcheck(module, instances, gc_seed);
    if (*train) return cmd_train(config_path, proxy, seed, out);
    if (*analyze) return cmd_analyze(a_path, b_path, data_path, out);
    if (*gen) return cmd_gen(spec_path, out);
    if (*experiment) return cmd_experiment(config_path, out, threads, quiet);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
