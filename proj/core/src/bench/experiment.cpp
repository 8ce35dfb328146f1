#include "spigot/bench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "spigot/bench/io.hpp"
#include "spigot/util/keyvalue.hpp"

namespace spigot {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string structure_metric(IntermediateKind k) { return k == IntermediateKind::kTree ? "uas" : "lf1"; }

void run_jobs(std::size_t count, int threads, const std::function<void(std::size_t)>& job) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

void ExperimentConfig::validate() const {
  task.validate();
  train.validate();
  if (seeds.empty()) throw std::invalid_argument("experiment: no seeds given");
  if (proxies.empty()) throw std::invalid_argument("experiment: no proxies given");
  if (threads < 1) throw std::invalid_argument("experiment: threads must be at least 1");
  if (train.model.vocab_size != task.vocab_size) {
    throw std::invalid_argument("experiment: model vocab_size differs from the task vocabulary");
  }
  if (train.model.intermediate != task.kind) {
    throw std::invalid_argument("experiment: model intermediate kind differs from the task kind");
  }
  if (task.kind == IntermediateKind::kGraph &&
      std::find(proxies.begin(), proxies.end(), ProxyVariant::kSa) != proxies.end()) {
    throw std::invalid_argument(
        "experiment: SA cannot be trained with a semantic-graph intermediate layer; it needs marginal "
        "inference over graphs, which is not available. Remove 'sa' from proxies.");
  }
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  const auto entries = parse_key_values(text, source);
  std::vector<const KeyValue*> rest;
  for (const auto& kv : entries) {
    if (apply_task_key(cfg.task, kv, source)) continue;
    try {
      if (kv.key == "seeds") {
        cfg.seeds = kv_u64_list(kv, source);
      } else if (kv.key == "proxies") {
        cfg.proxies.clear();
        for (const auto& name : kv_list(kv)) cfg.proxies.push_back(parse_proxy_variant(name));
      } else if (kv.key == "output_dir") {
        cfg.output_dir = kv.value;
      } else if (kv.key == "data_dir") {
        cfg.data_dir = kv.value;
      } else if (kv.key == "threads") {
        cfg.threads = static_cast<int>(kv_int(kv, source));
      } else {
        rest.push_back(&kv);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(source, kv.line, e.what());
    }
  }
  cfg.train.model = default_model_for(cfg.task);
  for (const KeyValue* kv : rest) {
    if (!apply_train_key(cfg.train, *kv, source)) throw ConfigError(source, kv->line, "unknown key '" + kv->key + "'");
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, e.what());
  }
  return cfg;
}

double ExperimentResult::median(ProxyVariant proxy, const std::string& metric) const {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.proxy != proxy) continue;
    auto it = r.metrics.find(metric);
    if (it != r.metrics.end()) v.push_back(it->second);
  }
  return median_of(v);
}

std::string ExperimentResult::aggregate_csv() const {
  std::ostringstream out;
  out << "seed,proxy,metric,value\n";
  for (const auto& r : runs) {
    for (const auto& name : metric_names) {
      out << r.seed << ',' << to_string(r.proxy) << ',' << name << ',' << fmt(r.metrics.at(name)) << '\n';
    }
  }
  return out.str();
}

std::string ExperimentResult::summary_csv() const {
  std::ostringstream out;
  out << "proxy,metric,median,mean,min,max,n\n";
  for (ProxyVariant p : config.proxies) {
    for (const auto& name : metric_names) {
      std::vector<double> v;
      for (const auto& r : runs) {
        if (r.proxy == p) v.push_back(r.metrics.at(name));
      }
      if (v.empty()) continue;
      double sum = 0.0;
      for (double x : v) sum += x;
      out << to_string(p) << ',' << name << ',' << fmt(median_of(v)) << ',' << fmt(sum / static_cast<double>(v.size()))
          << ',' << fmt(*std::min_element(v.begin(), v.end())) << ',' << fmt(*std::max_element(v.begin(), v.end()))
          << ',' << v.size() << '\n';
    }
  }
  return out.str();
}

std::string ExperimentResult::result_json() const {
  using nlohmann::ordered_json;
  const bool graph = config.task.kind == IntermediateKind::kGraph;
  const std::string smetric = structure_metric(config.task.kind);
  auto has = [&](ProxyVariant p) {
    return std::find(config.proxies.begin(), config.proxies.end(), p) != config.proxies.end();
  };

  ordered_json j;
  j["format"] = "spigot-experiment";
  j["intermediate"] = std::string(to_string(config.task.kind));
  ordered_json seeds = ordered_json::array();
  for (auto s : config.seeds) seeds.push_back(s);
  j["seeds"] = seeds;
  ordered_json proxies = ordered_json::array();
  for (auto p : config.proxies) proxies.push_back(std::string(to_string(p)));
  j["proxies"] = proxies;
  j["task"] = {{"noise", config.task.noise},
               {"measured_corruption_rate", corruption_rate},
               {"label_threshold", label_threshold},
               {"positive_rate", positive_rate},
               {"surface_baseline_accuracy", surface_baseline}};

  ordered_json medians;
  for (auto p : config.proxies) {
    ordered_json m;
    for (const auto& name : metric_names) m[name] = median(p, name);
    medians[std::string(to_string(p))] = m;
  }
  j["medians"] = medians;

  ordered_json cmp;
  const auto P = ProxyVariant::kPipeline, S = ProxyVariant::kSpigot, T = ProxyVariant::kSte,
             A = ProxyVariant::kSa;
  if (has(S) && has(T)) {
    cmp["spigot_ge_ste_accuracy"] = median(S, "accuracy") >= median(T, "accuracy");
    cmp["spigot_drop_le_ste_drop"] = median(S, smetric + "_drop") <= median(T, smetric + "_drop");
  }
  if (has(S) && has(P)) cmp["spigot_ge_pipeline_accuracy"] = median(S, "accuracy") >= median(P, "accuracy");
  if (has(A) && has(P)) cmp["sa_minus_pipeline_accuracy"] = median(A, "accuracy") - median(P, "accuracy");
  j["comparisons"] = cmp;

  ordered_json agree;
  for (const auto& [name, report] : agreement) agree[name] = ordered_json::parse(agreement_to_json(report, graph));
  j["agreement"] = agree;
  j["category_convention"] = kOverlapConvention;
  return j.dump(2) + "\n";
}

SyntheticData load_experiment_data(const ExperimentConfig& cfg) {
  if (cfg.data_dir.empty()) return generate_dataset(cfg.task);
  namespace fs = std::filesystem;
  SyntheticData data;
  data.spec = cfg.task;
  auto load = [&](const char* name) {
    const std::string path = (fs::path(cfg.data_dir) / name).string();
    try {
      return read_dataset_jsonl(read_file(path), cfg.task.vocab_size);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ": " + e.what());
    }
  };
  data.intermediate = load("intermediate.jsonl");
  data.end = load("end.jsonl");
  data.eval = load("eval.jsonl");
  return data;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressSink& progress) {
  cfg.validate();
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  const SyntheticData data = load_experiment_data(cfg);
  const std::string smetric = structure_metric(cfg.task.kind);

  ExperimentResult result;
  result.config = cfg;
  result.metric_names = {"accuracy", smetric, smetric + "_drop", "end_loss_first", "end_loss_last"};
  result.corruption_rate = data.corruption_rate();
  result.positive_rate = data.positive_rate;
  result.surface_baseline = data.surface_baseline;
  result.label_threshold = data.label_threshold;
  say("data: corruption " + fmt(result.corruption_rate) + ", positive rate " + fmt(data.positive_rate) +
      ", surface baseline " + fmt(data.surface_baseline));

  // One pretrained starting point per seed, shared by every proxy.
  std::vector<std::optional<PipelineModel>> starts(cfg.seeds.size());
  run_jobs(cfg.seeds.size(), cfg.threads, [&](std::size_t i) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seeds[i];
    PipelineModel model(tc.model);
    std::mt19937_64 rng(tc.seed);
    model.initialize(rng);
    if (tc.pretrain_epochs > 0) train_intermediate(model, data.intermediate, tc, tc.pretrain_epochs);
    starts[i] = std::move(model);
  });

  const std::size_t np = cfg.proxies.size();
  std::vector<std::optional<PipelineModel>> trained(cfg.seeds.size() * np);
  result.runs.resize(cfg.seeds.size() * np);
  std::mutex say_mutex;
  run_jobs(result.runs.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t si = k / np;
    const ProxyVariant proxy = cfg.proxies[k % np];
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seeds[si];
    tc.pretrain_epochs = 0;
    PipelineModel model = *starts[si];
    RunRecord& rec = result.runs[k];
    rec.seed = tc.seed;
    rec.proxy = proxy;
    rec.history = train_joint(model, data.intermediate, data.end, tc, proxy).history;
    const MetricCounts c = evaluate(model, data.eval, proxy);
    rec.metrics["accuracy"] = c.accuracy();
    rec.metrics[smetric] = cfg.task.kind == IntermediateKind::kTree ? c.uas() : c.labeled_f1();
    std::optional<double> first, last;
    for (const auto& m : rec.history) {
      if (m.task != "end") continue;
      if (!first) first = m.loss;
      last = m.loss;
    }
    rec.metrics["end_loss_first"] = first.value_or(0.0);
    rec.metrics["end_loss_last"] = last.value_or(0.0);
    trained[k] = std::move(model);
    std::lock_guard<std::mutex> lock(say_mutex);
    say("seed " + std::to_string(rec.seed) + " " + std::string(to_string(proxy)) + ": accuracy " +
        fmt(rec.metrics["accuracy"]) + ", " + smetric + " " + fmt(rec.metrics[smetric]));
  });

  const auto pipe_it = std::find(cfg.proxies.begin(), cfg.proxies.end(), ProxyVariant::kPipeline);
  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    std::optional<double> base;
    if (pipe_it != cfg.proxies.end()) {
      base = result.runs[si * np + static_cast<std::size_t>(pipe_it - cfg.proxies.begin())].metrics.at(smetric);
    }
    for (std::size_t pi = 0; pi < np; ++pi) {
      auto& m = result.runs[si * np + pi].metrics;
      m[smetric + "_drop"] = base ? *base - m.at(smetric) : 0.0;
    }
  }

  if (pipe_it != cfg.proxies.end()) {
    const std::size_t pp = static_cast<std::size_t>(pipe_it - cfg.proxies.begin());
    for (std::size_t pi = 0; pi < np; ++pi) {
      if (pi == pp) continue;
      const ProxyVariant other = cfg.proxies[pi];
      AgreementReport total;
      for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        total += partition_by_agreement(*trained[si * np + pp], ProxyVariant::kPipeline, *trained[si * np + pi],
                                        other, data.eval);
      }
      result.agreement["pipeline_vs_" + std::string(to_string(other))] = total;
    }
  }
  return result;
}

void write_experiment(const ExperimentResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "runs");
  write_file((fs::path(dir) / "aggregate.csv").string(), result.aggregate_csv());
  write_file((fs::path(dir) / "summary.csv").string(), result.summary_csv());
  write_file((fs::path(dir) / "result.json").string(), result.result_json());
  for (const auto& r : result.runs) {
    std::string lines;
    for (const auto& m : r.history) lines += m.to_json_line() + "\n";
    const std::string name = "seed" + std::to_string(r.seed) + "_" + std::string(to_string(r.proxy)) + ".jsonl";
    write_file((fs::path(dir) / "runs" / name).string(), lines);
  }
}

}  // namespace spigot
