#include "travelsat/orchestrator.hpp"

#include "travelsat/label_rules.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <filesystem>
#include <thread>

#include <fmt/format.h>

#include "travelsat/error.hpp"
#include "travelsat/mock_backend.hpp"
#include "travelsat/prompting.hpp"
#include "travelsat/rng.hpp"
#include "travelsat/text.hpp"

namespace travelsat {

using nlohmann::json;

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, std::string_view where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

std::string csv_header(const std::string& hash) { return "# config_hash=" + hash + "\n"; }

std::string fixed(double x, int decimals = 6) { return text::format_fixed(x, decimals); }

std::string k_label(std::size_t k) { return k == 0 ? "0 (zero-shot)" : std::to_string(k); }

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

std::string cell_or_failed(const std::vector<MetricPair>& ok, bool use_mse) {
  if (ok.empty()) return "failed";
  std::vector<double> v;
  for (const auto& m : ok) v.push_back(use_mse ? m.mse : m.mape);
  return format_mean_sd(mean_sd(v));
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    reject_unknown(j, {"name", "data", "protocol", "llm", "output"}, "config");
    read_if(j, "name", c.name);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown(d, {"path", "schema", "marginals", "synthetic"}, "data");
      read_if(d, "path", c.data_path);
      read_if(d, "schema", c.schema_path);
      read_if(d, "marginals", c.marginals_path);
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        reject_unknown(s, {"n", "seed", "label_rule", "noise_sd"}, "data.synthetic");
        read_if(s, "n", c.synth.n);
        read_if(s, "seed", c.synth.seed);
        read_if(s, "label_rule", c.synth.label_rule);
        read_if(s, "noise_sd", c.synth.noise_sd);
      }
    }
    if (j.contains("protocol")) {
      const auto& p = j.at("protocol");
      reject_unknown(p, {"support_sizes", "repeats", "train_fraction", "seed", "vary_split", "batch_size",
                         "importance_support", "fractions", "gbdt"},
                     "protocol");
      read_if(p, "support_sizes", c.support_sizes);
      read_if(p, "repeats", c.repeats);
      read_if(p, "train_fraction", c.train_fraction);
      read_if(p, "seed", c.seed);
      read_if(p, "vary_split", c.vary_split);
      read_if(p, "batch_size", c.batch_size);
      read_if(p, "importance_support", c.importance_support);
      read_if(p, "fractions", c.fractions);
      if (p.contains("gbdt")) {
        const auto& g = p.at("gbdt");
        reject_unknown(g, {"n_trees", "max_depth", "learning_rate", "min_leaf", "subsample", "seed"}, "gbdt");
        read_if(g, "n_trees", c.gbdt.n_trees);
        read_if(g, "max_depth", c.gbdt.max_depth);
        read_if(g, "learning_rate", c.gbdt.learning_rate);
        read_if(g, "min_leaf", c.gbdt.min_leaf);
        read_if(g, "subsample", c.gbdt.subsample);
        read_if(g, "seed", c.gbdt.seed);
      }
    }
    if (j.contains("llm")) {
      const auto& l = j.at("llm");
      reject_unknown(l, {"model", "temperature", "max_output_tokens", "endpoint", "timeout_seconds",
                         "api_key_env", "mock", "max_in_flight", "max_attempts", "initial_backoff_ms",
                         "max_parse_attempts"},
                     "llm");
      read_if(l, "model", c.llm.model_name);
      read_if(l, "temperature", c.llm.temperature);
      read_if(l, "max_output_tokens", c.llm.max_output_tokens);
      read_if(l, "endpoint", c.llm.endpoint);
      if (l.contains("timeout_seconds")) {
        c.llm.request_timeout = std::chrono::milliseconds(
            static_cast<long long>(l.at("timeout_seconds").get<double>() * 1000.0));
      }
      read_if(l, "api_key_env", c.llm.api_key_env);
      read_if(l, "mock", c.mock);
      read_if(l, "max_in_flight", c.max_in_flight);
      read_if(l, "max_attempts", c.retry.max_attempts);
      if (l.contains("initial_backoff_ms")) {
        c.retry.initial_backoff = std::chrono::milliseconds(l.at("initial_backoff_ms").get<long long>());
      }
      read_if(l, "max_parse_attempts", c.max_parse_attempts);
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      reject_unknown(o, {"cache_dir", "out_dir", "plot"}, "output");
      read_if(o, "cache_dir", c.cache_dir);
      read_if(o, "out_dir", c.out_dir);
      read_if(o, "plot", c.plot);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  return json{
      {"name", name},
      {"data",
       {{"path", data_path},
        {"schema", schema_path},
        {"marginals", marginals_path},
        {"synthetic",
         {{"n", synth.n}, {"seed", synth.seed}, {"label_rule", synth.label_rule}, {"noise_sd", synth.noise_sd}}}}},
      {"protocol",
       {{"support_sizes", support_sizes},
        {"repeats", repeats},
        {"train_fraction", train_fraction},
        {"seed", seed},
        {"vary_split", vary_split},
        {"batch_size", batch_size},
        {"importance_support", importance_support},
        {"fractions", fractions},
        {"gbdt",
         {{"n_trees", gbdt.n_trees},
          {"max_depth", gbdt.max_depth},
          {"learning_rate", gbdt.learning_rate},
          {"min_leaf", gbdt.min_leaf},
          {"subsample", gbdt.subsample},
          {"seed", gbdt.seed}}}}},
      {"llm",
       {{"model", llm.model_name},
        {"temperature", llm.temperature},
        {"max_output_tokens", llm.max_output_tokens},
        {"endpoint", llm.endpoint},
        {"timeout_seconds", static_cast<double>(llm.request_timeout.count()) / 1000.0},
        {"api_key_env", llm.api_key_env},
        {"mock", mock},
        {"max_in_flight", max_in_flight},
        {"max_attempts", retry.max_attempts},
        {"initial_backoff_ms", retry.initial_backoff.count()},
        {"max_parse_attempts", max_parse_attempts}}},
      {"output", {{"cache_dir", cache_dir}, {"out_dir", out_dir}, {"plot", plot}}}};
}

std::string ExperimentConfig::hash() const {
  auto j = to_json();
  j.erase("output");
  return text::sha256_hex(j.dump());
}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_parse_attempts < 1) throw ConfigError("max_parse_attempts must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (support_sizes.empty()) throw ConfigError("support_sizes is empty");
  if (data_path.empty() && synth.n == 0) throw ConfigError("synthetic dataset size is 0");
  try {
    llm.validate();
    label_rule(synth.label_rule);
    if (!mock.empty()) parse_mock_spec(mock, seed);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------

void write_artifacts(const ExperimentArtifacts& artifacts, const std::string& out_dir) {
  for (const auto& [rel, content] : artifacts.files) {
    text::write_file_atomic((std::filesystem::path(out_dir) / rel).string(), content);
  }
}

VariableSchema load_experiment_schema(const ExperimentConfig& config) {
  if (config.schema_path.empty()) return VariableSchema::default_schema();
  try {
    return VariableSchema::load(config.schema_path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

Dataset load_experiment_data(const ExperimentConfig& config) {
  const auto schema = load_experiment_schema(config);
  try {
    if (!config.data_path.empty()) {
      if (!std::filesystem::is_regular_file(config.data_path)) {
        throw ConfigError("data file not found: " + config.data_path);
      }
      return load_survey(config.data_path, schema);
    }
    if (config.synth.n == 0) throw ConfigError("dataset is empty (synthetic n = 0)");
    const auto marginals =
        config.marginals_path.empty() ? Marginals::table2() : Marginals::load(config.marginals_path);
    return synthesize(schema, marginals, config.synth);
  } catch (const DatasetEmptyError& e) {
    throw ConfigError(std::string("dataset is empty: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentRunner::ExperimentRunner(ExperimentConfig config, std::shared_ptr<Backend> backend)
    : config_(std::move(config)), hash_(config_.hash()), backend_(std::move(backend)) {
  config_.validate();
}

LlmClient& ExperimentRunner::client() {
  std::lock_guard lock(client_mutex_);
  if (!client_) {
    if (!backend_) {
      if (!config_.mock.empty()) {
        backend_ = scripted_mock(config_.mock, config_.seed, load_experiment_schema(config_));
      } else {
        backend_ = std::make_shared<HttpBackend>(config_.llm);
      }
    }
    client_ = std::make_unique<LlmClient>(backend_, config_.retry, config_.max_in_flight);
  }
  return *client_;
}

ClientStats ExperimentRunner::client_stats() const {
  std::lock_guard lock(client_mutex_);
  return client_ ? client_->stats() : ClientStats{};
}

Completion ExperimentRunner::fetch(const Prompt& prompt, std::uint64_t trial_index) {
  auto& c = client();
  if (config_.cache_dir.empty()) return c.complete(prompt, config_.llm, trial_index);
  return c.cached_complete(prompt, config_.llm, trial_index, config_.cache_dir);
}

std::string ExperimentRunner::provenance(const Dataset& data, std::string_view kind) const {
  const json j{{"config_hash", hash_},
               {"experiment", std::string(kind)},
               {"config_name", config_.name},
               {"schema_hash", text::sha256_hex(data.schema.to_json().dump())},
               {"template_version", std::string(template_version())},
               {"backend", config_.mock.empty() ? "http:" + config_.llm.endpoint : "mock:" + config_.mock},
               {"data",
                {{"source", config_.data_path.empty() ? std::string("synthetic") : config_.data_path},
                 {"records", data.size()},
                 {"dropped_incomplete", data.dropped}}}};
  return j.dump(2) + "\n";
}

std::string ExperimentRunner::stats_json() const {
  const auto s = client_stats();
  const json j{{"config_hash", hash_},
               {"transport_calls", s.transport_calls},
               {"retries", s.retries},
               {"cache_hits", s.cache_hits},
               {"cache_misses", s.cache_misses},
               {"corrupt_cache_entries", s.corrupt_cache_entries}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

ExperimentArtifacts ExperimentRunner::run_synth() {
  const auto data = load_experiment_data(config_);
  ExperimentArtifacts a;
  a.config_hash = hash_;
  a.files["synthetic.csv"] = format_survey(data);
  a.files["synth_provenance.json"] = provenance(data, "synth");
  a.summary = fmt::format("synthetic dataset: {} records, seed {}, label rule {}, noise sd {}\n", data.size(),
                          config_.synth.seed, config_.synth.label_rule, config_.synth.noise_sd);
  return a;
}

struct ExperimentRunner::Trial {
  std::size_t k = 0;
  std::size_t repeat = 0;
  std::size_t split = 0;  // index into the split list
  SupportSet support;
  std::optional<RepresentativenessReport> ks;
};

namespace {

struct BatchTask {
  std::size_t trial = 0;
  std::size_t batch = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct BatchResult {
  bool ok = false;
  std::map<std::string, double> scores;
  std::string error;
  std::string archive;
};

}  // namespace

ExperimentArtifacts ExperimentRunner::run_zero_shot() { return run_llm_sweep(SweepMode::zero_shot_all); }

ExperimentArtifacts ExperimentRunner::run_few_shot_sweep() { return run_llm_sweep(SweepMode::ranked); }

ExperimentArtifacts ExperimentRunner::run_random_sweep() { return run_llm_sweep(SweepMode::random); }

ExperimentArtifacts ExperimentRunner::run_llm_sweep(SweepMode mode) {
  const auto data = load_experiment_data(config_);
  const auto& schema = data.schema;
  const std::string prefix = mode == SweepMode::zero_shot_all ? "zeroshot"
                             : mode == SweepMode::ranked      ? "fewshot"
                                                              : "random";

  // Query sets: the whole dataset for zero-shot, otherwise the test side of a split.
  std::vector<Split> splits;
  std::vector<Dataset> query_sets;
  if (mode == SweepMode::zero_shot_all) {
    query_sets.push_back(data);
  } else {
    const std::size_t n_splits = config_.vary_split ? config_.repeats : 1;
    for (std::size_t r = 0; r < n_splits; ++r) {
      const auto seed = config_.vary_split ? mix_seed(config_.seed, r) : config_.seed;
      try {
        splits.push_back(split(data, config_.train_fraction, seed));
      } catch (const ValidationError& e) {
        throw ConfigError(e.what());
      }
      query_sets.push_back(splits.back().test);
    }
  }

  const std::vector<std::size_t> sizes =
      mode == SweepMode::zero_shot_all ? std::vector<std::size_t>{0} : config_.support_sizes;
  std::vector<Trial> trials;
  const auto spec = fit_encoding(data);
  std::vector<FeatureMatrix> train_features;
  std::vector<FeatureMatrix> query_features;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    train_features.push_back(encode_all(splits[s].train, spec));
    query_features.push_back(encode_all(splits[s].test, spec));
  }
  for (const auto k : sizes) {
    for (std::size_t r = 0; r < config_.repeats; ++r) {
      Trial t;
      t.k = k;
      t.repeat = r;
      t.split = config_.vary_split && !splits.empty() ? r : 0;
      if (k > 0) {
        const auto& sp = splits.at(t.split);
        if (k > sp.train.size()) {
          throw ConfigError(fmt::format("support size {} exceeds training size {}", k, sp.train.size()));
        }
        if (mode == SweepMode::ranked) {
          t.support = rank_support(sp.train, train_features[t.split], query_features[t.split], k);
        } else {
          t.support = random_support(sp.train, k, mix_seed(mix_seed(config_.seed, 0x52414e44ULL), k * 1000 + r));
          t.ks = representativeness_report(t.support, data);
        }
      }
      // Leakage guard: no support record may be a query record.
      const auto& queries = query_sets.at(t.split);
      std::set<std::string> query_ids;
      for (const auto& q : queries.records) query_ids.insert(q.id);
      for (const auto& m : t.support.members) {
        if (query_ids.contains(m.id)) throw Error("support record " + m.id + " leaked into the query set");
      }
      trials.push_back(std::move(t));
    }
  }

  std::vector<BatchTask> tasks;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const auto n_queries = query_sets.at(trials[t].split).size();
    for (std::size_t b = 0, begin = 0; begin < n_queries; ++b, begin += config_.batch_size) {
      tasks.push_back({t, b, begin, std::min(n_queries, begin + config_.batch_size)});
    }
  }

  std::vector<BatchResult> results(tasks.size());
  parallel_for(tasks.size(), config_.max_in_flight, [&](std::size_t i) {
    const auto& task = tasks[i];
    const auto& trial = trials[task.trial];
    const auto& queries = query_sets.at(trial.split).records;
    const std::span<const RespondentRecord> batch(queries.data() + task.begin, task.end - task.begin);
    const Prompt prompt = trial.k == 0 ? render_zero_shot(batch, schema, false)
                                       : render_few_shot(trial.support, batch, schema, false);
    auto& out = results[i];
    std::string archive = fmt::format("config_hash: {}\nexperiment: {}\nsupport_size: {}\nrepeat: {}\nbatch: {}\n",
                                      hash_, prefix, trial.k, trial.repeat, task.batch);
    for (std::size_t attempt = 0; attempt < config_.max_parse_attempts && !out.ok; ++attempt) {
      const auto trial_index = trial.repeat * config_.max_parse_attempts + attempt;
      try {
        const auto completion = fetch(prompt, trial_index);
        try {
          auto parsed = parse_response(completion.content, prompt.query_ids, false, schema);
          out.ok = true;
          out.scores = std::move(parsed.scores);
          archive += fmt::format("attempt: {}\nstatus: ok\n\n--- response reasoning ---\n{}\n", attempt,
                                 parsed.reasoning);
        } catch (const ParseError& e) {
          out.error = fmt::format("parse error: {}", e.what());
          archive += fmt::format("attempt: {}\nstatus: {}\n\n--- raw response ---\n{}\n", attempt, out.error,
                                 e.raw_text());
        }
        if (!completion.reasoning.empty()) {
          archive += fmt::format("\n--- provider reasoning ---\n{}\n", completion.reasoning);
        }
      } catch (const TransportError& e) {
        out.error = fmt::format("transport error: {}", e.what());
        archive += fmt::format("attempt: {}\nstatus: {}\n", attempt, out.error);
        break;
      }
    }
    out.archive = std::move(archive);
  });

  // Join by (trial, record id).
  ExperimentArtifacts a;
  a.config_hash = hash_;
  std::vector<std::optional<MetricPair>> trial_metrics(trials.size());
  std::vector<std::string> trial_errors(trials.size());
  {
    std::vector<std::map<std::string, double>> scores(trials.size());
    std::vector<bool> ok(trials.size(), true);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const auto& task = tasks[i];
      const auto& trial = trials[task.trial];
      a.files[fmt::format("reasoning/{}/k{:02d}_r{}_b{:03d}.txt", prefix, trial.k, trial.repeat, task.batch)] =
          results[i].archive;
      if (!results[i].ok) {
        ok[task.trial] = false;
        if (trial_errors[task.trial].empty()) {
          trial_errors[task.trial] = fmt::format("batch {}: {}", task.batch, results[i].error);
        }
        continue;
      }
      scores[task.trial].insert(results[i].scores.begin(), results[i].scores.end());
    }
    for (std::size_t t = 0; t < trials.size(); ++t) {
      if (!ok[t]) continue;
      std::vector<double> y;
      std::vector<double> yhat;
      for (const auto& q : query_sets.at(trials[t].split).records) {
        y.push_back(q.satisfaction);
        yhat.push_back(scores[t].at(q.id));
      }
      trial_metrics[t] = evaluate_predictions(y, yhat);
    }
  }

  std::string runs = csv_header(hash_) + "k,label,repeat,status,mse,mape,n,detail\n";
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const auto& tr = trials[t];
    if (trial_metrics[t]) {
      runs += fmt::format("{},{},{},ok,{},{},{},\n", tr.k, k_label(tr.k), tr.repeat, fixed(trial_metrics[t]->mse),
                          fixed(trial_metrics[t]->mape), trial_metrics[t]->n);
    } else {
      ++a.failed_trials;
      std::string detail = trial_errors[t];
      std::replace(detail.begin(), detail.end(), ',', ';');
      std::replace(detail.begin(), detail.end(), '\n', ' ');
      runs += fmt::format("{},{},{},failed,,,,{}\n", tr.k, k_label(tr.k), tr.repeat, detail);
    }
  }
  a.files[prefix + "_runs.csv"] = runs;

  std::string summary_csv = csv_header(hash_) + "k,label,mse_mean,mse_sd,mape_mean,mape_sd,repeats_ok,repeats_failed";
  summary_csv += mode == SweepMode::random ? ",ks\n" : "\n";
  struct RowText {
    std::string label, ks, mse, mape, note;
    std::optional<double> mean_mse;
  };
  std::vector<RowText> rows;
  std::string ks_all = csv_header(hash_) + "k,repeat,variable,D,p,stars\n";
  for (const auto k : sizes) {
    std::vector<MetricPair> ok_runs;
    std::size_t failed = 0;
    std::vector<RepresentativenessReport> reps;
    for (std::size_t t = 0; t < trials.size(); ++t) {
      if (trials[t].k != k) continue;
      if (trial_metrics[t]) {
        ok_runs.push_back(*trial_metrics[t]);
      } else {
        ++failed;
      }
      if (trials[t].ks) {
        reps.push_back(*trials[t].ks);
        a.files[fmt::format("ks/k{:02d}_r{}.csv", k, trials[t].repeat)] = csv_header(hash_) + trials[t].ks->to_csv();
        for (const auto& row : trials[t].ks->rows) {
          ks_all += fmt::format("{},{},{},{},{},{}\n", k, trials[t].repeat, row.variable, fixed(row.statistic),
                                fixed(row.p_value), row.stars);
        }
      }
    }
    RowText rt;
    rt.label = k_label(k);
    rt.ks = k == 0 ? "\\" : summarize_repeats(reps, schema);
    rt.mse = cell_or_failed(ok_runs, true);
    rt.mape = cell_or_failed(ok_runs, false);
    if (failed > 0) rt.note = fmt::format("{} of {} repeats failed", failed, config_.repeats);
    std::string mse_mean, mse_sd, mape_mean, mape_sd;
    if (!ok_runs.empty()) {
      const auto row = aggregate_repeats(rt.label, ok_runs);
      rt.mean_mse = row.mse.mean;
      mse_mean = fixed(row.mse.mean);
      mape_mean = fixed(row.mape.mean);
      mse_sd = row.mse.sd ? fixed(*row.mse.sd) : "n/a";
      mape_sd = row.mape.sd ? fixed(*row.mape.sd) : "n/a";
      a.rows.push_back(row);
    }
    summary_csv += fmt::format("{},{},{},{},{},{},{},{}", k, rt.label, mse_mean, mse_sd, mape_mean, mape_sd,
                               ok_runs.size(), failed);
    if (mode == SweepMode::random) {
      std::string ks_cell = rt.ks;
      std::replace(ks_cell.begin(), ks_cell.end(), ',', ';');
      summary_csv += "," + ks_cell;
    }
    summary_csv += "\n";
    rows.push_back(std::move(rt));
  }
  a.files[prefix + "_summary.csv"] = summary_csv;
  if (mode == SweepMode::random) a.files["random_ks.csv"] = ks_all;

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].mean_mse && (!best || *rows[i].mean_mse < *rows[best.value()].mean_mse)) best = i;
  }
  const std::string title = mode == SweepMode::zero_shot_all ? "Zero-shot prediction accuracy (whole dataset)"
                            : mode == SweepMode::ranked
                                ? "Prediction accuracies of the few-shot methods (similarity-ranked support)"
                                : "K-S test and prediction accuracy under random sampling";
  std::string txt = fmt::format("{}\nconfig_hash: {}\nrecords: {}; query records: {}; repeats: {}; backend: {}\n\n",
                                title, hash_, data.size(), query_sets.front().size(), config_.repeats,
                                config_.mock.empty() ? config_.llm.model_name : "mock " + config_.mock);
  std::size_t ks_width = 10;
  for (const auto& r : rows) ks_width = std::max(ks_width, r.ks.size() + 2);
  std::string header = mode == SweepMode::random
                           ? fmt::format("{:<18}{:<{}}{:<18}{:<18}", "Support set size", "K-S test", ks_width, "MSE",
                                         "MAPE")
                           : fmt::format("{:<18}{:<18}{:<18}", "Support set size", "MSE", "MAPE");
  while (!header.empty() && header.back() == ' ') header.pop_back();
  txt += header + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::string line = mode == SweepMode::random
                           ? fmt::format("{:<18}{:<{}}{:<18}{:<18}", r.label, r.ks, ks_width, r.mse, r.mape)
                           : fmt::format("{:<18}{:<18}{:<18}", r.label, r.mse, r.mape);
    if (best && *best == i && rows.size() > 1) line += "best";
    if (!r.note.empty()) line += (line.back() == ' ' ? "" : " ") + std::string("[") + r.note + "]";
    while (!line.empty() && line.back() == ' ') line.pop_back();
    txt += line + "\n";
  }
  txt += "\nCells are mean (sample standard deviation) over repeats.";
  if (mode == SweepMode::random) {
    txt += "\nK-S: * p < 0.05, ** p < 0.01; (n) counts significant repeats; ns: none significant.";
  }
  txt += "\n";
  a.summary = txt;
  a.files[prefix + "_summary.txt"] = txt;
  a.files[prefix + "_provenance.json"] = provenance(data, prefix);
  a.files[prefix + "_run_stats.json"] = stats_json();
  return a;
}

// ---------------------------------------------------------------------------

std::string gnuplot_script(std::string_view model, std::string_view csv_name) {
  return fmt::format(
      "# Prediction accuracy of {0} models against the share of samples used for fitting.\n"
      "set datafile separator ','\n"
      "set terminal pngcairo size 900,420\n"
      "set output '{0}_fraction_sweep.png'\n"
      "set multiplot layout 1,2\n"
      "set xlabel 'Share of samples used to develop the model'\n"
      "set ylabel 'MSE'\n"
      "plot '< grep \"^{0},\" {1}' using 2:3:4 with yerrorlines title '{0} MSE'\n"
      "set ylabel 'MAPE'\n"
      "plot '< grep \"^{0},\" {1}' using 2:5:6 with yerrorlines title '{0} MAPE'\n"
      "unset multiplot\n",
      model, csv_name);
}

ExperimentArtifacts ExperimentRunner::run_baseline_sweep() {
  const auto data = load_experiment_data(config_);
  SweepOptions opts;
  opts.fractions = config_.fractions;
  opts.repeats = config_.repeats;
  opts.seed = config_.seed;
  opts.gbdt = config_.gbdt;
  opts.threads = config_.max_in_flight;

  ExperimentArtifacts a;
  a.config_hash = hash_;
  std::string runs = csv_header(hash_) + "model,fraction,repeat,status,mse,mape,n_test,detail\n";
  std::string agg = csv_header(hash_) + "model,fraction,mse_mean,mse_sd,mape_mean,mape_sd,repeats_ok\n";
  std::string txt = fmt::format(
      "Baseline prediction accuracy by share of samples used for fitting\nconfig_hash: {}\nrecords: {}; "
      "repeats: {}\n\n{:<8}{:<10}{:<18}{}\n",
      hash_, data.size(), config_.repeats, "Model", "Share", "MSE", "MAPE");
  for (const auto kind : {BaselineKind::linear, BaselineKind::gbdt}) {
    std::vector<SweepCell> cells;
    try {
      cells = fraction_sweep(data, kind, opts);
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    const std::string model(to_string(kind));
    for (const double f : config_.fractions) {
      std::vector<MetricPair> ok;
      for (const auto& c : cells) {
        if (c.fraction != f) continue;
        if (c.mse) {
          ok.push_back({*c.mse, *c.mape, c.n_test});
          runs += fmt::format("{},{},{},ok,{},{},{},\n", model, fixed(f, 2), c.repeat, fixed(*c.mse), fixed(*c.mape),
                              c.n_test);
        } else {
          ++a.failed_trials;
          std::string detail = c.error;
          std::replace(detail.begin(), detail.end(), ',', ';');
          runs += fmt::format("{},{},{},failed,,,,{}\n", model, fixed(f, 2), c.repeat, detail);
        }
      }
      if (ok.empty()) {
        agg += fmt::format("{},{},,,,,0\n", model, fixed(f, 2));
        txt += fmt::format("{:<8}{:<10}{:<18}{}\n", model, fixed(f, 2), "failed", "failed");
        continue;
      }
      const auto row = aggregate_repeats(fmt::format("{}@{}", model, fixed(f, 2)), ok);
      agg += fmt::format("{},{},{},{},{},{},{}\n", model, fixed(f, 2), fixed(row.mse.mean),
                         row.mse.sd ? fixed(*row.mse.sd) : "n/a", fixed(row.mape.mean),
                         row.mape.sd ? fixed(*row.mape.sd) : "n/a", ok.size());
      txt += fmt::format("{:<8}{:<10}{:<18}{}\n", model, fixed(f, 2), format_mean_sd(row.mse),
                         format_mean_sd(row.mape));
      a.rows.push_back(row);
    }
  }
  txt += "\nCells are mean (sample standard deviation) over repeats; each repeat re-draws the split.\n";
  a.summary = txt;
  a.files["baseline_runs.csv"] = runs;
  a.files["baseline_summary.csv"] = agg;
  a.files["baseline_summary.txt"] = txt;
  a.files["baseline_provenance.json"] = provenance(data, "baseline");
  if (config_.plot) {
    a.files["fig_lr.gp"] = gnuplot_script("LR", "baseline_summary.csv");
    a.files["fig_gbdt.gp"] = gnuplot_script("GBDT", "baseline_summary.csv");
  }
  return a;
}

// ---------------------------------------------------------------------------

ExperimentArtifacts ExperimentRunner::run_importance_study() {
  if (config_.repeats < 2) throw ConfigError("the importance study needs repeats >= 2");
  const auto data = load_experiment_data(config_);
  const auto& schema = data.schema;
  const auto spec = fit_encoding(data);

  ExperimentArtifacts a;
  a.config_hash = hash_;
  std::vector<std::pair<std::string, std::vector<ImportanceVector>>> models{
      {"GBDT", {}}, {"zero-shot", {}}, {"few-shot", {}}};
  std::vector<std::string> failures;
  std::string vectors_csv = csv_header(hash_) + "model,repeat,variable,weight\n";

  // GBDT: a fresh split per repeat.
  const auto design = make_design(data, spec, false);
  for (std::size_t r = 0; r < config_.repeats; ++r) {
    const auto parts = split(data, config_.train_fraction, mix_seed(config_.seed, r));
    Matrix train_X(parts.train_indices.size(), design.X.cols());
    std::vector<double> train_y;
    for (std::size_t i = 0; i < parts.train_indices.size(); ++i) {
      for (std::size_t c = 0; c < design.X.cols(); ++c) train_X(i, c) = design.X(parts.train_indices[i], c);
      train_y.push_back(data.records[parts.train_indices[i]].satisfaction);
    }
    auto params = config_.gbdt;
    params.seed = mix_seed(config_.gbdt.seed, r);
    models[0].second.push_back(importance_gbdt(fit_gbdt(train_X, train_y, params), design));
  }

  // LLM importances: one importance prompt per repeat.
  const auto base = split(data, config_.train_fraction, config_.seed);
  const auto train_features = encode_all(base.train, spec);
  const auto test_features = encode_all(base.test, spec);
  if (config_.importance_support > base.train.size()) throw ConfigError("importance_support exceeds training size");
  const auto support = rank_support(base.train, train_features, test_features, config_.importance_support);
  const Prompt prompts[2] = {render_importance(schema, nullptr), render_importance(schema, &support)};
  for (std::size_t m = 0; m < 2; ++m) {
    std::vector<std::optional<ImportanceVector>> got(config_.repeats);
    std::vector<std::string> archive(config_.repeats);
    parallel_for(config_.repeats, config_.max_in_flight, [&](std::size_t r) {
      archive[r] = fmt::format("config_hash: {}\nexperiment: importance\nmodel: {}\nrepeat: {}\n", hash_,
                               models[m + 1].first, r);
      for (std::size_t attempt = 0; attempt < std::max<std::size_t>(2, config_.max_parse_attempts) && !got[r];
           ++attempt) {
        try {
          const auto c = fetch(prompts[m], r * std::max<std::size_t>(2, config_.max_parse_attempts) + attempt);
          try {
            got[r] = parse_importance(c.content, schema);
            archive[r] += fmt::format("attempt: {}\nstatus: ok\n\n--- response reasoning ---\n{}\n", attempt,
                                      extract_reasoning(c.content));
          } catch (const ParseError& e) {
            archive[r] += fmt::format("attempt: {}\nstatus: parse error: {}\n\n--- raw response ---\n{}\n", attempt,
                                      e.what(), e.raw_text());
          }
          if (!c.reasoning.empty()) archive[r] += fmt::format("\n--- provider reasoning ---\n{}\n", c.reasoning);
        } catch (const TransportError& e) {
          archive[r] += fmt::format("attempt: {}\nstatus: transport error: {}\n", attempt, e.what());
          break;
        }
      }
    });
    for (std::size_t r = 0; r < config_.repeats; ++r) {
      a.files[fmt::format("reasoning/importance/{}_r{}.txt", models[m + 1].first, r)] = archive[r];
      if (got[r]) {
        models[m + 1].second.push_back(*got[r]);
      } else {
        ++a.failed_trials;
        failures.push_back(fmt::format("{} repeat {} failed", models[m + 1].first, r));
      }
    }
  }

  for (const auto& [name, vecs] : models) {
    for (std::size_t r = 0; r < vecs.size(); ++r) {
      for (std::size_t v = 0; v < vecs[r].variables.size(); ++v) {
        vectors_csv += fmt::format("{},{},{},{}\n", name, r, vecs[r].variables[v], fixed(vecs[r].weights[v], 8));
      }
    }
  }
  a.files["importance_vectors.csv"] = vectors_csv;

  std::string txt = fmt::format("Variable importance: GBDT vs zero-shot vs few-shot (k = {})\nconfig_hash: {}\n"
                                "repeats: {}\n\n",
                                config_.importance_support, hash_, config_.repeats);
  const bool enough = std::all_of(models.begin(), models.end(), [](const auto& m) { return m.second.size() >= 2; });
  if (!enough) {
    txt += "Welch tests skipped: a model has fewer than 2 successful repeats.\n";
  } else {
    const auto grid = compare_importances(models);
    std::string tests = csv_header(hash_) + "variable,model_a,model_b,mean_a,mean_b,t,df,p,stars,note\n";
    std::string fig = csv_header(hash_) + "variable,model,mean,repeat_values,stars\n";
    txt += fmt::format("{:<20}{:>10}{:>11}{:>10}   {:<13}{:<13}{}\n", "Variable", "GBDT", "zero-shot",
                       "few-shot", "GBDT-zero", "GBDT-few", "zero-few");
    for (std::size_t v = 0; v < grid.variables.size(); ++v) {
      std::string cells;
      for (std::size_t p = 0; p < grid.pairs.size(); ++p) {
        const auto& t = grid.tests[v][p];
        const auto [i, j] = grid.pairs[p];
        tests += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", grid.variables[v], grid.models[i], grid.models[j],
                             fixed(t.mean_a), fixed(t.mean_b), t.t ? fixed(*t.t) : "", fixed(t.df, 3),
                             t.p ? fixed(*t.p) : "", t.stars, t.note);
        cells += fmt::format("{:<13}", t.t ? fmt::format("{}{}", fixed(*t.t, 2), t.stars) : std::string("degenerate"));
      }
      for (std::size_t m = 0; m < grid.models.size(); ++m) {
        std::string values;
        for (const double x : grid.repeats[m][v]) values += (values.empty() ? "" : ";") + fixed(x, 6);
        std::string stars;
        for (std::size_t p = 0; p < grid.pairs.size(); ++p) {
          const auto [i, j] = grid.pairs[p];
          if (i != m && j != m) continue;
          const auto& other = grid.models[i == m ? j : i];
          stars += (stars.empty() ? "" : ";") + fmt::format("vs {}:{}", other, grid.tests[v][p].stars);
        }
        fig += fmt::format("{},{},{},{},{}\n", grid.variables[v], grid.models[m], fixed(grid.means[m][v]), values,
                           stars);
      }
      while (!cells.empty() && cells.back() == ' ') cells.pop_back();
      txt += fmt::format("{:<20}{:>10}{:>11}{:>10}   {}\n", grid.variables[v], fixed(grid.means[0][v], 3),
                         fixed(grid.means[1][v], 3), fixed(grid.means[2][v], 3), cells);
    }
    txt += "\nMeans over repeats; pair columns give Welch t with * p < 0.05, ** p < 0.01.\n";
    a.files["importance_tests.csv"] = tests;
    a.files["importance_fig5.csv"] = fig;
    a.importance = grid;
  }
  for (const auto& f : failures) txt += f + "\n";
  a.summary = txt;
  a.files["importance_summary.txt"] = txt;
  a.files["importance_provenance.json"] = provenance(data, "importance");
  return a;
}

std::string assemble_report(const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> parts;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(out_dir, ec)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.ends_with("_summary.txt")) parts.push_back(entry.path());
  }
  if (ec) throw ConfigError("cannot read output directory " + out_dir + ": " + ec.message());
  if (parts.empty()) throw ConfigError("no *_summary.txt files in " + out_dir);
  std::sort(parts.begin(), parts.end());
  std::string report;
  for (const auto& p : parts) {
    if (!report.empty()) report += "\n";
    report += text::read_file(p.string());
  }
  text::write_file_atomic((fs::path(out_dir) / "report.txt").string(), report);
  return report;
}

}  // namespace travelsat
