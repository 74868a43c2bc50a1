// nlb: forward recent sampling for temporal graphs — ingestion, sampler
// verification, benchmarks, training and sweeps from one binary.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "nlb/parallel.hpp"
#include "nlb/pipeline.hpp"
#include "nlb/report.hpp"
#include "nlb/stats.hpp"
#include "nlb/synthetic.hpp"

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::uint64_t env_seed_default() {
  const char* env = std::getenv("NLB_SEED");
  if (!env) return 0;
  return std::strtoull(env, nullptr, 10);
}

nlb::EventStream load_dataset(const std::string& path, double ts_scale) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("cannot open " + path);
  std::uint64_t magic = 0;
  probe.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  probe.close();
  if (magic == 0x4e4c424341434845ULL) return nlb::load_cache(path);
  nlb::CsvSchema schema;
  schema.ts_scale = ts_scale;
  return nlb::ingest_csv(path, schema);
}

void write_manifest(const std::string& artifact_path, const std::string& command,
                    const json& config, std::uint64_t seed,
                    const std::string& dataset_hash, double wall_seconds) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["dataset_sha1"] = dataset_hash;
  m["tool_version"] = nlb::kVersion;
  m["wall_seconds"] = wall_seconds;
  std::ofstream out(artifact_path + ".manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest for " + artifact_path);
  out << m.dump(2) << "\n";
}

nlb::KeyScheme parse_scheme(const std::string& s) {
  if (s == "edge") return nlb::KeyScheme::kEdge;
  if (s == "node") return nlb::KeyScheme::kNode;
  throw CLI::ValidationError("--scheme must be 'edge' or 'node'");
}

struct TrainFlags {
  std::string data;
  std::string scheme = "edge";
  double alpha = 0.9;
  std::int64_t slots = 20;
  int epochs = 5;
  std::string task = "link";
  bool inductive = false;
  std::uint64_t seed = env_seed_default();
  std::string ckpt_out;
  std::string report_out;
  double ts_scale = 1.0;
  std::int64_t batch = 100;
  double lr = 1e-4;
  int eval_negatives = 500;
  double dropout = 0.0;
  std::int64_t d_status = 64;
  std::int64_t d_time = 64;
  std::int64_t d_msg = 64;
  std::int64_t d_hidden = 64;
  std::int64_t d_out = 64;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool need_ckpt) {
  cmd->add_option("--data", f.data, "dataset CSV or binary cache")->required();
  cmd->add_option("--scheme", f.scheme, "hash key scheme: edge|node");
  cmd->add_option("--alpha", f.alpha, "replacement probability in (0,1]");
  cmd->add_option("--s", f.slots, "table slots per node");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--task", f.task, "link|node");
  cmd->add_flag("--inductive", f.inductive, "mask 10% of eval nodes in training");
  cmd->add_option("--seed", f.seed, "RNG seed (env NLB_SEED is the fallback)");
  cmd->add_option("--scale", f.ts_scale, "timestamp scale for fractional CSV stamps");
  cmd->add_option("--batch", f.batch, "chronological batch size");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--eval-negatives", f.eval_negatives, "negatives per positive for MRR");
  cmd->add_option("--dropout", f.dropout, "dropout rate at train time");
  cmd->add_option("--d-status", f.d_status, "node status width");
  cmd->add_option("--d-time", f.d_time, "time-encoding frequency count");
  cmd->add_option("--d-msg", f.d_msg, "neighbor message width");
  cmd->add_option("--d-hidden", f.d_hidden, "MLP hidden width");
  cmd->add_option("--d-out", f.d_out, "node representation width");
  if (need_ckpt) {
    cmd->add_option("--ckpt-out", f.ckpt_out, "parameter checkpoint path");
  }
  cmd->add_option("--report-out", f.report_out, "report CSV path");
}

nlb::TrainConfig make_train_config(const TrainFlags& f, int threads) {
  nlb::TrainConfig cfg;
  cfg.batch_size = f.batch;
  cfg.epochs = f.epochs;
  cfg.lr = f.lr;
  cfg.eval_negatives = f.eval_negatives;
  cfg.dropout = f.dropout;
  cfg.seed = f.seed;
  cfg.threads = threads;
  cfg.sampler.scheme = parse_scheme(f.scheme);
  cfg.sampler.alpha = f.alpha;
  cfg.sampler.slots = f.slots;
  cfg.sampler.seed = f.seed;
  cfg.dims.d_status = f.d_status;
  cfg.dims.d_time = f.d_time;
  cfg.dims.d_msg = f.d_msg;
  cfg.dims.d_hidden = f.d_hidden;
  cfg.dims.d_out = f.d_out;
  return cfg;
}

json train_config_json(const TrainFlags& f) {
  return json{{"data", f.data},       {"scheme", f.scheme},
              {"alpha", f.alpha},     {"s", f.slots},
              {"epochs", f.epochs},   {"task", f.task},
              {"inductive", f.inductive}, {"batch", f.batch},
              {"lr", f.lr},           {"eval_negatives", f.eval_negatives},
              {"dropout", f.dropout}, {"d_status", f.d_status},
              {"d_time", f.d_time},   {"d_msg", f.d_msg},
              {"d_hidden", f.d_hidden}, {"d_out", f.d_out}};
}

nlb::ReportHeader report_header(const TrainFlags& f, const std::string& hash) {
  return {{"tool_version", nlb::kVersion},
          {"seed", std::to_string(f.seed)},
          {"dataset_sha1", hash},
          {"scheme", f.scheme},
          {"alpha", std::to_string(f.alpha)},
          {"s", std::to_string(f.slots)},
          {"epochs", std::to_string(f.epochs)},
          {"inductive", f.inductive ? "1" : "0"}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"No-looking-back temporal graph learning toolkit"};
  app.require_subcommand(1);
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  app.add_option("--threads", threads, "worker count (default: cores)");

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "parse a CSV stream into a binary cache");
  std::string in_path, cache_out, id_map_out;
  double in_scale = 1.0;
  bool no_labels = false;
  ingest->add_option("--input", in_path)->required();
  ingest->add_option("--scale", in_scale, "timestamp scale for fractional stamps");
  ingest->add_option("--cache-out", cache_out)->required();
  ingest->add_option("--id-map-out", id_map_out, "default: <cache-out>.idmap.csv");
  ingest->add_flag("--no-labels", no_labels, "ignore the label column");

  // ---- gen-synthetic ----
  auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic stream CSV");
  std::string gen_kind = "recency-task", gen_out;
  std::int64_t gen_nodes = 1000, gen_events = 100000;
  double gen_lambda = 2.0, gen_horizon = 1000.0, gen_repeat = 0.8;
  std::uint64_t gen_seed = env_seed_default();
  gen->add_option("--kind", gen_kind, "poisson|recency-task");
  gen->add_option("--nodes", gen_nodes);
  gen->add_option("--lambda", gen_lambda, "poisson: global event rate");
  gen->add_option("--horizon", gen_horizon, "poisson: time horizon");
  gen->add_option("--events", gen_events, "recency-task: event count");
  gen->add_option("--p-repeat", gen_repeat, "recency-task: repeat probability");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out)->required();

  // ---- verify-sampling ----
  auto* verify = app.add_subcommand(
      "verify-sampling", "Monte-Carlo retention curve vs the closed form");
  std::string v_scheme = "edge", v_out;
  double v_alpha = 0.9, v_lambda = 2.0;
  std::int64_t v_slots = 10, v_trials = 200000, v_pool = 10000;
  std::vector<double> v_deltas = {1.0, 2.0, 5.0, 10.0};
  std::vector<double> v_nbr_lambdas;
  std::uint64_t v_seed = env_seed_default();
  bool v_plot = false;
  verify->add_option("--scheme", v_scheme, "edge|node");
  verify->add_option("--alpha", v_alpha);
  verify->add_option("--s", v_slots);
  verify->add_option("--lambda", v_lambda, "edge scheme: arrival intensity");
  verify->add_option("--neighbor-lambdas", v_nbr_lambdas,
                     "node scheme: competing per-neighbor intensities");
  verify->add_option("--trials", v_trials);
  verify->add_option("--deltas", v_deltas, "probe offsets");
  verify->add_option("--pool", v_pool, "edge scheme: neighbor id pool size");
  verify->add_option("--seed", v_seed);
  verify->add_flag("--plot", v_plot, "also emit a gnuplot script");
  verify->add_option("--out", v_out)->required();

  // ---- bench-update ----
  auto* bench = app.add_subcommand(
      "bench-update", "per-event update cost vs backward-oracle query cost");
  std::vector<std::int64_t> b_lengths = {10000, 100000, 1000000};
  int b_reps = 3;
  std::string b_out;
  std::int64_t b_slots = 10;
  double b_alpha = 0.9;
  bench->add_option("--lengths", b_lengths);
  bench->add_option("--reps", b_reps);
  bench->add_option("--s", b_slots);
  bench->add_option("--alpha", b_alpha);
  bench->add_option("--out", b_out, "CSV path (default: stdout only)");

  // ---- train ----
  auto* train = app.add_subcommand("train", "train and evaluate on a stream");
  TrainFlags tf;
  add_train_flags(train, tf, true);

  // ---- eval ----
  auto* eval = app.add_subcommand(
      "eval", "evaluate a checkpoint on a stream (no training)");
  TrainFlags ef;
  std::string eval_ckpt;
  add_train_flags(eval, ef, false);
  eval->add_option("--ckpt", eval_ckpt, "parameter checkpoint")->required();

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "re-run train+eval along alpha or s");
  TrainFlags sf;
  std::string sweep_axis = "alpha";
  std::vector<double> sweep_values;
  std::string sweep_out;
  add_train_flags(sweep, sf, false);
  sweep->add_option("--axis", sweep_axis, "alpha|s");
  sweep->add_option("--values", sweep_values)->required();
  sweep->add_option("--out", sweep_out)->required();

  CLI11_PARSE(app, argc, argv);
  nlb::set_thread_count(threads);
  const auto t_start = Clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(Clock::now() - t_start).count();
  };

  try {
    if (*ingest) {
      nlb::CsvSchema schema;
      schema.ts_scale = in_scale;
      schema.with_labels = !no_labels;
      nlb::EventStream stream = nlb::ingest_csv(in_path, schema);
      nlb::save_cache(stream, cache_out);
      if (id_map_out.empty()) id_map_out = cache_out + ".idmap.csv";
      nlb::save_id_map(stream, id_map_out);
      std::cout << "ingested " << stream.size() << " links, "
                << stream.num_nodes << " nodes, feature dim "
                << stream.features.dim << "\n";
      write_manifest(cache_out, "ingest",
                     json{{"input", in_path}, {"scale", in_scale},
                          {"cache_out", cache_out}, {"id_map_out", id_map_out}},
                     0, stream.content_hash(), wall());
    } else if (*gen) {
      nlb::EventStream stream;
      if (gen_kind == "poisson") {
        stream = nlb::make_poisson_stream(gen_nodes, gen_lambda, gen_horizon,
                                          gen_seed);
      } else if (gen_kind == "recency-task") {
        stream = nlb::make_recency_stream(gen_nodes, gen_events, gen_repeat,
                                          gen_seed);
      } else {
        throw CLI::ValidationError("--kind must be poisson or recency-task");
      }
      nlb::write_csv(stream, gen_out);
      std::cout << "wrote " << stream.size() << " events over "
                << stream.num_nodes << " nodes to " << gen_out << "\n";
      write_manifest(gen_out, "gen-synthetic",
                     json{{"kind", gen_kind}, {"nodes", gen_nodes},
                          {"lambda", gen_lambda}, {"horizon", gen_horizon},
                          {"events", gen_events}, {"p_repeat", gen_repeat}},
                     gen_seed, stream.content_hash(), wall());
    } else if (*verify) {
      nlb::SamplerConfig cfg;
      cfg.scheme = parse_scheme(v_scheme);
      cfg.alpha = v_alpha;
      cfg.slots = v_slots;
      cfg.seed = v_seed;
      nlb::RetentionCurve curve;
      if (cfg.scheme == nlb::KeyScheme::kEdge) {
        nlb::PoissonStreamSpec spec;
        spec.lambda = v_lambda;
        spec.neighbor_pool = v_pool;
        curve = nlb::measure_retention_edge(cfg, spec, v_trials, v_deltas,
                                            threads);
      } else {
        if (v_nbr_lambdas.empty()) {
          throw CLI::ValidationError(
              "node scheme needs --neighbor-lambdas (competing intensities)");
        }
        nlb::PoissonStreamSpec spec;
        for (std::size_t i = 0; i < v_nbr_lambdas.size(); ++i) {
          spec.per_neighbor_lambdas[static_cast<nlb::NodeId>(i)] =
              v_nbr_lambdas[i];
        }
        curve = nlb::measure_retention_node(cfg, spec, v_trials, v_deltas,
                                            threads);
      }
      curve.write_csv(v_out);
      if (v_plot) curve.write_plot_script(v_out, v_out + ".gp");
      double worst = curve.max_abs_error();
      std::cout << "max |empirical - theory| = " << worst << "\n";
      write_manifest(v_out, "verify-sampling",
                     json{{"scheme", v_scheme}, {"alpha", v_alpha},
                          {"s", v_slots}, {"lambda", v_lambda},
                          {"trials", v_trials}, {"deltas", v_deltas},
                          {"pool", v_pool},
                          {"neighbor_lambdas", v_nbr_lambdas},
                          {"max_abs_error", worst}},
                     v_seed, "", wall());
      for (const auto& p : curve.points) {
        if (!std::isfinite(p.empirical)) return 1;
      }
    } else if (*bench) {
      nlb::SamplerConfig cfg;
      cfg.slots = b_slots;
      cfg.alpha = b_alpha;
      nlb::BenchReport report = nlb::bench_update_scaling(cfg, b_lengths, b_reps);
      std::cout << "events  update_ns  oracle_query_ns\n";
      for (const auto& r : report.rows) {
        std::cout << r.events << "  " << r.update_ns_mean << " (sd "
                  << r.update_ns_stddev << ")  " << r.oracle_query_ns << "\n";
      }
      if (!b_out.empty()) {
        report.write_csv(b_out);
        write_manifest(b_out, "bench-update",
                       json{{"lengths", b_lengths}, {"reps", b_reps},
                            {"s", b_slots}, {"alpha", b_alpha}},
                       0, "", wall());
      }
    } else if (*train) {
      nlb::EventStream stream = load_dataset(tf.data, tf.ts_scale);
      nlb::TrainConfig cfg = make_train_config(tf, threads);
      nlb::ParamStore<float> trained;
      nlb::PipelineResult result = nlb::run_link_pipeline<float>(
          stream, cfg, tf.inductive, tf.task == "node", &trained);
      std::cout << "link prediction (" << (tf.inductive ? "inductive" : "transductive")
                << "):\n" << nlb::format_report_table(result.link_report);
      if (result.node_report) {
        std::cout << "node classification (" << result.dropped_labels
                  << " labels had no subsequent link):\n"
                  << nlb::format_report_table(*result.node_report);
      }
      const std::string hash = result.dataset_hash;
      if (!tf.report_out.empty()) {
        nlb::write_report_csv(tf.report_out, result.link_report,
                              report_header(tf, hash));
        write_manifest(tf.report_out, "train", train_config_json(tf), tf.seed,
                       hash, wall());
      }
      if (!tf.ckpt_out.empty()) {
        nlb::ModelDims dims = cfg.dims;
        dims.edge_dim = stream.features.dim;
        if (stream.num_classes > 1) dims.classes = stream.num_classes;
        nlb::NlbModel<float> model(dims, cfg.seed);
        model.params = trained;
        nlb::save_model_checkpoint(tf.ckpt_out, model, cfg.sampler);
        write_manifest(tf.ckpt_out, "train-ckpt", train_config_json(tf),
                       tf.seed, hash, wall());
      }
    } else if (*eval) {
      nlb::EventStream stream = load_dataset(ef.data, ef.ts_scale);
      nlb::SamplerConfig scfg;
      nlb::NlbModel<float> model =
          nlb::load_model_checkpoint<float>(eval_ckpt, &scfg);
      nlb::TrainConfig cfg = make_train_config(ef, threads);
      cfg.sampler = scfg;
      cfg.dims = model.dims;
      nlb::Trainer<float> trainer(stream, cfg);
      trainer.model().params = model.params;
      nlb::SplitView split = nlb::chronological_split(stream);
      trainer.replay_forward(0, split.val_end);
      nlb::EvalReport report = trainer.evaluate_links(split.val_end, split.total);
      std::cout << nlb::format_report_table(report);
      if (!ef.report_out.empty()) {
        nlb::write_report_csv(ef.report_out, report,
                              report_header(ef, stream.content_hash()));
        write_manifest(ef.report_out, "eval", train_config_json(ef), ef.seed,
                       stream.content_hash(), wall());
      }
    } else if (*sweep) {
      nlb::EventStream stream = load_dataset(sf.data, sf.ts_scale);
      nlb::TrainConfig cfg = make_train_config(sf, threads);
      nlb::SweepAxis axis;
      if (sweep_axis == "alpha") {
        axis = nlb::SweepAxis::kAlpha;
      } else if (sweep_axis == "s") {
        axis = nlb::SweepAxis::kSlots;
      } else {
        throw CLI::ValidationError("--axis must be alpha or s");
      }
      std::vector<nlb::SweepRow> rows = nlb::run_sweep<float>(
          stream, cfg, axis, sweep_values, sf.inductive);
      std::vector<std::pair<double, nlb::EvalReport>> pairs;
      std::cout << sweep_axis << "  auc  ap  mrr\n";
      for (const auto& r : rows) {
        pairs.emplace_back(r.value, r.report);
        std::cout << r.value << "  " << r.report.auc << "  " << r.report.ap
                  << "  " << r.report.mrr << "\n";
      }
      nlb::write_sweep_csv(sweep_out, sweep_axis, pairs,
                           report_header(sf, stream.content_hash()));
      write_manifest(sweep_out, "sweep", train_config_json(sf), sf.seed,
                     stream.content_hash(), wall());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
