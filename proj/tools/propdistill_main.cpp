#include <CLI11.hpp>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "propdistill/config.hpp"
#include "propdistill/data.hpp"
#include "propdistill/distill.hpp"
#include "propdistill/graph.hpp"
#include "propdistill/io.hpp"
#include "propdistill/propagation.hpp"
#include "propdistill/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace propdistill;

namespace {

// ------------------------------------------------------------------
// Flag plumbing: every option lands in RunConfig only when the user
// actually passed it, so file < env < flag precedence holds.

std::string fmt(double v) { return io_detail::format_double(v); }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(long long v) { return std::to_string(v); }

struct CommonFlags {
  std::string config_file;
  std::string data, out, teacher_dir;
  std::string scenario, teacher, loss, kl_direction;
  double alpha = 0, gamma = 0, temperature = 0, lr = 0, weight_decay = 0,
         dropout = 0, ind_fraction = 0, noise = 0, h = 0, sep = 0,
         appnp_gamma = 0;
  int steps = 0, epochs = 0, patience = 0, batch_size = 0, hidden = 0,
      teacher_hidden = 0, per_class_train = 0, per_class_val = 0,
      appnp_steps = 0, chains = 0, length = 0, classes = 0, n = 0, d = 0,
      feature_dim = 0, threads = 0;
  long long seed = 0;
  std::string seeds, losses, gammas, steps_list;
  bool self_loops = false;

  struct Tracked {
    CLI::Option* opt;
    std::string key;
    std::function<std::string()> to_str;
  };
  std::vector<Tracked> tracked;

  void track(CLI::Option* opt, const std::string& key,
             std::function<std::string()> to_str) {
    tracked.push_back({opt, key, std::move(to_str)});
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    cfg.load_env();
    for (const Tracked& t : tracked)
      if (t.opt->count() > 0) cfg.set(t.key, t.to_str());
    return cfg;
  }
};

void add_common_options(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config_file, "key = value config file");
  f.track(sub->add_option("--out", f.out, "output directory"), "out",
          [&f] { return f.out; });
  f.track(sub->add_option("--seed", f.seed, "run seed"), "seed",
          [&f] { return fmt(f.seed); });
}

void add_data_option(CLI::App* sub, CommonFlags& f) {
  f.track(sub->add_option("--data", f.data, "dataset bundle directory"),
          "data", [&f] { return f.data; });
}

void add_train_options(CLI::App* sub, CommonFlags& f) {
  f.track(sub->add_option("--lr", f.lr), "lr", [&f] { return fmt(f.lr); });
  f.track(sub->add_option("--weight-decay", f.weight_decay), "weight_decay",
          [&f] { return fmt(f.weight_decay); });
  f.track(sub->add_option("--dropout", f.dropout), "dropout",
          [&f] { return fmt(f.dropout); });
  f.track(sub->add_option("--epochs", f.epochs), "epochs",
          [&f] { return fmt(f.epochs); });
  f.track(sub->add_option("--patience", f.patience), "patience",
          [&f] { return fmt(f.patience); });
  f.track(sub->add_option("--batch-size", f.batch_size), "batch_size",
          [&f] { return fmt(f.batch_size); });
  f.track(sub->add_option("--hidden", f.hidden), "hidden",
          [&f] { return fmt(f.hidden); });
}

void add_scenario_options(CLI::App* sub, CommonFlags& f) {
  f.track(sub->add_option("--scenario", f.scenario)
              ->check(CLI::IsMember({"transductive", "production"})),
          "scenario", [&f] { return f.scenario; });
  f.track(sub->add_option("--ind-fraction", f.ind_fraction), "ind_fraction",
          [&f] { return fmt(f.ind_fraction); });
  f.track(sub->add_option("--per-class-train", f.per_class_train),
          "per_class_train", [&f] { return fmt(f.per_class_train); });
  f.track(sub->add_option("--per-class-val", f.per_class_val),
          "per_class_val", [&f] { return fmt(f.per_class_val); });
}

void add_loss_options(CLI::App* sub, CommonFlags& f) {
  f.track(sub->add_option("--loss", f.loss)
              ->check(CLI::IsMember(
                  {"plain", "invkd", "pnd", "pnd-fix", "conv"})),
          "loss", [&f] { return f.loss; });
  f.track(sub->add_option("--gamma", f.gamma), "gamma",
          [&f] { return fmt(f.gamma); });
  f.track(sub->add_option("--steps", f.steps), "steps",
          [&f] { return fmt(f.steps); });
  f.track(sub->add_option("--alpha", f.alpha), "alpha",
          [&f] { return fmt(f.alpha); });
  f.track(sub->add_option("--kl-direction", f.kl_direction)
              ->check(CLI::IsMember({"forward", "reverse"})),
          "kl_direction", [&f] { return f.kl_direction; });
  f.track(sub->add_option("--temperature", f.temperature), "temperature",
          [&f] { return fmt(f.temperature); });
}

void add_teacher_options(CLI::App* sub, CommonFlags& f) {
  f.track(sub->add_option("--teacher", f.teacher)
              ->check(CLI::IsMember({"sage", "appnp"})),
          "teacher", [&f] { return f.teacher; });
  f.track(sub->add_option("--teacher-hidden", f.teacher_hidden),
          "teacher_hidden", [&f] { return fmt(f.teacher_hidden); });
  f.track(sub->add_option("--appnp-gamma", f.appnp_gamma), "appnp_gamma",
          [&f] { return fmt(f.appnp_gamma); });
  f.track(sub->add_option("--appnp-steps", f.appnp_steps), "appnp_steps",
          [&f] { return fmt(f.appnp_steps); });
  f.track(sub->add_flag("--self-loops", f.self_loops,
                        "GCN-style self-loop normalization (teacher only)"),
          "self_loops", [&f] { return f.self_loops ? "true" : "false"; });
}

fs::path require_out(const RunConfig& cfg) {
  const std::string out = cfg.get_str("out");
  if (out.empty()) throw std::invalid_argument("--out is required");
  fs::create_directories(out);
  return out;
}

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

void write_report_jsonl(const fs::path& p, const TrainReport& r) {
  std::ofstream f(p);
  for (const EpochRecord& e : r.epochs) {
    json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_acc"] = e.val_acc;
    j["lap_quad"] = e.lap_quad;
    f << j.dump() << '\n';
  }
}

json split_to_json(const SplitSpec& s) {
  json j;
  j["train"] = s.train_idx;
  j["val"] = s.val_idx;
  j["test"] = s.test_idx;
  j["obs"] = s.obs_idx;
  j["ind"] = s.ind_idx;
  return j;
}

SplitSpec split_from_json(const json& j) {
  SplitSpec s;
  s.train_idx = j.at("train").get<IndexSet>();
  s.val_idx = j.at("val").get<IndexSet>();
  s.test_idx = j.at("test").get<IndexSet>();
  s.obs_idx = j.at("obs").get<IndexSet>();
  s.ind_idx = j.at("ind").get<IndexSet>();
  return s;
}

TrainHyper hyper_from(const RunConfig& cfg, std::uint64_t seed) {
  TrainHyper h;
  h.lr = cfg.get_double("lr", 1e-2);
  h.weight_decay = cfg.get_double("weight_decay", 5e-4);
  h.dropout = cfg.get_double("dropout", 0.5);
  h.max_epochs = cfg.get_int("epochs", 500);
  h.patience = cfg.get_int("patience", 50);
  h.batch_size = cfg.get_int("batch_size", 0);
  h.hidden = {cfg.get_int("hidden", 128)};
  h.seed = seed;
  return h;
}

TeacherConfig teacher_config_from(const RunConfig& cfg, std::uint64_t seed) {
  TeacherConfig tc;
  tc.arch = cfg.get_str("teacher", "sage") == "appnp" ? TeacherArch::Appnp
                                                      : TeacherArch::Sage;
  tc.hidden = cfg.get_int("teacher_hidden", 128);
  tc.appnp_gamma = cfg.get_double("appnp_gamma", 0.9);
  tc.appnp_steps = cfg.get_int("appnp_steps", 10);
  tc.self_loops = cfg.get_bool("self_loops", false);
  tc.train = hyper_from(cfg, seed);
  return tc;
}

DistillConfig distill_config_from(const RunConfig& cfg, std::uint64_t seed) {
  DistillConfig dc = make_distill_config(
      loss_variant_from_string(cfg.get_str("loss", "pnd")),
      cfg.get_double("gamma", 0.9), cfg.get_int("steps", 10));
  dc.alpha = cfg.get_double("alpha", 0.0);
  dc.kl_forward = cfg.get_str("kl_direction", "forward") != "reverse";
  dc.temperature = cfg.get_double("temperature", 1.0);
  dc.train = hyper_from(cfg, seed);
  dc.validate();
  return dc;
}

struct PreparedData {
  Graph graph;  // production: cross edges already removed
  SplitSpec split;
};

PreparedData prepare_data(const Graph& g, const RunConfig& cfg,
                          std::uint64_t seed) {
  const SplitSpec base = make_split(g, cfg.get_int("per_class_train", 20),
                                    cfg.get_int("per_class_val", 30), seed);
  if (cfg.get_str("scenario", "transductive") == "production") {
    ProductionSplit p = make_production_split(
        g, base, cfg.get_double("ind_fraction", 0.2), seed);
    return {std::move(p.graph), std::move(p.split)};
  }
  return {g, base};
}

json accuracy_summary(const Matrix& scores, const Graph& g,
                      const SplitSpec& split) {
  json j;
  j["train_acc"] = accuracy(scores, g.labels, split.train_idx);
  if (!split.val_idx.empty())
    j["val_acc"] = accuracy(scores, g.labels, split.val_idx);
  j["test_acc"] = accuracy(scores, g.labels, split.test_idx);
  if (split.production_mode()) {
    const double tran = accuracy(scores, g.labels, split.obs_idx);
    const double ind = accuracy(scores, g.labels, split.ind_idx);
    j["tran_acc"] = tran;
    j["ind_acc"] = ind;
    j["prod_acc"] = production_eval(tran, ind);
  }
  return j;
}

int thread_budget(const RunConfig& cfg, int cells) {
  int want = cfg.get_int("threads", 0);
  if (want <= 0) want = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("PROPDISTILL_THREADS"))
    want = std::min(want, std::max(1, std::atoi(cap)));
  return std::max(1, std::min(want, cells));
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

// ------------------------------------------------------------------
// Subcommands

int cmd_gen_data_chains(const RunConfig& cfg) {
  const fs::path out = require_out(cfg);
  const ChainsData d =
      gen_chains(cfg.get_int("chains", 30), cfg.get_int("length", 8),
                 cfg.get_int("classes", 10),
                 static_cast<std::uint64_t>(cfg.get_int("seed", 0)),
                 cfg.get_double("noise", 0.5));
  save_dataset(out, d.graph);
  cfg.dump(out);
  std::cout << "wrote chains bundle: " << d.graph.num_nodes << " nodes, "
            << d.graph.num_edges() << " edges\n";
  return 0;
}

int cmd_gen_data_homophily(const RunConfig& cfg) {
  const fs::path out = require_out(cfg);
  const Graph g = gen_homophily_regular(
      cfg.get_int("n", 1000), cfg.get_int("d", 10), cfg.get_double("h", 0.8),
      cfg.get_int("classes", 5),
      static_cast<std::uint64_t>(cfg.get_int("seed", 0)),
      cfg.get_int("feature_dim", 16), cfg.get_double("sep", 1.0));
  save_dataset(out, g);
  cfg.dump(out);
  std::cout << "wrote homophily bundle: " << g.num_nodes << " nodes, "
            << g.num_edges() << " edges\n";
  return 0;
}

int cmd_train_teacher(const RunConfig& cfg) {
  const fs::path out = require_out(cfg);
  const std::uint64_t seed =
      static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  const Graph g0 = load_dataset(cfg.get_str("data"));
  PreparedData data = prepare_data(g0, cfg, seed);
  const TeacherConfig tc = teacher_config_from(cfg, seed);
  const TeacherResult res = train_teacher(data.graph, data.split, tc);

  if (res.arch == TeacherArch::Sage)
    save_checkpoint(out / "teacher.json", res.sage);
  else
    save_checkpoint(out / "teacher.json", res.appnp);
  write_matrix_csv(out / "p_t.csv", res.p_t.values());
  write_report_jsonl(out / "report.jsonl", res.report);
  write_json_file(out / "split.json", split_to_json(data.split));

  json summary = accuracy_summary(res.p_t.values(), data.graph, data.split);
  summary["arch"] = cfg.get_str("teacher", "sage");
  summary["best_epoch"] = res.report.best_epoch;
  summary["best_val_acc"] = res.report.best_val_acc;
  summary["epochs_run"] = res.report.epochs.size();
  summary["seed"] = seed;
  write_json_file(out / "summary.json", summary);
  cfg.dump(out);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_distill(const RunConfig& cfg) {
  const fs::path out = require_out(cfg);
  const fs::path teacher_dir = cfg.get_str("teacher_dir");
  if (teacher_dir.empty())
    throw std::invalid_argument("--teacher-dir is required");
  const std::uint64_t seed =
      static_cast<std::uint64_t>(cfg.get_int("seed", 0));

  const Graph g0 = load_dataset(cfg.get_str("data"));
  json split_json;
  io_detail::open_in(teacher_dir / "split.json") >> split_json;
  const SplitSpec split = split_from_json(split_json);
  split.validate(g0.num_nodes);
  const Graph g = split.production_mode()
                      ? remove_cross_edges(g0, split.obs_idx, split.ind_idx)
                      : g0;
  const ProbMatrix p_t(read_matrix_csv(teacher_dir / "p_t.csv"));

  const DistillConfig dc = distill_config_from(cfg, seed);
  const StudentResult res = distill_student(g, p_t, split, dc);

  save_checkpoint(out / "student.json", res.model);
  write_report_jsonl(out / "report.jsonl", res.report);

  // the student needs no graph at inference time
  const Matrix logits = mlp_forward(res.model, g.features, false);
  json summary = accuracy_summary(logits, g, split);
  summary["loss"] = to_string(dc.loss_variant);
  summary["best_epoch"] = res.report.best_epoch;
  summary["best_val_acc"] = res.report.best_val_acc;
  summary["epochs_run"] = res.report.epochs.size();
  summary["final_lap_quad"] =
      res.report.epochs.empty() ? 0.0 : res.report.epochs.back().lap_quad;
  summary["seed"] = seed;
  write_json_file(out / "summary.json", summary);
  cfg.dump(out);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  const fs::path out = require_out(cfg);
  const std::vector<std::uint64_t> seeds = cfg.get_seeds({0, 1, 2, 3, 4});
  std::vector<std::string> losses = cfg.get_str_list("losses");
  if (losses.empty()) losses = {cfg.get_str("loss", "pnd")};
  std::vector<double> gammas;
  if (cfg.has("gammas")) gammas = cfg.get_double_list("gammas");
  if (gammas.empty()) gammas = {cfg.get_double("gamma", 0.9)};
  std::vector<double> steps_list;
  if (cfg.has("steps_list")) steps_list = cfg.get_double_list("steps_list");
  if (steps_list.empty())
    steps_list = {static_cast<double>(cfg.get_int("steps", 10))};

  const Graph g0 = load_dataset(cfg.get_str("data"));

  struct Cell {
    std::string loss;
    double gamma;
    int steps;
    std::uint64_t seed;
    double acc = 0.0;
  };
  std::vector<Cell> cells;
  for (const std::string& l : losses)
    for (double gm : gammas)
      for (double st : steps_list)
        for (std::uint64_t s : seeds)
          cells.push_back({l, gm, static_cast<int>(st), s});
  if (cells.empty()) throw std::invalid_argument("sweep: empty grid");

  // teachers depend only on the seed; train each once and share
  std::vector<PreparedData> data(seeds.size());
  std::vector<ProbMatrix> teachers(seeds.size());
  parallel_for(static_cast<int>(seeds.size()),
               thread_budget(cfg, static_cast<int>(seeds.size())), [&](int i) {
                 data[i] = prepare_data(g0, cfg, seeds[i]);
                 const TeacherConfig tc = teacher_config_from(cfg, seeds[i]);
                 teachers[i] =
                     train_teacher(data[i].graph, data[i].split, tc).p_t;
               });

  parallel_for(
      static_cast<int>(cells.size()),
      thread_budget(cfg, static_cast<int>(cells.size())), [&](int i) {
        Cell& cell = cells[i];
        std::size_t si = 0;
        while (seeds[si] != cell.seed) ++si;
        RunConfig local = cfg;
        local.set("loss", cell.loss);
        local.set("gamma", fmt(cell.gamma));
        local.set("steps", fmt(cell.steps));
        const DistillConfig dc = distill_config_from(local, cell.seed);
        const StudentResult res =
            distill_student(data[si].graph, teachers[si], data[si].split, dc);
        const Matrix logits =
            mlp_forward(res.model, data[si].graph.features, false);
        const SplitSpec& split = data[si].split;
        if (split.production_mode())
          cell.acc = production_eval(
              accuracy(logits, data[si].graph.labels, split.obs_idx),
              accuracy(logits, data[si].graph.labels, split.ind_idx));
        else
          cell.acc = accuracy(logits, data[si].graph.labels, split.test_idx);
      });

  std::ofstream runs(out / "runs.csv");
  runs << "loss,gamma,steps,seed,acc\n";
  for (const Cell& c : cells)
    runs << c.loss << ',' << fmt(c.gamma) << ',' << c.steps << ',' << c.seed
         << ',' << fmt(c.acc) << '\n';

  std::ofstream agg(out / "sweep.csv");
  agg << "loss,gamma,steps,mean_acc,std_acc,num_seeds\n";
  for (const std::string& l : losses)
    for (double gm : gammas)
      for (double st : steps_list) {
        double sum = 0.0, sq = 0.0;
        int n = 0;
        for (const Cell& c : cells)
          if (c.loss == l && c.gamma == gm &&
              c.steps == static_cast<int>(st)) {
            sum += c.acc;
            sq += c.acc * c.acc;
            ++n;
          }
        const double mean = sum / n;
        const double var = std::max(0.0, sq / n - mean * mean);
        agg << l << ',' << fmt(gm) << ',' << static_cast<int>(st) << ','
            << fmt(mean) << ',' << fmt(std::sqrt(var)) << ',' << n << '\n';
      }
  cfg.dump(out);
  std::cout << "sweep finished: " << cells.size() << " runs\n";
  return 0;
}

int cmd_verify_theorem(const RunConfig& cfg, bool epsilon_scan_flag,
                       double corrupt_c) {
  const fs::path out = require_out(cfg);
  const auto grid = default_theorem_grid();
  const TheoryReport rep = verify_theorem(grid, corrupt_c);

  {
    std::ofstream f(out / "theorem_cells.csv");
    f << "num_classes,h,p,gamma,eps,q,exact,interval,boundary_distance,"
         "band\n";
    for (const TheoryCell& c : rep.cells)
      f << c.tp.num_classes << ',' << fmt(c.tp.h) << ',' << fmt(c.tp.p) << ','
        << fmt(c.tp.gamma) << ',' << fmt(c.tp.eps) << ',' << fmt(c.tp.q)
        << ',' << c.exact_corrected << ',' << c.interval_corrected << ','
        << fmt(c.boundary_distance) << ',' << fmt(c.band) << '\n';
  }

  long y50_total = 0, y50_agree = 0;
  for (const TheoryCell& c : rep.cells)
    if (c.tp.num_classes >= 50) {
      ++y50_total;
      y50_agree += c.exact_corrected == c.interval_corrected;
    }
  const double y50_rate =
      y50_total ? static_cast<double>(y50_agree) / y50_total : 1.0;

  bool ok = rep.outside_band == 0 && y50_rate >= 0.999;

  // the error tolerance must grow strictly with homophily
  for (int y : {2, 3, 5, 10, 50}) {
    double prev = -1.0;
    for (int k = 1; k <= 50; ++k) {
      const double h = 1.0 / y + k * (1.0 - 1.0 / y) / 50.0;
      const double e = epsilon_bound(h, y);
      if (e <= prev) ok = false;
      prev = e;
    }
  }

  json summary;
  summary["cells"] = rep.total;
  summary["agreement_rate"] = rep.agreement_rate();
  summary["outside_band"] = rep.outside_band;
  summary["agreement_rate_y50"] = y50_rate;

  if (epsilon_scan_flag) {
    const auto scans = epsilon_scan(default_scan_lines());
    std::ofstream f(out / "epsilon_scan.csv");
    f << "num_classes,h,p,gamma,monotone\n";
    long violations = 0;
    for (const auto& line : scans) {
      f << line.base.num_classes << ',' << fmt(line.base.h) << ','
        << fmt(line.base.p) << ',' << fmt(line.base.gamma) << ','
        << line.monotone << '\n';
      violations += !line.monotone;
    }
    summary["epsilon_scan_lines"] = scans.size();
    summary["epsilon_scan_violations"] = violations;
    if (violations > 0) ok = false;
  }

  summary["pass"] = ok;
  write_json_file(out / "summary.json", summary);
  cfg.dump(out);
  std::cout << summary.dump(2) << '\n';
  return ok ? 0 : 1;
}

int cmd_chains_case_study(const RunConfig& cfg) {
  const fs::path out = require_out(cfg);
  const std::uint64_t seed =
      static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  const Graph g = load_dataset(cfg.get_str("data"));
  const ChainsData chains = derive_chains_structure(g);
  const NormAdj adj = normalize_adjacency(g);
  const double gamma = cfg.get_double("gamma", 0.9);
  const int steps = cfg.get_int("steps", 50);

  TeacherConfig tc = teacher_config_from(cfg, seed);
  const TeacherResult teacher = train_teacher(g, chains.split, tc);

  const ProbMatrix raw = teacher.p_t;
  const ProbMatrix inv =
      clamp_renormalize(inverse_operator_solve(raw, adj, gamma));
  const ProbMatrix pnd = propagate_recursive(raw, adj, gamma, steps);
  const ProbMatrix pnd_fix = propagate_recursive_fix(
      raw, adj, gamma, steps, chains.split.train_idx);
  write_matrix_csv(out / "teacher_raw.csv",
                   clamp_renormalize(raw.values()).values());
  write_matrix_csv(out / "inverse_propagated.csv", inv.values());
  write_matrix_csv(out / "propagated.csv", pnd.values());
  write_matrix_csv(out / "propagated_fix.csv", pnd_fix.values());

  json summary;
  summary["teacher_far_acc"] = accuracy(raw.values(), g.labels, chains.far_idx);
  IndexSet near_idx = chains.split.val_idx;  // hops 1..2
  for (int v : chains.split.test_idx)
    if (!std::binary_search(chains.far_idx.begin(), chains.far_idx.end(), v))
      near_idx.push_back(v);
  summary["teacher_near_acc"] = accuracy(raw.values(), g.labels, near_idx);

  const std::vector<std::string> methods = {"plain", "invkd", "pnd",
                                            "pnd-fix"};
  for (const std::string& method : methods) {
    RunConfig local = cfg;
    local.set("loss", method);
    local.set("gamma", fmt(gamma));
    local.set("steps", fmt(steps));
    const DistillConfig dc = distill_config_from(local, seed);
    const StudentResult res = distill_student(g, raw, chains.split, dc);
    summary[method]["far_acc"] =
        evaluate(res.model, g.features, g.labels, chains.far_idx);
    summary[method]["test_acc"] =
        evaluate(res.model, g.features, g.labels, chains.split.test_idx);
  }
  write_json_file(out / "summary.json", summary);
  cfg.dump(out);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
             const std::string& node_set) {
  const Graph g = load_dataset(cfg.get_str("data"));
  const MlpModel model = load_mlp_checkpoint(checkpoint);
  IndexSet idx;
  if (!cfg.get_str("teacher_dir").empty() && node_set != "all") {
    json split_json;
    io_detail::open_in(fs::path(cfg.get_str("teacher_dir")) / "split.json") >>
        split_json;
    const SplitSpec split = split_from_json(split_json);
    if (node_set == "train")
      idx = split.train_idx;
    else if (node_set == "val")
      idx = split.val_idx;
    else if (node_set == "test")
      idx = split.test_idx;
    else if (node_set == "obs")
      idx = split.obs_idx;
    else if (node_set == "ind")
      idx = split.ind_idx;
    else
      throw std::invalid_argument("eval: unknown node set " + node_set);
  } else {
    idx.resize(g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i) idx[i] = i;
  }
  json j;
  j["nodes"] = idx.size();
  j["accuracy"] = evaluate(model, g.features, g.labels, idx);
  std::cout << j.dump(2) << '\n';
  if (!cfg.get_str("out").empty()) {
    const fs::path out = require_out(cfg);
    write_json_file(out / "eval.json", j);
    cfg.dump(out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GNN-to-MLP distillation with propagation operators"};
  app.require_subcommand(1);

  auto flags = std::make_shared<CommonFlags>();
  int exit_code = 0;
  auto run = [&exit_code, flags](int (*fn)(const RunConfig&)) {
    return [&exit_code, flags, fn] { exit_code = fn(flags->resolve()); };
  };

  CLI::App* gen = app.add_subcommand("gen-data", "write a dataset bundle");
  gen->require_subcommand(1);
  CLI::App* gen_chains_cmd =
      gen->add_subcommand("chains", "disjoint path graphs");
  add_common_options(gen_chains_cmd, *flags);
  flags->track(gen_chains_cmd->add_option("--chains", flags->chains),
               "chains", [flags] { return fmt(flags->chains); });
  flags->track(gen_chains_cmd->add_option("--length", flags->length),
               "length", [flags] { return fmt(flags->length); });
  flags->track(gen_chains_cmd->add_option("--classes", flags->classes),
               "classes", [flags] { return fmt(flags->classes); });
  flags->track(gen_chains_cmd->add_option("--noise", flags->noise), "noise",
               [flags] { return fmt(flags->noise); });
  gen_chains_cmd->callback(run(cmd_gen_data_chains));

  CLI::App* gen_hom =
      gen->add_subcommand("homophily", "regular homophily graph");
  add_common_options(gen_hom, *flags);
  flags->track(gen_hom->add_option("--n", flags->n), "n",
               [flags] { return fmt(flags->n); });
  flags->track(gen_hom->add_option("--d", flags->d), "d",
               [flags] { return fmt(flags->d); });
  flags->track(gen_hom->add_option("--homophily", flags->h), "h",
               [flags] { return fmt(flags->h); });
  flags->track(gen_hom->add_option("--classes", flags->classes), "classes",
               [flags] { return fmt(flags->classes); });
  flags->track(gen_hom->add_option("--feature-dim", flags->feature_dim),
               "feature_dim", [flags] { return fmt(flags->feature_dim); });
  flags->track(gen_hom->add_option("--sep", flags->sep), "sep",
               [flags] { return fmt(flags->sep); });
  gen_hom->callback(run(cmd_gen_data_homophily));

  CLI::App* tt = app.add_subcommand("train-teacher", "train the teacher GNN");
  add_common_options(tt, *flags);
  add_data_option(tt, *flags);
  add_train_options(tt, *flags);
  add_scenario_options(tt, *flags);
  add_teacher_options(tt, *flags);
  tt->callback(run(cmd_train_teacher));

  CLI::App* di = app.add_subcommand("distill", "distill the student MLP");
  add_common_options(di, *flags);
  add_data_option(di, *flags);
  add_train_options(di, *flags);
  add_loss_options(di, *flags);
  flags->track(di->add_option("--teacher-dir", flags->teacher_dir,
                              "train-teacher output directory"),
               "teacher_dir", [flags] { return flags->teacher_dir; });
  di->callback(run(cmd_distill));

  CLI::App* sw =
      app.add_subcommand("sweep", "grid over (loss, gamma, T, seed)");
  add_common_options(sw, *flags);
  add_data_option(sw, *flags);
  add_train_options(sw, *flags);
  add_loss_options(sw, *flags);
  add_scenario_options(sw, *flags);
  add_teacher_options(sw, *flags);
  flags->track(sw->add_option("--seeds", flags->seeds, "comma-separated"),
               "seeds", [flags] { return flags->seeds; });
  flags->track(sw->add_option("--losses", flags->losses, "comma-separated"),
               "losses", [flags] { return flags->losses; });
  flags->track(sw->add_option("--gammas", flags->gammas, "comma-separated"),
               "gammas", [flags] { return flags->gammas; });
  flags->track(
      sw->add_option("--steps-list", flags->steps_list, "comma-separated"),
      "steps_list", [flags] { return flags->steps_list; });
  flags->track(sw->add_option("--threads", flags->threads), "threads",
               [flags] { return fmt(flags->threads); });
  sw->callback(run(cmd_sweep));

  CLI::App* vt = app.add_subcommand("verify-theorem",
                                    "check the self-correction analysis");
  add_common_options(vt, *flags);
  bool eps_scan = false;
  double corrupt_c = 0.0;
  vt->add_flag("--epsilon-scan", eps_scan,
               "also scan monotone narrowing in eps");
  vt->add_option("--corrupt-c", corrupt_c,
                 "negative-control hook: perturb the interval formula")
      ->group("");
  vt->callback([&exit_code, flags, &eps_scan, &corrupt_c] {
    exit_code = cmd_verify_theorem(flags->resolve(), eps_scan, corrupt_c);
  });

  CLI::App* cs = app.add_subcommand(
      "chains-case-study", "propagation views + per-method students");
  add_common_options(cs, *flags);
  add_data_option(cs, *flags);
  add_train_options(cs, *flags);
  add_loss_options(cs, *flags);
  add_teacher_options(cs, *flags);
  cs->callback(run(cmd_chains_case_study));

  CLI::App* ev = app.add_subcommand("eval", "evaluate a student checkpoint");
  add_common_options(ev, *flags);
  add_data_option(ev, *flags);
  std::string checkpoint, node_set = "test";
  ev->add_option("--checkpoint", checkpoint, "student checkpoint")
      ->required();
  ev->add_option("--set", node_set, "train|val|test|obs|ind|all");
  flags->track(ev->add_option("--teacher-dir", flags->teacher_dir,
                              "directory holding split.json"),
               "teacher_dir", [flags] { return flags->teacher_dir; });
  ev->callback([&exit_code, flags, &checkpoint, &node_set] {
    exit_code = cmd_eval(flags->resolve(), checkpoint, node_set);
  });

  try {
    CLI11_PARSE(app, argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}
