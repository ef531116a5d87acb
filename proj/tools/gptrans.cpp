// gptrans command-line tool.
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gptrans/gptrans.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gptrans;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------- hashing / manifest

std::string git_blob_sha1(const std::string& content) {
  const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open file for writing");
  out << text;
  if (!out) throw IoError(path, "write failed");
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Records what a command consumed and produced. The content hash covers the
/// command, config, seed and the bytes of every input file, so reruns with the
/// same inputs share it while timestamps differ.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv) : command_(std::move(command)), argv_(std::move(argv)) {
    started_ = utc_now();
  }

  void set_config(json c) { config_ = std::move(c); }
  void set_seed(std::uint64_t s) { seed_ = s; }
  void add_input(const std::string& role, const std::string& path) {
    inputs_.push_back({{"role", role}, {"path", path}, {"sha1", git_blob_sha1(read_file(path))}});
  }
  void add_output(const std::string& path) { outputs_.push_back(path); }

  json to_json() const {
    const json hashed{{"command", command_}, {"config", config_}, {"seed", seed_}, {"inputs", inputs_}};
    json outs = json::array();
    for (const auto& p : outputs_)
      if (fs::exists(p)) outs.push_back({{"path", p}, {"sha1", git_blob_sha1(read_file(p))}});
    return {{"tool", "gptrans"},
            {"version", kVersion},
            {"command", command_},
            {"argv", argv_},
            {"config", config_},
            {"seed", seed_},
            {"inputs", inputs_},
            {"outputs", outs},
            {"content_hash", git_blob_sha1(hashed.dump())},
            {"started_at", started_},
            {"finished_at", utc_now()}};
  }

  void write(const std::string& dir) const { write_json(dir + "/manifest.json", to_json()); }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  json config_ = json::object();
  json seed_ = nullptr;
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
  std::string started_;
};

// ---------------------------------------------------------------- table printing

class Table {
 public:
  explicit Table(std::vector<std::string> header) : rows_{std::move(header)} {}
  void row(std::vector<std::string> r) { rows_.push_back(std::move(r)); }

  void print(std::ostream& os) const {
    std::vector<std::size_t> w(rows_[0].size(), 0);
    for (const auto& r : rows_)
      for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      for (std::size_t i = 0; i < rows_[k].size(); ++i)
        os << (i ? "  " : "") << (i ? std::right : std::left) << std::setw(static_cast<int>(w[i])) << rows_[k][i];
      os << '\n';
      if (k == 0) {
        std::size_t total = 0;
        for (auto x : w) total += x + 2;
        os << std::string(total - 2, '-') << '\n';
      }
    }
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string fixed(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------- shared options

struct ModelFlags {
  std::string preset = "nano";
  std::optional<std::size_t> layers, d1, d2, heads;
  bool n2e = true, e2n = true, dual_ffn = false, no_reg = false;
  std::string task = "graph-regression";
  std::size_t num_classes = 2;

  void attach(CLI::App* app, bool with_task) {
    app->add_option("--preset", preset, "Architecture preset")
        ->check(CLI::IsMember({"nano", "tiny", "small", "base", "large"}))
        ->capture_default_str();
    app->add_option("--layers", layers, "Number of blocks");
    app->add_option("--d1", d1, "Node width");
    app->add_option("--d2", d2, "Edge width");
    app->add_option("--heads", heads, "Attention heads (d1 must divide evenly)");
    app->add_flag("--toggle-n2e,!--no-toggle-n2e", n2e, "Node-to-edge path")->capture_default_str();
    app->add_flag("--toggle-e2n,!--no-toggle-e2n", e2n, "Edge-to-node path")->capture_default_str();
    app->add_flag("--dual-ffn", dual_ffn, "Use the dual-FFN baseline block");
    app->add_flag("--no-regularization", no_reg, "Zero every dropout and drop-path rate");
    if (with_task) {
      app->add_option("--task", task, "Model task")
          ->check(CLI::IsMember({"graph-regression", "graph-classification", "node-classification", "edge-classification"}))
          ->capture_default_str();
      app->add_option("--num-classes", num_classes, "Classes for classification tasks")->capture_default_str();
    }
  }

  ModelConfig build() const {
    ModelConfig c = preset_config();
    if (layers) c.n_layers = *layers;
    if (d1) c.d1 = *d1;
    if (d2) c.d2 = *d2;
    if (heads) c.n_head = *heads;
    if (d1 || heads) {
      if (c.n_head == 0 || c.d1 % c.n_head != 0)
        throw ConfigError("--d1 (" + std::to_string(c.d1) + ") must be divisible by --heads (" + std::to_string(c.n_head) + ")");
      c.d_head = c.d1 / c.n_head;
    }
    c.toggles = {n2e, e2n};
    c.baseline_dual_ffn = dual_ffn;
    c.task = parse_task(task, num_classes);
    if (no_reg) c = without_regularization(c);
    c.validate();
    return c;
  }

 private:
  ModelConfig preset_config() const { return gptrans::preset(preset); }
};

struct TrainFlags {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double warmup_epochs = 0.0;
  double weight_decay = 0.05;
  double ema_decay = 0.9999;
  std::optional<double> clip_norm;
  std::size_t max_steps = 0;
  std::size_t eval_every = 1;
  std::size_t patience = 0;

  void attach(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--batch-size", batch_size, "Graphs per optimizer step")->capture_default_str();
    app->add_option("--lr", lr, "Peak learning rate")->capture_default_str();
    app->add_option("--warmup-epochs", warmup_epochs, "Linear warmup length in epochs")->capture_default_str();
    app->add_option("--weight-decay", weight_decay, "Decoupled weight decay")->capture_default_str();
    app->add_option("--ema-decay", ema_decay, "Parameter EMA decay")->capture_default_str();
    app->add_option("--clip-norm", clip_norm, "Clip gradients to this global L2 norm");
    app->add_option("--max-steps", max_steps, "Stop after this many optimizer steps (0 = no cap)");
    app->add_option("--eval-every", eval_every, "Epochs between evaluations")->capture_default_str();
    app->add_option("--patience", patience, "Early-stop after this many evaluations without improvement");
  }

  TrainOptions build(std::uint64_t seed, const std::string& out) const {
    TrainOptions o;
    o.epochs = epochs;
    o.batch_size = batch_size;
    o.lr_peak = lr;
    o.warmup_epochs = warmup_epochs;
    o.adam.weight_decay = weight_decay;
    o.ema_decay = ema_decay;
    o.clip_norm = clip_norm;
    o.max_steps = max_steps;
    o.eval_every = eval_every;
    o.patience = patience;
    o.seed = seed;
    o.threads = thread_count();
    o.out_dir = out;
    return o;
  }

  json to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"warmup_epochs", warmup_epochs},
            {"weight_decay", weight_decay},
            {"ema_decay", ema_decay},
            {"clip_norm", clip_norm ? json(*clip_norm) : json(nullptr)},
            {"max_steps", max_steps},
            {"eval_every", eval_every},
            {"patience", patience}};
  }
};

/// Vocabulary from an explicit file or preset name, else vocab.json beside the data, else a scan.
Vocab resolve_vocab(const std::string& spec, const std::string& data_path, std::span<const Graph> graphs,
                    Manifest* manifest = nullptr) {
  if (!spec.empty()) {
    if (fs::exists(spec)) {
      if (manifest) manifest->add_input("vocab", spec);
      return vocab_from_json(json::parse(read_file(spec)));
    }
    return vocab_preset(spec);
  }
  if (!data_path.empty()) {
    const fs::path side = fs::path(data_path).parent_path() / "vocab.json";
    if (fs::exists(side)) {
      if (manifest) manifest->add_input("vocab", side.string());
      return vocab_from_json(json::parse(read_file(side.string())));
    }
  }
  return scan_vocab(graphs);
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

void emit(const json& j, bool as_json, const std::function<void()>& table) {
  if (as_json)
    std::cout << j.dump(2) << '\n';
  else
    table();
}

std::string metric_str(const std::optional<double>& v) { return v ? fmt(*v, 6) : "-"; }

// ---------------------------------------------------------------- synth

int cmd_synth(const SynthOptions& o, const std::string& out, const std::vector<std::string>& argv, bool as_json) {
  if (out.empty()) throw ConfigError("synth needs --out");
  Manifest m("synth", argv);
  m.set_config(to_json(o));
  m.set_seed(o.seed);
  const auto graphs = synthesize(o);
  ensure_dir(out);
  const Vocab vocab = scan_vocab(graphs);
  write_graphs(out + "/graphs.jsonl", graphs);
  write_json(out + "/vocab.json", to_json(vocab));
  m.add_output(out + "/graphs.jsonl");
  m.add_output(out + "/vocab.json");
  m.write(out);
  const Task task = synth_model_task(o);
  json summary{{"task", synth_task_name(o.task)}, {"model_task", task_name(task)}, {"num_classes", task.num_classes},
               {"n_graphs", graphs.size()}, {"vocab", to_json(vocab)}, {"out", out}};
  emit(summary, as_json, [&] {
    Table t({"field", "value"});
    t.row({"task", synth_task_name(o.task)});
    t.row({"model task", task_name(task)});
    t.row({"graphs", std::to_string(graphs.size())});
    t.row({"node vocab", json(vocab.node_attr).dump()});
    t.row({"edge vocab", json(vocab.edge_attr).dump()});
    t.row({"written to", out});
    t.print(std::cout);
  });
  return 0;
}

// ---------------------------------------------------------------- scan

int cmd_scan(const std::string& data, const std::string& out, const std::vector<std::string>& argv, bool as_json) {
  if (data.empty()) throw ConfigError("scan needs --data");
  Manifest m("scan", argv);
  m.add_input("data", data);
  const auto graphs = read_graphs(data);
  const Vocab vocab = scan_vocab(graphs);
  std::size_t nodes = 0, edges = 0, max_nodes = 0, with_graph = 0, with_node = 0, with_edge = 0;
  for (const auto& g : graphs) {
    nodes += g.num_nodes;
    edges += g.edges.size();
    max_nodes = std::max(max_nodes, g.num_nodes);
    with_graph += g.graph_target.has_value();
    with_node += g.node_targets.has_value();
    with_edge += g.edge_targets.has_value();
  }
  const double n = std::max<double>(1.0, static_cast<double>(graphs.size()));
  json stats{{"n_graphs", graphs.size()},
             {"mean_nodes", static_cast<double>(nodes) / n},
             {"max_nodes", max_nodes},
             {"mean_edges", static_cast<double>(edges) / n},
             {"graph_targets", with_graph},
             {"node_targets", with_node},
             {"edge_targets", with_edge},
             {"vocab", to_json(vocab)}};
  if (!out.empty()) {
    ensure_dir(out);
    write_json(out + "/vocab.json", to_json(vocab));
    write_json(out + "/stats.json", stats);
    m.add_output(out + "/vocab.json");
    m.add_output(out + "/stats.json");
    m.write(out);
  }
  emit(stats, as_json, [&] {
    Table t({"field", "value"});
    t.row({"graphs", std::to_string(graphs.size())});
    t.row({"mean nodes", fixed(stats["mean_nodes"].get<double>(), 2)});
    t.row({"max nodes", std::to_string(max_nodes)});
    t.row({"mean directed edges", fixed(stats["mean_edges"].get<double>(), 2)});
    t.row({"graph / node / edge targets",
           std::to_string(with_graph) + " / " + std::to_string(with_node) + " / " + std::to_string(with_edge)});
    t.row({"node vocab", json(vocab.node_attr).dump()});
    t.row({"edge vocab", json(vocab.edge_attr).dump()});
    t.print(std::cout);
  });
  return 0;
}

// ---------------------------------------------------------------- train / eval

int cmd_train(const ModelFlags& mf, const TrainFlags& tf, std::uint64_t seed, const std::string& data,
              const std::string& eval_data, const std::string& vocab_spec, const std::string& out,
              const std::vector<std::string>& argv, bool as_json) {
  if (data.empty()) throw ConfigError("train needs --data");
  if (out.empty()) throw ConfigError("train needs --out");
  const ModelConfig cfg = mf.build();
  Manifest m("train", argv);
  m.set_seed(seed);
  m.add_input("data", data);
  const auto train = read_graphs(data);
  std::vector<Graph> eval;
  if (!eval_data.empty()) {
    m.add_input("eval_data", eval_data);
    eval = read_graphs(eval_data);
  }
  const Vocab vocab = resolve_vocab(vocab_spec, data, train, &m);
  m.set_config({{"model", to_json(cfg)}, {"train", tf.to_json()}, {"vocab", to_json(vocab)}});
  ensure_dir(out);
  const TrainOptions opt = tf.build(seed, out);
  const auto r = train_loop<float>(train, eval, cfg, vocab, opt);
  for (const char* f : {"metrics.jsonl", "config.json", "last.ckpt", "best.ckpt"}) m.add_output(out + "/" + f);
  m.write(out);

  json summary{{"steps", r.steps},
               {"epochs", r.log.size()},
               {"final_train_loss", r.log.empty() ? 0.0 : r.log.back().train_loss},
               {"best_metric", r.best_metric ? json(*r.best_metric) : json(nullptr)},
               {"best_epoch", r.best_epoch},
               {"out", out}};
  emit(summary, as_json, [&] {
    Table t({"epoch", "step", "lr", "train_loss", "eval_metric"});
    for (const auto& e : r.log)
      t.row({std::to_string(e.epoch), std::to_string(e.step), fmt(e.lr, 4), fmt(e.train_loss, 6), metric_str(e.eval_metric)});
    t.print(std::cout);
    std::cout << "\nsteps " << r.steps << ", best eval " << metric_str(r.best_metric) << " at epoch " << r.best_epoch
              << "; outputs in " << out << "\n";
  });
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path, const std::string& data, bool use_ema,
             const std::string& out, const std::vector<std::string>& argv, bool as_json) {
  if (checkpoint.empty() || data.empty()) throw ConfigError("eval needs --checkpoint and --data");
  const std::string cpath = config_path.empty() ? (fs::path(checkpoint).parent_path() / "config.json").string() : config_path;
  Manifest m("eval", argv);
  m.add_input("checkpoint", checkpoint);
  m.add_input("config", cpath);
  m.add_input("data", data);
  const json cj = json::parse(read_file(cpath));
  const ModelConfig cfg = config_from_json(cj.at("model"));
  const Vocab vocab = vocab_from_json(cj.at("vocab"));
  m.set_config({{"model", to_json(cfg)}, {"use_ema", use_ema}});
  const auto entries = read_checkpoint(checkpoint);
  if (use_ema && !has_prefix(entries, "ema/")) throw ConfigError("checkpoint " + checkpoint + " has no EMA section");
  auto params = init_params<float>(cfg, vocab, 0);
  load_into(params, entries, use_ema ? "ema/" : "");
  const auto graphs = read_graphs(data);
  const MetricReport rep = evaluate(graphs, cfg, params, thread_count());
  json j = to_json(rep);
  j["use_ema"] = use_ema;
  if (!out.empty()) {
    ensure_dir(out);
    write_json(out + "/eval.json", j);
    m.add_output(out + "/eval.json");
    m.write(out);
  }
  emit(j, as_json, [&] {
    Table t({"metric", "value"});
    t.row({"task", rep.task});
    t.row({"graphs/positions", std::to_string(rep.count)});
    t.row({"loss", fmt(rep.loss, 6)});
    t.row({"mae", metric_str(rep.mae)});
    t.row({"accuracy", metric_str(rep.accuracy)});
    t.row({"f1", metric_str(rep.f1)});
    t.row({"roc_auc", metric_str(rep.roc_auc)});
    t.row({"average_precision", metric_str(rep.average_precision)});
    t.row({"weights", use_ema ? "ema" : "live"});
    t.print(std::cout);
  });
  return 0;
}

// ---------------------------------------------------------------- gradcheck / params / flops / bench

int cmd_gradcheck(const ModelFlags& mf, std::size_t nodes, std::uint64_t seed, const GradcheckOptions& gc,
                  const std::string& out, const std::vector<std::string>& argv, bool as_json) {
  const ModelConfig cfg = mf.build();
  ModelGradcheckOptions o;
  o.n_nodes = nodes;
  o.seed = seed;
  o.check = gc;
  const GradcheckReport r = model_gradcheck(cfg, o);
  json j = to_json(r);
  j["n_nodes"] = nodes;
  j["config"] = to_json(cfg);
  if (!out.empty()) {
    Manifest m("gradcheck", argv);
    m.set_config(to_json(cfg));
    m.set_seed(seed);
    ensure_dir(out);
    write_json(out + "/gradcheck.json", j);
    m.add_output(out + "/gradcheck.json");
    m.write(out);
  }
  emit(j, as_json, [&] {
    Table t({"parameter", "checked", "max_abs_err", "max_rel_err", "status"});
    for (const auto& e : r.entries)
      t.row({e.name, std::to_string(e.checked), fmt(e.max_abs_error, 3), fmt(e.max_rel_error, 3), e.pass ? "ok" : "FAIL"});
    t.print(std::cout);
    std::cout << "\nmax relative error " << fmt(r.max_rel_error(), 3) << " (tolerance " << r.tol << "): "
              << (r.pass() ? "PASS" : "FAIL") << "\n";
  });
  return r.pass() ? 0 : 1;
}

/// Parameter group of a checkpoint name: "embed.node.0" -> "embed.node", "block3.gpa.w_q" -> "block*.gpa".
std::string param_group(const std::string& name) {
  std::string n = name;
  if (n.rfind("block", 0) == 0) n = "block*" + n.substr(n.find('.'));
  const auto a = n.find('.');
  if (a == std::string::npos) return n;
  const auto b = n.find('.', a + 1);
  return b == std::string::npos ? n : n.substr(0, b);
}

int cmd_params(const ModelFlags& mf, const std::string& vocab_spec, const std::string& out, const std::vector<std::string>& argv,
               bool as_json) {
  const ModelConfig cfg = mf.build();
  const Vocab vocab = resolve_vocab(vocab_spec.empty() ? "zinc-like" : vocab_spec, "", {});
  std::map<std::string, std::size_t> groups;
  for (const auto& s : param_specs(cfg, vocab)) groups[param_group(s.name)] += numel(s.shape);
  const std::size_t total = count_params(cfg, vocab);
  json g = json::object();
  for (const auto& [k, v] : groups) g[k] = v;
  json j{{"total", total}, {"groups", g}, {"config", to_json(cfg)}, {"vocab", to_json(vocab)}};
  if (!out.empty()) {
    Manifest m("params", argv);
    m.set_config(to_json(cfg));
    ensure_dir(out);
    write_json(out + "/params.json", j);
    m.add_output(out + "/params.json");
    m.write(out);
  }
  emit(j, as_json, [&] {
    Table t({"group", "parameters", "share"});
    for (const auto& [k, v] : groups)
      t.row({k, std::to_string(v), fixed(100.0 * static_cast<double>(v) / static_cast<double>(total), 1) + "%"});
    t.row({"total", std::to_string(total), "100.0%"});
    t.print(std::cout);
  });
  return 0;
}

int cmd_flops(const ModelFlags& mf, std::size_t nodes, const std::string& out, const std::vector<std::string>& argv, bool as_json) {
  const ModelConfig cfg = mf.build();
  const FlopReport r = estimate_flops(cfg, nodes);
  json j = to_json(r);
  j["config"] = to_json(cfg);
  if (!out.empty()) {
    Manifest m("flops", argv);
    m.set_config(to_json(cfg));
    ensure_dir(out);
    write_json(out + "/flops.json", j);
    m.add_output(out + "/flops.json");
    m.write(out);
  }
  emit(j, as_json, [&] {
    Table t({"term", "matmul MACs", "elementwise", "FLOPs (2*MAC)"});
    for (const auto& term : r.terms) t.row({term.name, fmt(term.macs, 5), fmt(term.elementwise, 5), fmt(2 * term.macs + term.elementwise, 5)});
    t.print(std::cout);
    std::cout << "\n" << nodes << " nodes: " << fixed(r.mac_count() / 1e9, 4) << " G (MAC = 1 op), " << fixed(r.flops() / 1e9, 4)
              << " G (MAC = 2 ops)\n";
  });
  return 0;
}

int cmd_bench(const ModelFlags& mf, const BenchOptions& bo, const std::string& out, const std::vector<std::string>& argv,
              bool as_json) {
  if (bo.warmup < 10 || bo.iters < 30) throw ConfigError("bench needs at least 10 warmup and 30 measured iterations");
  ModelConfig cfg = mf.build();
  std::vector<BlockBench> runs{bench_block(cfg, false, bo)};
  if (mf.dual_ffn) runs.push_back(bench_block(cfg, true, bo));
  json arr = json::array();
  for (const auto& b : runs) arr.push_back(to_json(b));
  json j{{"config", to_json(cfg)}, {"warmup", bo.warmup}, {"iters", bo.iters}, {"threads", 1}, {"results", arr}};
  if (!out.empty()) {
    Manifest m("bench", argv);
    m.set_config(to_json(cfg));
    m.set_seed(bo.seed);
    ensure_dir(out);
    write_json(out + "/bench.json", j);
    m.add_output(out + "/bench.json");
    m.write(out);
  }
  emit(j, as_json, [&] {
    Table t({"block", "nodes", "pass", "median ms", "IQR ms", "GFLOP", "GFLOP/s"});
    for (const auto& b : runs) {
      auto add = [&](const char* pass, const TimingStats& s, double fl) {
        t.row({b.block, std::to_string(b.n_nodes), pass, fixed(s.median_ms), fixed(s.iqr_ms()), fixed(fl / 1e9, 4),
               fixed(fl / 1e9 / (s.median_ms / 1e3), 2)});
      };
      add("fwd", b.forward, b.flops);
      if (b.with_backward) add("fwd+bwd", b.forward_backward, 3 * b.flops);
    }
    t.print(std::cout);
    std::cout << "\nwarmup " << bo.warmup << ", measured " << bo.iters << " iterations; backward FLOPs estimated as 2x forward\n";
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPTrans: graph propagation transformer (training, evaluation and diagnostics)"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  const std::vector<std::string> args(argv, argv + argc);

  bool as_json = false;
  std::uint64_t seed = 0;
  std::string out, data;
  app.add_flag("--json", as_json, "Print JSON instead of a table");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset plus vocab.json");
  SynthOptions so;
  std::string synth_task = "spd-regression";
  synth->add_option("--task", synth_task, "Generator")
      ->check(CLI::IsMember({"spd-regression", "degree-class", "cluster-like", "tsp-like"}))
      ->capture_default_str();
  synth->add_option("--n-graphs", so.n_graphs, "Number of graphs")->capture_default_str();
  synth->add_option("--min-nodes", so.min_nodes, "Smallest graph")->capture_default_str();
  synth->add_option("--max-nodes", so.max_nodes, "Largest graph")->capture_default_str();
  synth->add_option("--extra-edge-prob", so.extra_edge_prob, "Chord probability on top of the spanning tree")->capture_default_str();
  synth->add_option("--clusters", so.clusters, "Communities (cluster-like)")->capture_default_str();
  synth->add_option("--knn", so.knn, "Candidate neighbours (tsp-like)")->capture_default_str();
  synth->add_option("--seed", seed, "Random seed")->capture_default_str();
  synth->add_option("--out", out, "Output directory")->required();

  // scan
  auto* scan = app.add_subcommand("scan", "Summarize a JSONL dataset and derive vocab.json");
  scan->add_option("--data", data, "Graph JSONL file")->required();
  scan->add_option("--out", out, "Output directory for vocab.json, stats.json and manifest.json");

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  ModelFlags train_model;
  TrainFlags tf;
  std::string eval_data, vocab_spec;
  train_model.attach(train, true);
  tf.attach(train);
  train->add_option("--seed", seed, "Random seed")->capture_default_str();
  train->add_option("--data", data, "Training graphs (JSONL)")->required();
  train->add_option("--eval-data", eval_data, "Held-out graphs (JSONL)");
  train->add_option("--vocab", vocab_spec, "vocab.json path or preset name (default: vocab.json beside --data)");
  train->add_option("--out", out, "Run directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint, config_path;
  bool use_ema = false;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--config", config_path, "config.json (default: beside the checkpoint)");
  eval->add_option("--data", data, "Graphs (JSONL)")->required();
  eval->add_flag("--use-ema", use_ema, "Evaluate the EMA weights");
  eval->add_option("--out", out, "Directory for eval.json and manifest.json");

  // gradcheck
  auto* gcheck = app.add_subcommand("gradcheck", "Finite-difference check of every parameter tensor (double precision)");
  ModelFlags gc_model;
  gc_model.preset = "nano";
  gc_model.layers = 2;
  gc_model.attach(gcheck, false);
  GradcheckOptions gco;
  std::size_t gc_nodes = 3;
  gcheck->add_option("--nodes", gc_nodes, "Nodes in the probe graph")->capture_default_str();
  gcheck->add_option("--step", gco.step, "Central-difference step")->capture_default_str();
  gcheck->add_option("--tol", gco.tol, "Relative error tolerance")->capture_default_str();
  gcheck->add_option("--sample", gco.max_entries_per_param, "Entries checked per tensor (0 = all)")->capture_default_str();
  gcheck->add_option("--seed", seed, "Random seed")->capture_default_str();
  gcheck->add_option("--out", out, "Directory for gradcheck.json and manifest.json");

  // params
  auto* params = app.add_subcommand("params", "Parameter counts by group");
  ModelFlags p_model;
  p_model.attach(params, true);
  std::string p_vocab;
  params->add_option("--vocab", p_vocab, "vocab.json path or preset (zinc-like, pcqm4m-like)");
  params->add_option("--out", out, "Directory for params.json and manifest.json");

  // flops
  auto* flops = app.add_subcommand("flops", "Analytic FLOP estimate per graph");
  ModelFlags f_model;
  f_model.attach(flops, true);
  std::size_t f_nodes = 20;
  flops->add_option("--nodes", f_nodes, "Real nodes per graph")->capture_default_str();
  flops->add_option("--out", out, "Directory for flops.json and manifest.json");

  // bench
  auto* bench = app.add_subcommand("bench", "Time one block forward (and backward); --dual-ffn adds the baseline");
  ModelFlags b_model;
  b_model.preset = "small";
  b_model.attach(bench, false);
  BenchOptions bo;
  bench->add_option("--nodes", bo.n_nodes, "Real nodes")->capture_default_str();
  bench->add_option("--warmup", bo.warmup, "Warmup iterations (>= 10)")->capture_default_str();
  bench->add_option("--iters", bo.iters, "Measured iterations (>= 30)")->capture_default_str();
  bench->add_flag("--backward", bo.backward, "Also time forward+backward");
  bench->add_option("--seed", seed, "Random seed")->capture_default_str();
  bench->add_option("--out", out, "Directory for bench.json and manifest.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      so.task = parse_synth_task(synth_task);
      so.seed = seed;
      return cmd_synth(so, out, args, as_json);
    }
    if (*scan) return cmd_scan(data, out, args, as_json);
    if (*train) return cmd_train(train_model, tf, seed, data, eval_data, vocab_spec, out, args, as_json);
    if (*eval) return cmd_eval(checkpoint, config_path, data, use_ema, out, args, as_json);
    if (*gcheck) return cmd_gradcheck(gc_model, gc_nodes, seed, gco, out, args, as_json);
    if (*params) return cmd_params(p_model, p_vocab, out, args, as_json);
    if (*flops) return cmd_flops(f_model, f_nodes, out, args, as_json);
    if (*bench) {
      bo.seed = seed;
      return cmd_bench(b_model, bo, out, args, as_json);
    }
  } catch (const std::exception& e) {
    std::cerr << "gptrans: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
