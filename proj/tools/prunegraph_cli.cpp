// prunegraph: analyze, prune, verify, zoo, sweep, report.
//
// Exit codes: 0 ok, 1 I/O failure, 2 invalid input or model, 3 constraint
// warning under --strict.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "prunegraph/builder.hpp"
#include "prunegraph/error.hpp"
#include "prunegraph/executor.hpp"
#include "prunegraph/io.hpp"
#include "prunegraph/plot.hpp"
#include "prunegraph/prune.hpp"
#include "prunegraph/train.hpp"
#include "prunegraph/validate.hpp"
#include "prunegraph/zoo.hpp"

namespace fs = std::filesystem;
using namespace prunegraph;

namespace {

constexpr int kOk = 0, kIo = 1, kInvalid = 2, kStrict = 3;

struct Config {
  std::string graph, weights, graph2, weights2;
  std::string mode = "component-aware";
  std::string norm = "l1";
  double sparsity = -1.0;
  std::vector<std::string> protect;
  std::vector<std::string> component_weight;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string dump_trace;
  bool strict = false;
  std::size_t inputs = 10;
  std::string levels = "0.05:0.80:0.05";
  std::string modes = "both";
  bool plot = false;
  std::string arch = "tdmpc_style";
  int epochs = 12;
  std::vector<std::string> names;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

Mode mode_of(const std::string& s) {
  auto m = parse_mode(s);
  if (!m) throw Error(ErrorKind::InvalidArgument, "unknown mode '" + s + "' (vanilla | component-aware)");
  return *m;
}

Norm norm_of(const std::string& s) {
  auto n = parse_norm(s);
  if (!n) throw Error(ErrorKind::InvalidArgument, "unknown norm '" + s + "' (l1 | l2)");
  return *n;
}

std::map<std::string, double> weight_overrides(const std::vector<std::string>& pairs) {
  std::map<std::string, double> out;
  for (const auto& p : pairs) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, "component weight '" + p + "' is not id=value");
    try {
      out[p.substr(0, eq)] = std::stod(p.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "component weight '" + p + "' has no numeric value");
    }
  }
  return out;
}

std::vector<double> parse_levels(const std::string& spec) {
  std::vector<double> out;
  auto num = [&](const std::string& s) {
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "bad level '" + s + "'");
    }
  };
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw Error(ErrorKind::InvalidArgument, "levels range must be lo:hi:step");
    const double lo = num(parts[0]), hi = num(parts[1]), step = num(parts[2]);
    if (step <= 0 || hi < lo) throw Error(ErrorKind::InvalidArgument, "empty levels range '" + spec + "'");
    const auto count = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (int i = 0; i < count; ++i) out.push_back(std::round((lo + i * step) * 1e9) / 1e9);
  } else {
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(num(p));
  }
  return out;
}

struct Loaded {
  ModelGraph graph;
  WeightStore weights;
  bool has_weights = false;
};

Loaded load_pair(const std::string& graph, const std::string& weights, bool need_weights) {
  Loaded l;
  l.graph = load_graph(graph);
  require_valid(l.graph);
  if (!weights.empty()) {
    l.weights = load_weights(l.graph, weights);
    l.has_weights = true;
  } else if (need_weights) {
    throw Error(ErrorKind::InvalidArgument, "--weights is required");
  } else {
    l.weights = random_weights(l.graph, 0);  // tracing only looks at shapes and firing
  }
  return l;
}

void print_groups(const Analysis& a) {
  std::printf("%-5s %-9s %-6s %-6s %s\n", "id", "kind", "size", "width", "layers");
  for (const auto& g : a.groups) {
    std::string layers;
    for (const auto& l : g.layers) layers += (layers.empty() ? "" : " ") + l;
    std::printf("%-5zu %-9s %-6zu %-6zu %s\n", g.id, to_string(g.kind), g.size(), g.width(), layers.c_str());
  }
  const auto s = group_stats(a.groups);
  std::printf("groups: %zu  mean size: %.2f  cross-component: %zu\n", s.groups, s.mean_size, s.cross);
}

int cmd_analyze(const Config& cfg) {
  const auto l = load_pair(cfg.graph, cfg.weights, false);
  const Mode mode = mode_of(cfg.mode);
  const auto traces = trace_all_branches(l.graph, l.weights, 2, cfg.seed);
  const auto matrix = refine_candidates(l.graph, traces);
  const auto interfaces = infer_interfaces(l.graph, matrix, traces);
  const Analysis a = analyze(l.graph, &interfaces, mode);
  print_groups(a);
  for (const auto& w : matrix.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  for (const auto& w : a.dep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const auto s = group_stats(a.groups);
  nlohmann::json report{{"mode", to_string(mode)},
                        {"groups", s.groups},
                        {"mean_size", s.mean_size},
                        {"cross", s.cross},
                        {"interfaces", interface_count(interfaces)},
                        {"group_list", groups_to_json(a.dep, a.groups)},
                        {"warnings", a.dep.warnings}};
  write_text(fs::path(cfg.out) / "analysis.json", report.dump(2) + "\n");
  if (!cfg.dump_trace.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : traces) arr.push_back(trace_to_json(l.graph, t));
    write_text(cfg.dump_trace, arr.dump(2) + "\n");
  }
  const bool warned = !matrix.warnings.empty() || !a.dep.warnings.empty();
  return cfg.strict && warned ? kStrict : kOk;
}

int cmd_prune(const Config& cfg) {
  if (cfg.sparsity < 0.0) throw Error(ErrorKind::InvalidArgument, "--sparsity is required");
  const auto l = load_pair(cfg.graph, cfg.weights, true);
  require_valid(l.graph, &l.weights);
  const Mode mode = mode_of(cfg.mode);
  const InterfaceMap interfaces = trace_interfaces(l.graph, l.weights, 2, cfg.seed);
  const Analysis a = analyze(l.graph, &interfaces, mode);
  const auto scores = score_groups(l.graph, l.weights, a, norm_of(cfg.norm), weight_overrides(cfg.component_weight));
  const std::set<std::string> protect(cfg.protect.begin(), cfg.protect.end());
  const auto plan = allocate(l.graph, a, scores, cfg.sparsity, protect);
  const auto result = apply_plan(l.graph, l.weights, a, plan);
  const fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  save_graph(result.graph, out / "pruned.json");
  save_weights(result.weights, out / "pruned.bin");
  const auto& r = result.report;
  write_text(out / "sparsity_report.json", to_json(r).dump(2) + "\n");
  std::printf("mode %s  target %.4f  achieved %.4f  classes removed %zu of %zu\n", to_string(mode), r.target,
              r.achieved, r.classes_removed, r.removable);
  std::printf("params %zu -> %zu  bytes %zu -> %zu\n", r.params_before, r.params_after, r.bytes_before, r.bytes_after);
  for (const auto& [id, before] : r.widths_before) {
    const auto& after = r.widths_after.at(id);
    std::printf("  %-16s %lld->%lld  =>  %lld->%lld\n", id.c_str(), static_cast<long long>(before.in),
                static_cast<long long>(before.out), static_cast<long long>(after.in),
                static_cast<long long>(after.out));
  }
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  for (const auto& w : a.dep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const bool warned = plan.unreachable || !a.dep.warnings.empty();
  return cfg.strict && warned ? kStrict : kOk;
}

int cmd_verify(const Config& cfg) {
  if (cfg.graph2.empty() || cfg.weights2.empty() || cfg.weights.empty())
    throw Error(ErrorKind::InvalidArgument, "verify needs --graph, --weights, --graph2 and --weights2");
  Loaded models[2];
  bool valid = true;
  const std::string* paths[2][2] = {{&cfg.graph, &cfg.weights}, {&cfg.graph2, &cfg.weights2}};
  for (int i = 0; i < 2; ++i) {
    models[i].graph = load_graph(*paths[i][0]);
    models[i].weights = read_weight_file(*paths[i][1]);
    const auto report = validate_graph(models[i].graph, &models[i].weights);
    std::printf("model %d: %s\n", i + 1, report.ok() ? "valid" : "INVALID");
    if (!report.ok()) {
      std::fprintf(stderr, "%s\n", report.summary().c_str());
      valid = false;
    }
  }
  if (!valid) return kInvalid;
  const auto inputs = random_inputs(models[0].graph, cfg.inputs, cfg.seed);
  const double d =
      functional_distance(models[0].graph, models[0].weights, models[1].graph, models[1].weights, inputs);
  std::printf("functional distance over %zu inputs: %.9g\n", cfg.inputs, d);
  return kOk;
}

int cmd_zoo(const Config& cfg) {
  const auto names = cfg.names.empty() ? zoo_names() : cfg.names;
  const fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  for (const auto& name : names) {
    const auto m = build_zoo_model(name, cfg.seed);
    save_graph(m.graph, out / (name + ".json"));
    save_weights(m.weights, out / (name + ".bin"));
    std::printf("%-12s %s\n", name.c_str(), component_dims(m.graph).c_str());
  }
  return kOk;
}

int cmd_sweep(const Config& cfg) {
  SweepOptions opts;
  opts.levels = parse_levels(cfg.levels);
  for (double lv : opts.levels)
    if (!(lv >= 0.0 && lv < 1.0)) throw Error(ErrorKind::InvalidArgument, "levels must lie in [0, 1)");
  if (cfg.modes == "both")
    opts.modes = {Mode::Vanilla, Mode::ComponentAware};
  else
    opts.modes = {mode_of(cfg.modes)};
  opts.norm = norm_of(cfg.norm);
  opts.protections = {cfg.protect.begin(), cfg.protect.end()};
  opts.weight_overrides = weight_overrides(cfg.component_weight);

  ModelGraph g;
  WeightStore w;
  TaskEval eval;
  std::string metric = "mse";
  if (!cfg.graph.empty()) {
    // The given model is its own frozen teacher.
    auto l = load_pair(cfg.graph, cfg.weights, true);
    g = std::move(l.graph);
    w = std::move(l.weights);
    Dataset data;
    data.inputs = random_inputs(g, 256, cfg.seed + 1);
    ExecOptions eo;
    eo.record = false;
    for (const auto& in : data.inputs) data.targets.push_back(concat_outputs(execute(g, w, in, eo).outputs));
    auto shared = std::make_shared<const Dataset>(std::move(data));
    eval = [shared](const ModelGraph& pg, const WeightStore& pw) { return dataset_loss(pg, pw, *shared); };
    metric = "mse vs unpruned";
  } else {
    auto task = toy_task(cfg.seed, cfg.arch);
    auto student = build_zoo_model(cfg.arch, cfg.seed + 1000);
    TrainOptions to;
    to.epochs = cfg.epochs;
    to.seed = cfg.seed;
    g = student.graph;
    w = train(g, student.weights, task.data, to).weights;
    eval = task.eval;
    metric = "mse vs teacher";
  }
  const auto points = sweep(g, w, eval, opts);
  const fs::path out(cfg.out);
  const auto csv = curve_csv(points);
  write_text(out / "sweep.csv", csv);
  write_text(out / "sweep.json", curve_json(points).dump(2) + "\n");
  if (cfg.plot) write_text(out / "sweep.svg", curve_svg(points, metric));
  std::fputs(csv.c_str(), stdout);
  return kOk;
}

int cmd_report(const Config& cfg) {
  const auto rows = report_metrics(cfg.names.empty() ? zoo_names() : cfg.names);
  const fs::path out(cfg.out);
  const auto md = metrics_markdown(rows);
  write_text(out / "metrics.csv", metrics_csv(rows));
  write_text(out / "metrics.md", md);
  std::fputs(md.c_str(), stdout);
  bool clean = true;
  for (const auto& r : rows)
    for (const auto& v : r.violations) {
      std::fprintf(stderr, "warning: %s: %s\n", r.model.c_str(), v.c_str());
      clean = false;
    }
  return cfg.strict && !clean ? kStrict : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Component-aware structured pruning over a neutral model IR"};
  app.require_subcommand(1);
  Config cfg;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Seed for all randomness")->capture_default_str();
    sub->add_option("--out", cfg.out, "Output directory")->capture_default_str();
    sub->add_flag("--strict", cfg.strict, "Exit 3 on constraint warnings");
  };
  auto pruning = [&](CLI::App* sub) {
    sub->add_option("--mode", cfg.mode, "vanilla | component-aware")->capture_default_str();
    sub->add_option("--norm", cfg.norm, "l1 | l2")->capture_default_str();
    sub->add_option("--protect", cfg.protect, "Components excluded from pruning")->delimiter(',');
    sub->add_option("--component-weight", cfg.component_weight, "Importance weight as id=value")->delimiter(',');
  };

  auto* analyze_cmd = app.add_subcommand("analyze", "Print pruning groups for one mode");
  analyze_cmd->add_option("--graph", cfg.graph)->required();
  analyze_cmd->add_option("--weights", cfg.weights);
  analyze_cmd->add_option("--dump-trace", cfg.dump_trace, "Write traced records as JSON");
  pruning(analyze_cmd);
  common(analyze_cmd);

  auto* prune_cmd = app.add_subcommand("prune", "Prune a model to a target sparsity");
  prune_cmd->add_option("--graph", cfg.graph)->required();
  prune_cmd->add_option("--weights", cfg.weights)->required();
  prune_cmd->add_option("--sparsity", cfg.sparsity, "Fraction of removable index classes in [0, 1)")->required();
  pruning(prune_cmd);
  common(prune_cmd);

  auto* verify_cmd = app.add_subcommand("verify", "Compare two models on seeded inputs");
  verify_cmd->add_option("--graph", cfg.graph)->required();
  verify_cmd->add_option("--weights", cfg.weights)->required();
  verify_cmd->add_option("--graph2", cfg.graph2)->required();
  verify_cmd->add_option("--weights2", cfg.weights2)->required();
  verify_cmd->add_option("--inputs", cfg.inputs)->capture_default_str();
  common(verify_cmd);

  auto* zoo_cmd = app.add_subcommand("zoo", "Write the benchmark models");
  zoo_cmd->add_option("--names", cfg.names)->delimiter(',');
  common(zoo_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "Metric and size across sparsity levels");
  sweep_cmd->add_option("--graph", cfg.graph, "Model to prune (its own teacher); default: trained toy student");
  sweep_cmd->add_option("--weights", cfg.weights);
  sweep_cmd->add_option("--levels", cfg.levels, "lo:hi:step or a comma list")->capture_default_str();
  sweep_cmd->add_option("--modes", cfg.modes, "both | vanilla | component-aware")->capture_default_str();
  sweep_cmd->add_option("--arch", cfg.arch, "Toy task architecture")->capture_default_str();
  sweep_cmd->add_option("--epochs", cfg.epochs, "Toy student training epochs")->capture_default_str();
  sweep_cmd->add_flag("--plot", cfg.plot, "Also write sweep.svg");
  pruning(sweep_cmd);
  common(sweep_cmd);

  auto* report_cmd = app.add_subcommand("report", "Grouping metrics table for the zoo");
  report_cmd->add_option("--names", cfg.names)->delimiter(',');
  common(report_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*analyze_cmd) return cmd_analyze(cfg);
    if (*prune_cmd) return cmd_prune(cfg);
    if (*verify_cmd) return cmd_verify(cfg);
    if (*zoo_cmd) return cmd_zoo(cfg);
    if (*sweep_cmd) return cmd_sweep(cfg);
    if (*report_cmd) return cmd_report(cfg);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return e.kind() == ErrorKind::Io ? kIo : kInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvalid;
  }
  return kOk;
}
