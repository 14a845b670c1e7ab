#include "kanlab/cli.hpp"

#include "kanlab/bench.hpp"
#include "kanlab/init.hpp"
#include "kanlab/io.hpp"
#include "kanlab/ntk.hpp"
#include "kanlab/tasks_fit.hpp"
#include "kanlab/tasks_pde.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <set>

namespace kanlab {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t") - a + 1);
}

std::vector<std::string> split_list(const std::string& text, const std::string& what) {
  std::vector<std::string> out;
  for (const auto& cell : split_csv(text)) {
    const auto item = trim(cell);
    if (item.empty()) throw UsageError("empty entry in --" + what + " '" + text + "'");
    out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& what) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw UsageError("--" + what + ": '" + s + "' is not a number");
  return v;
}

template <typename T>
std::vector<T> number_list(const std::string& text, const std::string& what) {
  std::vector<T> out;
  for (const auto& item : split_list(text, what)) out.push_back(parse_number<T>(item, what));
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& i : items) s += (s.empty() ? "" : ",") + i;
  return s;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

// Section of the config file read by each subcommand.
std::string section_of(const std::string& sub) {
  if (sub == "grid") return "grid";
  if (sub == "init-report") return "init";
  return "run";
}

// Expands --config FILE into flags placed before the command line's own, so
// explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& app) {
  if (args.size() < 2) return args;
  const std::string sub = args[1];
  const CLI::App* cmd = nullptr;
  try {
    cmd = app.get_subcommand(sub);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::optional<std::string> path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;

  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(*path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError("config: " + std::string(e.what()));
  }
  std::vector<std::string> injected;
  const std::set<std::string> sections{"run", "grid", "init"};
  for (const auto& [name, section] : tree) {
    if (section.empty()) throw UsageError("config: key '" + name + "' outside a section");
    if (!sections.count(name)) throw UsageError("config: unknown section [" + name + "]");
    if (name != section_of(sub)) continue;
    for (const auto& [key, value] : section) {
      if (key == "config" || cmd->get_option_no_throw("--" + key) == nullptr) {
        throw UsageError("config: unknown key '" + key + "' in [" + name + "]");
      }
      injected.push_back("--" + key);
      injected.push_back(value.get_value<std::string>());
    }
  }
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

struct RunArgs {
  std::string config;
  std::string task;
  int depth = 2;
  int width = 8;
  int grid = 5;
  int k = 3;
  std::string init = "baseline";
  std::optional<double> alpha;
  std::optional<double> beta;
  int epochs = 2000;
  std::string seeds = "0";
  double lr = 1e-3;
  std::string out = "runs";
  std::string reference;
};

void add_run_options(CLI::App* cmd, RunArgs& a, const char* task_flag, const char* task_help) {
  cmd->add_option("--config", a.config, "INI file with a [run] section");
  cmd->add_option(task_flag, a.task, task_help)->required();
  cmd->add_option("--depth", a.depth, "hidden layers")->capture_default_str();
  cmd->add_option("--width", a.width, "hidden width")->capture_default_str();
  cmd->add_option("--grid", a.grid, "grid intervals G")->capture_default_str();
  cmd->add_option("--k", a.k, "spline order")->capture_default_str();
  cmd->add_option("--init", a.init, "baseline, lecun-numerical, lecun-normalized, glorot or power-law")
      ->capture_default_str();
  cmd->add_option("--alpha", a.alpha, "power-law residual exponent");
  cmd->add_option("--beta", a.beta, "power-law basis exponent");
  cmd->add_option("--epochs", a.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--seeds", a.seeds, "comma-separated seeds")->capture_default_str();
  cmd->add_option("--lr", a.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--out", a.out, "output directory")->capture_default_str();
}

std::vector<RunSpec> run_specs(const RunArgs& a) {
  if (a.depth < 1 || a.width < 1) throw UsageError("--depth and --width must be at least 1");
  if (a.grid < 1) throw UsageError("--grid must be at least 1");
  if (a.k < 0) throw UsageError("--k must be non-negative");
  if (a.epochs < 0) throw UsageError("--epochs must be non-negative");
  if (!(a.lr > 0.0)) throw UsageError("--lr must be positive");
  if (a.init == "power-law" && (!a.alpha || !a.beta)) throw UsageError("power-law needs --alpha and --beta");
  if (a.init != "power-law" && (a.alpha || a.beta)) throw UsageError("--alpha/--beta only apply to power-law");
  const InitScheme scheme = parse_scheme(a.init, a.alpha.value_or(0.0), a.beta.value_or(0.0));
  std::vector<int> widths{task_input_dim(a.task)};
  widths.insert(widths.end(), a.depth, a.width);
  widths.push_back(1);
  const auto seeds = number_list<std::uint64_t>(a.seeds, "seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw UsageError("--seeds must be distinct");
  }
  std::vector<RunSpec> specs;
  for (auto seed : seeds) specs.push_back(RunSpec{a.task, widths, a.grid, a.k, scheme, seed, a.epochs});
  return specs;
}

std::string specs_fingerprint(const std::vector<RunSpec>& specs) {
  std::string text;
  for (const auto& s : specs) text += canonical_string(s) + '\n';
  return fnv1a_hex(text);
}

void report(std::ostream& out, const TrainRecord& rec) {
  out << rec.fingerprint << "  " << rec.spec.task << " seed=" << rec.spec.seed
      << " initial_loss=" << sci(rec.initial_loss) << " final_loss=" << sci(rec.final_loss)
      << " rel_l2=" << sci(rec.rel_l2) << (rec.diverged ? " diverged" : "") << '\n';
}

void emit_record(const std::string& dir, const TrainRecord& rec) {
  write_record_json(artifact_path(dir, "record", rec.fingerprint, ".json"), rec);
  write_loss_csv(artifact_path(dir, "loss", rec.fingerprint, ".csv"), rec);
}

void emit_results(std::ostream& out, const std::string& dir, const std::vector<RunSpec>& specs,
                  const std::vector<TrainRecord>& records) {
  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < specs.size(); ++i) rows.push_back(make_row(specs[i], records[i]));
  const auto path = artifact_path(dir, "results", specs_fingerprint(specs), ".csv");
  write_results_csv(path, rows);
  out << "results: " << path << '\n';
}

void check_fit_id(const std::string& id, bool feynman) {
  const auto ids = feynman ? feynman_task_ids() : fit_task_ids();
  const bool known = contains(ids, id) && (feynman || !contains(feynman_task_ids(), id));
  if (!known) throw UsageError(std::string(feynman ? "--formula" : "--function") + ": unknown id '" + id + "'");
}

int cmd_fit(const RunArgs& a, bool feynman, std::ostream& out) {
  check_fit_id(a.task, feynman);
  const auto specs = run_specs(a);
  std::vector<TrainRecord> records;
  for (const auto& spec : specs) {
    std::optional<KanNetwork> final_net;
    TrainOptions opt;
    opt.lr = a.lr;
    opt.on_epoch = [&](int epoch, const KanNetwork& net) {
      if (epoch == spec.epochs) final_net = net;
    };
    records.push_back(run_fit(spec, {}, opt));
    const auto& rec = records.back();
    emit_record(a.out, rec);
    if (final_net) save_checkpoint(artifact_path(a.out, "checkpoint", rec.fingerprint, ".json"), *final_net, spec);
    report(out, rec);
  }
  emit_results(out, a.out, specs, records);
  return 0;
}

int cmd_pde(const RunArgs& a, std::ostream& out) {
  parse_pde(a.task);
  const auto specs = run_specs(a);
  std::optional<ReferenceGrid> reference;
  if (!a.reference.empty()) reference = load_reference_solution(a.reference);
  std::vector<TrainRecord> records;
  for (const auto& spec : specs) {
    std::optional<KanNetwork> final_net;
    PdeTrainOptions opt;
    opt.lr = a.lr;
    opt.reference = reference;
    opt.on_epoch = [&](int epoch, const KanNetwork& net, const RbaState&) {
      if (epoch == spec.epochs) final_net = net;
    };
    const auto res = run_pde(spec, {}, opt);
    records.push_back(res.record);
    emit_record(a.out, res.record);
    if (final_net) {
      save_checkpoint(artifact_path(a.out, "checkpoint", res.record.fingerprint, ".json"), *final_net, spec);
    }
    report(out, res.record);
    out << "  rba_alpha_range=[" << sci(res.min_alpha) << ", " << sci(res.max_alpha) << "]\n";
  }
  emit_results(out, a.out, specs, records);
  return 0;
}

int cmd_ntk(const RunArgs& a, std::ostream& out) {
  task_input_dim(a.task);
  const auto specs = run_specs(a);
  std::vector<TrainRecord> records;
  for (const auto& spec : specs) {
    const auto res = run_ntk(spec, {}, a.lr);
    records.push_back(res.record);
    emit_record(a.out, res.record);
    const auto path = artifact_path(a.out, "spectrum", res.record.fingerprint, ".csv");
    write_spectrum_csv(path, res.spectra);
    report(out, res.record);
    out << "  spectrum: " << path << '\n';
  }
  emit_results(out, a.out, specs, records);
  return 0;
}

struct GridArgs {
  std::string config;
  std::string tasks;
  std::string depths = "1,2,3,4";
  std::string widths = "2,4,8,16,32,64";
  std::string grids = "5,10,20,40";
  std::string schemes = "baseline,lecun-numerical,lecun-normalized,glorot,power-law";
  std::string alphas = "0,0.25,0.5,0.75,1,1.25,1.5,1.75,2";
  std::string betas = "0,0.25,0.5,0.75,1,1.25,1.5,1.75,2";
  std::string seeds = "0,1,2,3,4";
  std::string power_law_seeds = "0,1,2";
  int epochs = 2000;
  int k = 3;
  double lr = 1e-3;
  int threads = 0;
  std::string out = "runs";
};

std::string config_text(const GridSearchConfig& c) {
  auto nums = [](const auto& v) {
    std::string s;
    for (const auto& x : v) {
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(x)>>) {
        s += (s.empty() ? "" : ",") + format_double(x);
      } else {
        s += (s.empty() ? "" : ",") + std::to_string(x);
      }
    }
    return s;
  };
  return "tasks=" + join(c.tasks) + ";depths=" + nums(c.depths) + ";widths=" + nums(c.widths) +
         ";G=" + nums(c.grids) + ";schemes=" + join(c.schemes) + ";alphas=" + nums(c.alphas) +
         ";betas=" + nums(c.betas) + ";seeds=" + nums(c.seeds) + ";power_law_seeds=" + nums(c.power_law_seeds) +
         ";epochs=" + std::to_string(c.epochs) + ";k=" + std::to_string(c.spline_order) + ";lr=" + format_double(c.lr);
}

int cmd_grid(const GridArgs& a, std::ostream& out) {
  GridSearchConfig c;
  c.tasks = split_list(a.tasks, "tasks");
  c.depths = number_list<int>(a.depths, "depths");
  c.widths = number_list<int>(a.widths, "widths");
  c.grids = number_list<int>(a.grids, "grids");
  c.schemes = split_list(a.schemes, "schemes");
  const bool power_law = contains(c.schemes, "power-law");
  if (power_law) {
    c.alphas = number_list<double>(a.alphas, "alphas");
    c.betas = number_list<double>(a.betas, "betas");
    c.power_law_seeds = number_list<std::uint64_t>(a.power_law_seeds, "power-law-seeds");
  }
  if (!power_law || c.schemes.size() > 1) c.seeds = number_list<std::uint64_t>(a.seeds, "seeds");
  c.epochs = a.epochs;
  c.spline_order = a.k;
  c.lr = a.lr;
  if (a.threads < 0) throw UsageError("--threads must be non-negative");
  c.validate();

  const std::string fp = fnv1a_hex(config_text(c));
  const auto results = artifact_path(a.out, "results", fp, ".csv");
  out << "grid " << fp << ": " << predicted_row_count(c) << " runs -> " << results << '\n';
  GridOptions opt;
  opt.threads = a.threads;
  opt.on_row = [&](const ResultRow& r, std::size_t done, std::size_t total) {
    out << '[' << done << '/' << total << "] " << r.task << " depth=" << r.depth << " width=" << r.width
        << " G=" << r.grid << ' ' << r.scheme;
    if (r.scheme == "power-law") out << '(' << r.alpha << ',' << r.beta << ')';
    out << " seed=" << r.seed << " final_loss=" << sci(r.final_loss) << (r.diverged ? " diverged" : "") << '\n';
  };
  const auto rows = run_grid(c, results, opt);

  const auto medians = aggregate_median(rows, c);
  const auto median_path = artifact_path(a.out, "medians", fp, ".csv");
  write_medians_csv(median_path, medians);
  out << "medians: " << median_path << '\n';
  if (contains(c.schemes, "baseline") && c.schemes.size() > 1) {
    const auto table = compare_vs_baseline(medians);
    const auto cmp_path = artifact_path(a.out, "comparison", fp, ".csv");
    write_comparison_csv(cmp_path, table);
    out << "comparison: " << cmp_path << '\n';
    for (const auto& t : table) {
      out << "  " << t.task << ' ' << t.scheme << ": loss " << t.loss_pct << "%, l2 " << t.l2_pct << "%, both "
          << t.both_pct << "% of " << t.settings << " settings\n";
    }
  }
  return 0;
}

struct InitArgs {
  std::string config;
  int n_in = 2;
  int n_out = 8;
  int grid = 5;
  int k = 3;
  std::string scheme = "baseline";
  std::optional<double> alpha;
  std::optional<double> beta;
  int samples = kDefaultMomentSamples;
  std::uint64_t seed = 0;
  double input_lo = -1.0;
  double input_hi = 1.0;
};

int cmd_init_report(const InitArgs& a, std::ostream& out) {
  if (a.n_in < 1 || a.n_out < 1) throw UsageError("--n-in and --n-out must be at least 1");
  if (a.scheme == "power-law" && (!a.alpha || !a.beta)) throw UsageError("power-law needs --alpha and --beta");
  if (!(a.input_lo < a.input_hi)) throw UsageError("--input-lo must be below --input-hi");
  const InitScheme scheme = parse_scheme(a.scheme, a.alpha.value_or(0.0), a.beta.value_or(0.0));
  const std::vector<int> widths{a.n_in, a.n_out};
  KanNetwork net = make_network(widths, a.grid, a.k);
  InitOptions opt;
  opt.input = UniformInput{a.input_lo, a.input_hi};
  opt.moment_samples = a.samples;
  const auto m = layer_moments(net, opt.input, a.samples, moment_stream_seed(a.seed)).front();
  const auto s = initialize(net, scheme, a.seed, opt).front();
  out << "scheme = " << scheme_name(scheme) << '\n'
      << "n_in = " << a.n_in << "\nn_out = " << a.n_out << "\nG = " << a.grid << "\nk = " << a.k
      << "\nterms = " << basis_terms(net.layers.front()) << '\n'
      << "mu_r0 = " << sci(m.mu_r0) << "\nmu_r1 = " << sci(m.mu_r1) << "\nmu_b0 = " << sci(m.mu_b0)
      << "\nmu_b1 = " << sci(m.mu_b1) << '\n'
      << "sigma_r = " << sci(s.r) << "\nsigma_b = " << sci(s.b) << '\n';
  return 0;
}

}  // namespace

int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kolmogorov-Arnold network initialization benchmarks", "kanlab"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  RunArgs fit, feyn, pde, ntk;
  auto* fit_cmd = app.add_subcommand("fit", "train on a function-fitting target f1..f5");
  add_run_options(fit_cmd, fit, "--function", "f1..f5");
  auto* feyn_cmd = app.add_subcommand("feynman", "train on a Feynman formula");
  add_run_options(feyn_cmd, feyn, "--formula", "Feynman id, e.g. I.6.2");
  auto* pde_cmd = app.add_subcommand("pde", "physics-informed training with residual-based attention");
  pde.epochs = 5000;
  add_run_options(pde_cmd, pde, "--pde", "allen-cahn, burgers or helmholtz");
  pde_cmd->add_option("--reference", pde.reference, "reference solution CSV for rel_l2");
  auto* ntk_cmd = app.add_subcommand("ntk", "train and log kernel spectra");
  add_run_options(ntk_cmd, ntk, "--task", "fit id or PDE name");

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("grid", "resumable sweep with medians and baseline comparison");
  grid_cmd->add_option("--config", grid.config, "INI file with a [grid] section");
  grid_cmd->add_option("--tasks", grid.tasks, "comma-separated task ids")->required();
  grid_cmd->add_option("--depths", grid.depths)->capture_default_str();
  grid_cmd->add_option("--widths", grid.widths)->capture_default_str();
  grid_cmd->add_option("--grids", grid.grids)->capture_default_str();
  grid_cmd->add_option("--schemes", grid.schemes)->capture_default_str();
  grid_cmd->add_option("--alphas", grid.alphas)->capture_default_str();
  grid_cmd->add_option("--betas", grid.betas)->capture_default_str();
  grid_cmd->add_option("--seeds", grid.seeds)->capture_default_str();
  grid_cmd->add_option("--power-law-seeds", grid.power_law_seeds)->capture_default_str();
  grid_cmd->add_option("--epochs", grid.epochs)->capture_default_str();
  grid_cmd->add_option("--k", grid.k)->capture_default_str();
  grid_cmd->add_option("--lr", grid.lr)->capture_default_str();
  grid_cmd->add_option("--threads", grid.threads, "workers; 0 uses KANLAB_THREADS or all cores")
      ->capture_default_str();
  grid_cmd->add_option("--out", grid.out)->capture_default_str();

  InitArgs init;
  auto* init_cmd = app.add_subcommand("init-report", "print the moments and sigmas of one layer");
  init_cmd->add_option("--config", init.config, "INI file with an [init] section");
  init_cmd->add_option("--n-in", init.n_in)->capture_default_str();
  init_cmd->add_option("--n-out", init.n_out)->capture_default_str();
  init_cmd->add_option("--grid", init.grid)->capture_default_str();
  init_cmd->add_option("--k", init.k)->capture_default_str();
  init_cmd->add_option("--scheme", init.scheme)->capture_default_str();
  init_cmd->add_option("--alpha", init.alpha);
  init_cmd->add_option("--beta", init.beta);
  init_cmd->add_option("--samples", init.samples, "Monte-Carlo samples")->capture_default_str();
  init_cmd->add_option("--seed", init.seed)->capture_default_str();
  init_cmd->add_option("--input-lo", init.input_lo)->capture_default_str();
  init_cmd->add_option("--input-hi", init.input_hi)->capture_default_str();

  // Usage problems: bad flags, config files and values rejected before compute.
  std::function<int()> action;
  try {
    auto expanded = expand_config(args, app);
    std::vector<std::string> rev(expanded.rbegin(), expanded.rend() - 1);
    app.parse(std::move(rev));
    if (fit_cmd->parsed()) {
      check_fit_id(fit.task, false);
      run_specs(fit);
      action = [&] { return cmd_fit(fit, false, out); };
    } else if (feyn_cmd->parsed()) {
      check_fit_id(feyn.task, true);
      run_specs(feyn);
      action = [&] { return cmd_fit(feyn, true, out); };
    } else if (pde_cmd->parsed()) {
      parse_pde(pde.task);
      run_specs(pde);
      action = [&] { return cmd_pde(pde, out); };
    } else if (ntk_cmd->parsed()) {
      run_specs(ntk);
      action = [&] { return cmd_ntk(ntk, out); };
    } else if (grid_cmd->parsed()) {
      action = [&] { return cmd_grid(grid, out); };
    } else {
      action = [&] { return cmd_init_report(init, out); };
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    err << "kanlab: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "kanlab: " << e.what() << '\n';
    return 2;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    err << "kanlab: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    // Config validation inside a command is still a usage problem.
    err << "kanlab: " << e.what() << '\n';
    return e.code() == Errc::invalid_config || e.code() == Errc::unknown_id ? 2 : 1;
  } catch (const std::exception& e) {
    err << "kanlab: " << e.what() << '\n';
    return 1;
  }
}

int parse_and_dispatch(int argc, const char* const* argv) {
  return parse_and_dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace kanlab
