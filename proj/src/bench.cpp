#include "kanlab/bench.hpp"

#include "kanlab/io.hpp"
#include "kanlab/tasks_fit.hpp"
#include "kanlab/tasks_pde.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

namespace kanlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_fit_task(const std::string& task) {
  const auto ids = fit_task_ids();
  return std::find(ids.begin(), ids.end(), task) != ids.end();
}

std::vector<int> arch_widths(const std::string& task, int depth, int width) {
  std::vector<int> w{task_input_dim(task)};
  for (int d = 0; d < depth; ++d) w.push_back(width);
  w.push_back(1);
  return w;
}

template <typename T>
void require_non_empty(const std::vector<T>& v, const char* what) {
  if (v.empty()) fail(Errc::invalid_config, std::string("grid config needs at least one entry in ") + what);
}

bool has_power_law(const GridSearchConfig& c) {
  return std::find(c.schemes.begin(), c.schemes.end(), "power-law") != c.schemes.end();
}

std::size_t other_scheme_count(const GridSearchConfig& c) {
  return c.schemes.size() - (has_power_law(c) ? 1 : 0);
}

std::string optional_number(double v) { return std::isnan(v) ? std::string() : format_double(v); }
double parse_optional(const std::string& s) { return s.empty() ? kNaN : parse_double(s); }

using SettingKey = std::tuple<std::string, int, int, int>;
SettingKey setting_of(const MedianRow& m) { return {m.task, m.depth, m.width, m.grid}; }

// NaN sorts after every number.
bool nan_last_less(double a, double b) {
  if (std::isnan(a)) return false;
  if (std::isnan(b)) return true;
  return a < b;
}

}  // namespace

void GridSearchConfig::validate() const {
  require_non_empty(tasks, "tasks");
  require_non_empty(depths, "depths");
  require_non_empty(widths, "widths");
  require_non_empty(grids, "grids");
  require_non_empty(schemes, "schemes");
  for (const auto& t : tasks) task_input_dim(t);
  for (int d : depths) {
    if (d < 1) fail(Errc::invalid_config, "depths must be at least 1");
  }
  for (int w : widths) {
    if (w < 1) fail(Errc::invalid_config, "widths must be positive");
  }
  for (int g : grids) {
    if (g < 1) fail(Errc::invalid_config, "grid sizes must be positive");
  }
  std::set<std::string> names;
  for (const auto& s : schemes) {
    parse_scheme(s);
    if (!names.insert(s).second) fail(Errc::invalid_config, "scheme '" + s + "' listed twice");
  }
  auto distinct = [](const std::vector<std::uint64_t>& seeds, const char* what) {
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
      fail(Errc::invalid_config, std::string(what) + " must be distinct");
    }
  };
  if (other_scheme_count(*this) > 0) require_non_empty(seeds, "seeds");
  distinct(seeds, "seeds");
  if (has_power_law(*this)) {
    require_non_empty(alphas, "alphas");
    require_non_empty(betas, "betas");
    require_non_empty(power_law_seeds, "power_law_seeds");
    distinct(power_law_seeds, "power_law_seeds");
  }
  if (epochs < 0) fail(Errc::invalid_config, "epochs must be non-negative");
  if (spline_order < 0) fail(Errc::invalid_config, "spline order must be non-negative");
  if (!(lr > 0.0)) fail(Errc::invalid_config, "learning rate must be positive");
}

int task_input_dim(const std::string& task) {
  if (is_fit_task(task)) return make_fit_task(task).input_dim;
  try {
    parse_pde(task);
  } catch (const Error&) {
    fail(Errc::unknown_id, "unknown task '" + task + "'");
  }
  return 2;
}

std::vector<RunSpec> expand_runs(const GridSearchConfig& c) {
  c.validate();
  std::vector<RunSpec> out;
  out.reserve(predicted_row_count(c));
  for (const auto& task : c.tasks) {
    for (int depth : c.depths) {
      for (int width : c.widths) {
        for (int grid : c.grids) {
          auto add = [&](const InitScheme& scheme, std::uint64_t seed) {
            out.push_back(RunSpec{task, arch_widths(task, depth, width), grid, c.spline_order, scheme, seed, c.epochs});
          };
          for (const auto& name : c.schemes) {
            if (name == "power-law") {
              for (double a : c.alphas) {
                for (double b : c.betas) {
                  for (auto seed : c.power_law_seeds) add(PowerLaw{a, b}, seed);
                }
              }
            } else {
              for (auto seed : c.seeds) add(parse_scheme(name), seed);
            }
          }
        }
      }
    }
  }
  return out;
}

std::size_t predicted_row_count(const GridSearchConfig& c) {
  const std::size_t settings = c.tasks.size() * c.depths.size() * c.widths.size() * c.grids.size();
  std::size_t per_setting = other_scheme_count(c) * c.seeds.size();
  if (has_power_law(c)) per_setting += c.alphas.size() * c.betas.size() * c.power_law_seeds.size();
  return settings * per_setting;
}

ResultRow make_row(const RunSpec& spec, const TrainRecord& record) {
  ResultRow row;
  row.task = spec.task;
  row.depth = static_cast<int>(spec.widths.size()) - 2;
  row.width = spec.widths.size() > 2 ? spec.widths[1] : 0;
  row.grid = spec.grid;
  row.scheme = scheme_name(spec.scheme);
  row.alpha = kNaN;
  row.beta = kNaN;
  if (const auto* p = std::get_if<PowerLaw>(&spec.scheme)) {
    row.alpha = p->alpha;
    row.beta = p->beta;
  }
  row.seed = spec.seed;
  row.final_loss = record.final_loss;
  row.rel_l2 = record.rel_l2;
  row.diverged = record.diverged;
  row.wall_time_s = record.wall_time_s;
  return row;
}

RunSpec row_spec(const ResultRow& row, int epochs, int spline_order) {
  RunSpec spec;
  spec.task = row.task;
  spec.widths = arch_widths(row.task, row.depth, row.width);
  spec.grid = row.grid;
  spec.spline_order = spline_order;
  spec.scheme = parse_scheme(row.scheme, row.alpha, row.beta);
  spec.seed = row.seed;
  spec.epochs = epochs;
  return spec;
}

std::string format_row(const ResultRow& r) {
  std::string s = r.task + ',' + std::to_string(r.depth) + ',' + std::to_string(r.width) + ',' + std::to_string(r.grid) +
                  ',' + r.scheme + ',' + optional_number(r.alpha) + ',' + optional_number(r.beta) + ',' +
                  std::to_string(r.seed) + ',' + format_double(r.final_loss) + ',' + format_double(r.rel_l2) + ',' +
                  (r.diverged ? "1" : "0") + ',' + format_double(r.wall_time_s);
  return s;
}

ResultRow parse_row(const std::string& line) {
  const auto cells = split_csv(line);
  if (cells.size() != 12) fail(Errc::malformed_file, "results row needs 12 cells: '" + line + "'");
  auto to_int = [&](const std::string& c) {
    const double v = parse_double(c);
    if (v != std::floor(v)) fail(Errc::malformed_file, "'" + c + "' is not an integer");
    return static_cast<int>(v);
  };
  ResultRow r;
  r.task = cells[0];
  r.depth = to_int(cells[1]);
  r.width = to_int(cells[2]);
  r.grid = to_int(cells[3]);
  r.scheme = cells[4];
  r.alpha = parse_optional(cells[5]);
  r.beta = parse_optional(cells[6]);
  try {
    std::size_t used = 0;
    r.seed = std::stoull(cells[7], &used);
    if (used != cells[7].size()) throw std::invalid_argument("seed");
  } catch (const std::logic_error&) {
    fail(Errc::malformed_file, "'" + cells[7] + "' is not a seed");
  }
  r.final_loss = parse_double(cells[8]);
  r.rel_l2 = parse_double(cells[9]);
  if (cells[10] != "0" && cells[10] != "1") fail(Errc::malformed_file, "diverged must be 0 or 1");
  r.diverged = cells[10] == "1";
  r.wall_time_s = parse_double(cells[11]);
  return r;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) fail(Errc::file_not_found, "cannot write '" + path + "'");
  out << kResultsHeader << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::file_not_found, "cannot open '" + path + "'");
  std::vector<ResultRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      if (line != kResultsHeader) fail(Errc::malformed_file, path + ": unexpected results header");
      header = false;
      continue;
    }
    rows.push_back(parse_row(line));
  }
  if (header) fail(Errc::malformed_file, path + ": missing results header");
  return rows;
}

TrainRecord run_any(const RunSpec& spec, double lr) {
  if (is_fit_task(spec.task)) {
    TrainOptions opt;
    opt.lr = lr;
    return run_fit(spec, {}, opt);
  }
  PdeTrainOptions opt;
  opt.lr = lr;
  return run_pde(spec, {}, opt).record;
}

int default_thread_count() {
  if (const char* env = std::getenv("KANLAB_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
    fail(Errc::invalid_config, std::string("KANLAB_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<ResultRow> run_grid(const GridSearchConfig& config, const std::string& results_path,
                                const GridOptions& options) {
  const auto specs = expand_runs(config);
  std::vector<ResultRow> rows;
  const bool exists = std::filesystem::exists(results_path) && std::filesystem::file_size(results_path) > 0;
  if (exists) rows = read_results_csv(results_path);

  std::set<std::string> done;
  for (const auto& r : rows) done.insert(fingerprint(row_spec(r, config.epochs, config.spline_order)));
  std::vector<const RunSpec*> todo;
  for (const auto& s : specs) {
    if (!done.count(fingerprint(s))) todo.push_back(&s);
  }

  const auto parent = std::filesystem::path(results_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(results_path, std::ios::app);
  if (!out) fail(Errc::file_not_found, "cannot write '" + results_path + "'");
  if (!exists) out << kResultsHeader << '\n' << std::flush;

  const auto runner = options.runner ? options.runner : [&](const RunSpec& s) { return run_any(s, config.lr); };
  const int threads = std::max(1, std::min<int>(options.threads > 0 ? options.threads : default_thread_count(),
                                                static_cast<int>(std::max<std::size_t>(todo.size(), 1))));
  std::atomic<std::size_t> next{0};
  std::mutex write_mutex;
  std::size_t finished = specs.size() - todo.size();
  std::exception_ptr first_error;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      {
        std::lock_guard lock(write_mutex);
        if (first_error) return;
      }
      try {
        const TrainRecord rec = runner(*todo[i]);
        const ResultRow row = make_row(*todo[i], rec);
        std::lock_guard lock(write_mutex);
        out << format_row(row) << '\n' << std::flush;
        rows.push_back(row);
        ++finished;
        if (options.on_row) options.on_row(row, finished, specs.size());
      } catch (...) {
        std::lock_guard lock(write_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
  return rows;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) fail(Errc::incomplete_seed_set, "median of an empty set");
  std::sort(values.begin(), values.end(), nan_last_less);
  return values[(values.size() - 1) / 2];
}

std::vector<MedianRow> aggregate_median(const std::vector<ResultRow>& rows,
                                        const std::function<std::size_t(const ResultRow&)>& expected_seeds) {
  using Key = std::tuple<std::string, int, int, int, std::string, double, double>;
  // NaN alpha/beta never compare equal, so key on their text.
  std::map<std::tuple<std::string, int, int, int, std::string, std::string, std::string>, std::vector<const ResultRow*>>
      groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    auto& g = groups[{r.task, r.depth, r.width, r.grid, r.scheme, optional_number(r.alpha), optional_number(r.beta)}];
    g.push_back(&r);
  }
  std::vector<MedianRow> out;
  for (const auto& [key, members] : groups) {
    const ResultRow& first = *members.front();
    std::set<std::uint64_t> seeds;
    for (const auto* m : members) seeds.insert(m->seed);
    const std::size_t want = expected_seeds(first);
    if (seeds.size() != members.size() || seeds.size() != want) {
      fail(Errc::incomplete_seed_set, first.task + " depth " + std::to_string(first.depth) + " width " +
                                          std::to_string(first.width) + " G " + std::to_string(first.grid) + " " +
                                          first.scheme + ": " + std::to_string(members.size()) + " rows for " +
                                          std::to_string(want) + " seeds");
    }
    MedianRow m;
    m.task = first.task;
    m.depth = first.depth;
    m.width = first.width;
    m.grid = first.grid;
    m.scheme = first.scheme;
    m.alpha = first.alpha;
    m.beta = first.beta;
    m.seeds = static_cast<int>(members.size());
    std::vector<double> loss, l2;
    for (const auto* r : members) {
      loss.push_back(r->final_loss);
      l2.push_back(r->rel_l2);
    }
    m.final_loss = lower_median(loss);
    m.rel_l2 = lower_median(l2);
    out.push_back(m);
  }
  return out;
}

std::vector<MedianRow> aggregate_median(const std::vector<ResultRow>& rows, const GridSearchConfig& config) {
  return aggregate_median(rows, [&](const ResultRow& r) {
    return r.scheme == "power-law" ? config.power_law_seeds.size() : config.seeds.size();
  });
}

std::vector<MedianRow> best_power_law(const std::vector<MedianRow>& medians) {
  std::map<SettingKey, MedianRow> best;
  auto better = [](const MedianRow& a, const MedianRow& b) {
    if (a.final_loss != b.final_loss) return nan_last_less(a.final_loss, b.final_loss);
    if (a.rel_l2 != b.rel_l2) return nan_last_less(a.rel_l2, b.rel_l2);
    return std::pair{a.alpha, a.beta} < std::pair{b.alpha, b.beta};
  };
  for (const auto& m : medians) {
    if (m.scheme != "power-law") continue;
    auto it = best.find(setting_of(m));
    if (it == best.end()) {
      best.emplace(setting_of(m), m);
    } else if (better(m, it->second)) {
      it->second = m;
    }
  }
  std::vector<MedianRow> out;
  for (auto& [key, m] : best) out.push_back(m);
  return out;
}

std::vector<ComparisonRow> compare_vs_baseline(const std::vector<MedianRow>& medians) {
  std::map<SettingKey, const MedianRow*> baseline;
  std::vector<MedianRow> candidates;
  for (const auto& m : medians) {
    if (m.scheme == "baseline") {
      baseline[setting_of(m)] = &m;
    } else if (m.scheme != "power-law") {
      candidates.push_back(m);
    }
  }
  for (auto& m : best_power_law(medians)) candidates.push_back(m);

  std::map<std::pair<std::string, std::string>, std::array<int, 4>> tally;  // settings, loss, l2, both
  for (const auto& m : candidates) {
    const auto it = baseline.find(setting_of(m));
    if (it == baseline.end()) {
      fail(Errc::missing_baseline, "no baseline for " + m.task + " depth " + std::to_string(m.depth) + " width " +
                                       std::to_string(m.width) + " G " + std::to_string(m.grid));
    }
    const bool loss = m.final_loss < it->second->final_loss;
    const bool l2 = m.rel_l2 < it->second->rel_l2;
    auto& t = tally[{m.task, m.scheme}];
    t[0] += 1;
    t[1] += loss;
    t[2] += l2;
    t[3] += loss && l2;
  }
  std::vector<ComparisonRow> out;
  for (const auto& [key, t] : tally) {
    ComparisonRow c;
    c.task = key.first;
    c.scheme = key.second;
    c.settings = t[0];
    c.loss_pct = 100.0 * t[1] / t[0];
    c.l2_pct = 100.0 * t[2] / t[0];
    c.both_pct = 100.0 * t[3] / t[0];
    out.push_back(c);
  }
  return out;
}

void write_medians_csv(const std::string& path, const std::vector<MedianRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(Errc::file_not_found, "cannot write '" + path + "'");
  out << "task,depth,width,G,scheme,alpha,beta,seeds,median_final_loss,median_rel_l2\n";
  for (const auto& m : rows) {
    out << m.task << ',' << m.depth << ',' << m.width << ',' << m.grid << ',' << m.scheme << ','
        << optional_number(m.alpha) << ',' << optional_number(m.beta) << ',' << m.seeds << ','
        << format_double(m.final_loss) << ',' << format_double(m.rel_l2) << '\n';
  }
}

void write_comparison_csv(const std::string& path, const std::vector<ComparisonRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(Errc::file_not_found, "cannot write '" + path + "'");
  out << "task,scheme,settings,loss_pct,l2_pct,both_pct\n";
  for (const auto& c : rows) {
    out << c.task << ',' << c.scheme << ',' << c.settings << ',' << format_double(c.loss_pct) << ','
        << format_double(c.l2_pct) << ',' << format_double(c.both_pct) << '\n';
  }
}

}  // namespace kanlab
