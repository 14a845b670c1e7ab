#include "kanlab/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace kanlab {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) fail(Errc::file_not_found, "cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::file_not_found, "cannot open '" + path + "'");
  return in;
}

// Non-empty lines with any trailing CR removed.
std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void expect_header(const std::vector<std::string>& lines, const std::string& header, const std::string& path) {
  if (lines.empty() || lines.front() != header) fail(Errc::malformed_file, path + ": expected header '" + header + "'");
}

long parse_int(const std::string& text) {
  long v = 0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) fail(Errc::malformed_file, "'" + text + "' is not an integer");
  return v;
}

// JSON has no NaN or infinity; those are stored as strings.
json number(double v) { return std::isfinite(v) ? json(v) : json(format_double(v)); }

json spec_json(const RunSpec& spec) {
  json j;
  j["task"] = spec.task;
  j["widths"] = spec.widths;
  j["grid"] = spec.grid;
  j["spline_order"] = spec.spline_order;
  j["scheme"] = scheme_name(spec.scheme);
  if (const auto* p = std::get_if<PowerLaw>(&spec.scheme)) {
    j["alpha"] = p->alpha;
    j["beta"] = p->beta;
  }
  j["seed"] = spec.seed;
  j["epochs"] = spec.epochs;
  return j;
}

RunSpec spec_from_json(const json& j) {
  RunSpec spec;
  spec.task = j.at("task").get<std::string>();
  spec.widths = j.at("widths").get<std::vector<int>>();
  spec.grid = j.at("grid").get<int>();
  spec.spline_order = j.at("spline_order").get<int>();
  spec.scheme = parse_scheme(j.at("scheme").get<std::string>(), j.value("alpha", 0.0), j.value("beta", 0.0));
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.epochs = j.at("epochs").get<int>();
  return spec;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    fail(Errc::malformed_file, "'" + text + "' is not a number");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

void write_loss_csv(const std::string& path, const TrainRecord& record) {
  std::ofstream out = open_out(path);
  out << "epoch,loss\n";
  out << "0," << format_double(record.initial_loss) << '\n';
  for (std::size_t e = 0; e < record.loss_history.size(); ++e) {
    out << e + 1 << ',' << format_double(record.loss_history[e]) << '\n';
  }
}

std::vector<double> read_loss_csv(const std::string& path) {
  const auto lines = read_lines(path);
  expect_header(lines, "epoch,loss", path);
  std::vector<double> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    if (cells.size() != 2 || parse_int(cells[0]) != static_cast<long>(i - 1)) {
      fail(Errc::malformed_file, path + ": bad row " + std::to_string(i + 1));
    }
    out.push_back(parse_double(cells[1]));
  }
  return out;
}

void write_spectrum_csv(const std::string& path, const std::vector<NtkSpectrum>& spectra) {
  std::ofstream out = open_out(path);
  out << "iteration,block_id,rank,eigenvalue\n";
  for (const auto& s : spectra) {
    for (std::size_t r = 0; r < s.eigenvalues.size(); ++r) {
      out << s.iteration << ',' << block_name(s.block) << ',' << r << ',' << format_double(s.eigenvalues[r]) << '\n';
    }
  }
}

std::vector<NtkSpectrum> read_spectrum_csv(const std::string& path) {
  const auto lines = read_lines(path);
  expect_header(lines, "iteration,block_id,rank,eigenvalue", path);
  std::vector<NtkSpectrum> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    if (cells.size() != 4) fail(Errc::malformed_file, path + ": bad row " + std::to_string(i + 1));
    const int iteration = static_cast<int>(parse_int(cells[0]));
    const NtkBlock block = parse_block(cells[1]);
    const long rank = parse_int(cells[2]);
    if (rank == 0) out.push_back(NtkSpectrum{iteration, block, {}});
    if (out.empty() || out.back().iteration != iteration || out.back().block != block ||
        static_cast<long>(out.back().eigenvalues.size()) != rank) {
      fail(Errc::malformed_file, path + ": ranks out of order at row " + std::to_string(i + 1));
    }
    out.back().eigenvalues.push_back(parse_double(cells[3]));
  }
  return out;
}

std::string record_json(const TrainRecord& record) {
  json j;
  j["fingerprint"] = record.fingerprint;
  j["spec"] = spec_json(record.spec);
  j["initial_loss"] = number(record.initial_loss);
  j["final_loss"] = number(record.final_loss);
  j["rel_l2"] = number(record.rel_l2);
  j["diverged"] = record.diverged;
  j["epochs_run"] = record.loss_history.size();
  j["wall_time_s"] = record.wall_time_s;
  return j.dump(2);
}

void write_record_json(const std::string& path, const TrainRecord& record) {
  std::ofstream out = open_out(path);
  out << record_json(record) << '\n';
}

void save_checkpoint(const std::string& path, const KanNetwork& net, const RunSpec& spec) {
  json j;
  j["format"] = "kanlab-checkpoint";
  j["version"] = 1;
  j["fingerprint"] = fingerprint(spec);
  j["spec"] = spec_json(spec);
  json layers = json::array();
  for (const auto& layer : net.layers) {
    json l;
    l["n_in"] = layer.n_in;
    l["n_out"] = layer.n_out;
    l["grid"] = layer.kv.intervals();
    l["spline_order"] = layer.kv.order();
    l["domain"] = {layer.kv.domain_lo(), layer.kv.domain_hi()};
    l["normalized_basis"] = layer.normalized_basis;
    l["norm_eps"] = layer.norm_eps;
    l["r"] = layer.r;
    l["c"] = layer.c;
    l["b"] = layer.b;
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  std::ofstream out = open_out(path);
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path);
  Checkpoint cp;
  try {
    const json j = json::parse(in);
    if (j.at("format") != "kanlab-checkpoint" || j.at("version") != 1) {
      fail(Errc::malformed_file, path + ": not a version 1 checkpoint");
    }
    cp.spec = spec_from_json(j.at("spec"));
    cp.fingerprint = j.at("fingerprint").get<std::string>();
    for (const auto& l : j.at("layers")) {
      const auto domain = l.at("domain").get<std::vector<double>>();
      if (domain.size() != 2) fail(Errc::malformed_file, path + ": layer domain needs two values");
      KanLayer layer(l.at("n_in").get<int>(), l.at("n_out").get<int>(),
                     KnotVector(domain[0], domain[1], l.at("grid").get<int>(), l.at("spline_order").get<int>()),
                     l.at("normalized_basis").get<bool>(), l.at("norm_eps").get<double>());
      layer.r = l.at("r").get<std::vector<double>>();
      layer.c = l.at("c").get<std::vector<double>>();
      layer.b = l.at("b").get<std::vector<double>>();
      cp.net.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    fail(Errc::malformed_file, path + ": " + e.what());
  }
  try {
    cp.net.validate();
  } catch (const Error& e) {
    fail(Errc::malformed_file, path + ": " + e.what());
  }
  return cp;
}

std::string artifact_path(const std::string& dir, const std::string& stem, const std::string& fingerprint,
                          const std::string& suffix) {
  return (std::filesystem::path(dir) / (stem + "_" + fingerprint + suffix)).string();
}

}  // namespace kanlab
