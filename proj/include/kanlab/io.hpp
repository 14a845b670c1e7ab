#pragma once

#include "kanlab/kan.hpp"
#include "kanlab/ntk.hpp"
#include "kanlab/optim.hpp"

#include <string>
#include <vector>

namespace kanlab {

/// Shortest decimal text that parses back to the same double; "nan", "inf", "-inf".
std::string format_double(double v);
/// Inverse of format_double. Throws malformed_file.
double parse_double(const std::string& text);

/// Splits one CSV line on commas (no quoting is ever emitted).
std::vector<std::string> split_csv(const std::string& line);

/// Columns epoch,loss. Row 0 is the initial loss, row e the loss after e updates.
void write_loss_csv(const std::string& path, const TrainRecord& record);
/// Initial loss followed by the history. Throws file_not_found, malformed_file.
std::vector<double> read_loss_csv(const std::string& path);

/// Columns iteration,block_id,rank,eigenvalue with rank starting at 0.
void write_spectrum_csv(const std::string& path, const std::vector<NtkSpectrum>& spectra);
std::vector<NtkSpectrum> read_spectrum_csv(const std::string& path);

/// Record summary (no loss history) as a JSON document.
std::string record_json(const TrainRecord& record);
void write_record_json(const std::string& path, const TrainRecord& record);

/// Network weights, knots and normalization flags, plus the run coordinates.
void save_checkpoint(const std::string& path, const KanNetwork& net, const RunSpec& spec);
struct Checkpoint {
  KanNetwork net;
  RunSpec spec;
  std::string fingerprint;
};
/// Throws file_not_found, malformed_file.
Checkpoint load_checkpoint(const std::string& path);

/// `<stem>_<fingerprint><suffix>` inside `dir`.
std::string artifact_path(const std::string& dir, const std::string& stem, const std::string& fingerprint,
                          const std::string& suffix);

}  // namespace kanlab
