#ifndef CONTRACLIP_IO_HPP
#define CONTRACLIP_IO_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "contraclip/dipole.hpp"
#include "contraclip/encoder.hpp"
#include "contraclip/testbed.hpp"
#include "contraclip/trainer.hpp"
#include "contraclip/traversal.hpp"

#include <json.hpp>

namespace contraclip::io {

using Json = nlohmann::ordered_json;

/// Canonical text: object keys in insertion order, floating-point numbers as
/// %.16e (17 significant digits, bitwise round trip). indent < 0 gives one line.
std::string dump(const Json& value, int indent = 2);

Json parse(const std::string& text, const std::string& what);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

// Dipole bank ---------------------------------------------------------------

struct BankLoadOptions {
  // L2-normalize both poles after validation and re-derive gamma.
  bool normalize = false;
};

Json bank_to_json(const DipoleBankd& bank);
DipoleBankd bank_from_json(const Json& doc, const BankLoadOptions& options = {});
/// Parses and validates a dipole-bank document.
DipoleBankd load_dipole_bank(std::istream& source, const BankLoadOptions& options = {});
DipoleBankd load_dipole_bank_file(const std::string& path, const BankLoadOptions& options = {});

// Encoder and ground truth ----------------------------------------------------

Json encoder_to_json(const SyntheticEncoder& encoder);
SyntheticEncoder encoder_from_json(const Json& doc);

Json ground_truth_to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const Json& doc);

// Training ------------------------------------------------------------------

Json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& doc);

/// Warper, optimizer moments, counters and loss history, plus the config that
/// produced them.
Json checkpoint_to_json(const TrainState& state, const TrainConfig& config);
TrainState checkpoint_from_json(const Json& doc, TrainConfig* config = nullptr);

void save_checkpoint(const TrainState& state, const TrainConfig& config, std::ostream& sink);
TrainState load_checkpoint(std::istream& source, TrainConfig* config = nullptr);

Json report_to_json(const TrainReport& report);

// Traversal -------------------------------------------------------------------

/// One JSON line per point of the path: {"path_id","step","z","s","f"}.
std::string path_to_jsonl(const TraversalPath& path);

/// Checks one JSONL line against the path schema; returns a reason or "".
std::string validate_path_line(const std::string& line);

}  // namespace contraclip::io

#endif  // CONTRACLIP_IO_HPP
