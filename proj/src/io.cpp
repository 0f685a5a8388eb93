#include "contraclip/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace contraclip::io {

namespace {

void dump_into(const Json& value, int indent, int depth, std::string& out) {
  const bool pretty = indent >= 0;
  auto newline = [&](int level) {
    if (!pretty) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * level), ' ');
  };
  switch (value.type()) {
    case Json::value_t::object: {
      if (value.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += pretty ? ": " : ":";
        dump_into(it.value(), indent, depth + 1, out);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (value.empty()) {
        out += "[]";
        return;
      }
      // numeric arrays stay on one line
      const bool flat = std::all_of(value.begin(), value.end(),
                                    [](const Json& v) { return v.is_primitive(); });
      out += '[';
      bool first = true;
      for (const auto& v : value) {
        if (!first) out += flat && pretty ? ", " : ",";
        first = false;
        if (!flat) newline(depth + 1);
        dump_into(v, indent, depth + 1, out);
      }
      if (!flat) newline(depth);
      out += ']';
      return;
    }
    case Json::value_t::number_float: {
      const double x = value.get<double>();
      if (!std::isfinite(x)) throw NonFinite("cannot serialize a non-finite number");
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.16e", x);
      out += buf;
      return;
    }
    default:
      out += value.dump();
  }
}

[[noreturn]] void malformed(const std::string& what, const std::string& detail) {
  throw FormatError(what + ": " + detail);
}

const Json& require(const Json& obj, const char* key, const std::string& what) {
  if (!obj.is_object()) malformed(what, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) malformed(what, std::string("missing field '") + key + "'");
  return *it;
}

double number(const Json& v, const std::string& what) {
  if (!v.is_number()) malformed(what, "expected a number");
  return v.get<double>();
}

Index integer(const Json& v, const std::string& what) {
  if (!v.is_number_integer()) malformed(what, "expected an integer");
  return v.get<Index>();
}

bool boolean(const Json& v, const std::string& what) {
  if (!v.is_boolean()) malformed(what, "expected a boolean");
  return v.get<bool>();
}

std::string string(const Json& v, const std::string& what) {
  if (!v.is_string()) malformed(what, "expected a string");
  return v.get<std::string>();
}

Json vector_json(const Eigen::Ref<const Vector>& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from(const Json& v, const std::string& what, Index expected = -1) {
  if (!v.is_array()) malformed(what, "expected an array of numbers");
  Vector out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = number(v[i], what);
  if (expected >= 0 && out.size() != expected) {
    throw DimensionMismatch(what + ": expected " + std::to_string(expected) + " entries, got " +
                            std::to_string(out.size()));
  }
  return out;
}

// Row-major list of rows.
Json matrix_json(const Matrix& m) {
  Json out = Json::array();
  for (Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

Matrix matrix_from(const Json& v, const std::string& what, Index rows, Index cols) {
  if (!v.is_array() || static_cast<Index>(v.size()) != rows) {
    throw DimensionMismatch(what + ": expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    m.row(r) = vector_from(v[static_cast<std::size_t>(r)], what, cols).transpose();
  }
  return m;
}

Json optional_text(const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); }

std::optional<std::string> optional_text_from(const Json& obj, const char* key,
                                              const std::string& what) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return string(*it, what + "." + key);
}

}  // namespace

std::string dump(const Json& value, int indent) {
  std::string out;
  dump_into(value, indent, 0, out);
  if (indent >= 0) out += '\n';
  return out;
}

Json parse(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << contents;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

// Dipole bank ---------------------------------------------------------------

Json bank_to_json(const DipoleBankd& bank) {
  Json doc;
  doc["embedding_dim"] = bank.embedding_dim;
  doc["beta"] = bank.beta;
  if (bank.normalized) doc["normalized"] = true;
  Json dipoles = Json::array();
  for (const auto& d : bank.dipoles) {
    Json j;
    j["id"] = d.id;
    j["text_minus"] = optional_text(d.text_minus);
    j["text_plus"] = optional_text(d.text_plus);
    if (d.beta_override || d.beta != bank.beta) j["beta"] = d.beta;
    j["gamma"] = d.gamma;
    j["s_minus"] = vector_json(d.s_minus);
    j["s_plus"] = vector_json(d.s_plus);
    dipoles.push_back(std::move(j));
  }
  doc["dipoles"] = std::move(dipoles);
  return doc;
}

DipoleBankd bank_from_json(const Json& doc, const BankLoadOptions& options) {
  const std::string what = "dipole bank";
  DipoleBankd bank;
  bank.embedding_dim = integer(require(doc, "embedding_dim", what), what + ".embedding_dim");
  bank.beta = number(require(doc, "beta", what), what + ".beta");
  if (const auto it = doc.find("normalized"); it != doc.end()) {
    bank.normalized = boolean(*it, what + ".normalized");
  }
  const Json& dipoles = require(doc, "dipoles", what);
  if (!dipoles.is_array()) malformed(what, "'dipoles' must be an array");
  for (std::size_t k = 0; k < dipoles.size(); ++k) {
    const Json& j = dipoles[k];
    const std::string where = what + ".dipoles[" + std::to_string(k) + "]";
    SemanticDipoled d;
    d.id = string(require(j, "id", where), where + ".id");
    d.text_minus = optional_text_from(j, "text_minus", where);
    d.text_plus = optional_text_from(j, "text_plus", where);
    d.beta = bank.beta;
    if (const auto it = j.find("beta"); it != j.end() && !it->is_null()) {
      d.beta = number(*it, where + ".beta");
      d.beta_override = true;
    }
    d.gamma = number(require(j, "gamma", where), where + ".gamma");
    d.s_minus = vector_from(require(j, "s_minus", where), where + ".s_minus");
    d.s_plus = vector_from(require(j, "s_plus", where), where + ".s_plus");
    bank.dipoles.push_back(std::move(d));
  }
  bank.validate();
  if (options.normalize && !bank.normalized) {
    for (auto& d : bank.dipoles) {
      const double nm = d.s_minus.norm();
      const double np = d.s_plus.norm();
      if (!(nm > 0.0) || !(np > 0.0)) throw DegenerateDipole("cannot normalize a zero pole");
      d.s_minus /= nm;
      d.s_plus /= np;
      d.gamma = compute_gamma(d.s_minus, d.s_plus, d.beta);
    }
    bank.normalized = true;
  }
  return bank;
}

DipoleBankd load_dipole_bank(std::istream& source, const BankLoadOptions& options) {
  std::ostringstream buf;
  buf << source.rdbuf();
  return bank_from_json(parse(buf.str(), "dipole bank"), options);
}

DipoleBankd load_dipole_bank_file(const std::string& path, const BankLoadOptions& options) {
  return bank_from_json(parse(read_file(path), path), options);
}

// Encoder and ground truth ----------------------------------------------------

Json encoder_to_json(const SyntheticEncoder& encoder) {
  Json doc;
  doc["format"] = "contraclip-encoder";
  doc["kind"] = encoder.is_linear() ? "linear" : "mlp";
  doc["seed"] = encoder.seed();
  doc["latent_dim"] = encoder.input_dim();
  doc["embedding_dim"] = encoder.output_dim();
  if (encoder.is_linear()) {
    doc["orthonormal"] = encoder.linear().orthonormal;
    doc["a"] = matrix_json(encoder.linear().a);
  } else {
    const auto& m = encoder.mlp();
    doc["hidden_dim"] = m.w1.rows();
    doc["activation"] = "tanh";
    doc["w1"] = matrix_json(m.w1);
    doc["b1"] = vector_json(m.b1);
    doc["w2"] = matrix_json(m.w2);
  }
  return doc;
}

SyntheticEncoder encoder_from_json(const Json& doc) {
  const std::string what = "encoder";
  if (string(require(doc, "format", what), what) != "contraclip-encoder") {
    malformed(what, "not an encoder document");
  }
  const auto& seed_json = require(doc, "seed", what);
  if (!seed_json.is_number_integer()) malformed(what, "seed must be an integer");
  const auto seed = seed_json.get<std::uint64_t>();
  const Index d = integer(require(doc, "latent_dim", what), what + ".latent_dim");
  const Index e = integer(require(doc, "embedding_dim", what), what + ".embedding_dim");
  if (d < 1 || e < 1) malformed(what, "dimensions must be positive");
  const std::string kind = string(require(doc, "kind", what), what + ".kind");
  if (kind == "linear") {
    LinearMap map;
    map.orthonormal = boolean(require(doc, "orthonormal", what), what + ".orthonormal");
    map.a = matrix_from(require(doc, "a", what), what + ".a", e, d);
    return SyntheticEncoder(std::move(map), seed);
  }
  if (kind == "mlp") {
    const Index h = integer(require(doc, "hidden_dim", what), what + ".hidden_dim");
    if (h < 1) malformed(what, "hidden_dim must be positive");
    if (const auto it = doc.find("activation"); it != doc.end() && *it != "tanh") {
      malformed(what, "only the tanh activation is supported");
    }
    MlpMap map;
    map.w1 = matrix_from(require(doc, "w1", what), what + ".w1", h, d);
    map.b1 = vector_from(require(doc, "b1", what), what + ".b1", h);
    map.w2 = matrix_from(require(doc, "w2", what), what + ".w2", e, h);
    return SyntheticEncoder(std::move(map), seed);
  }
  malformed(what, "unknown kind '" + kind + "'");
}

Json ground_truth_to_json(const GroundTruth& truth) {
  Json doc;
  doc["format"] = "contraclip-ground-truth";
  doc["separation"] = truth.separation;
  doc["centre"] = vector_json(truth.centre);
  Json dirs = Json::array();
  for (Index k = 0; k < truth.directions.cols(); ++k) dirs.push_back(vector_json(truth.directions.col(k)));
  doc["directions"] = std::move(dirs);
  return doc;
}

GroundTruth ground_truth_from_json(const Json& doc) {
  const std::string what = "ground truth";
  if (string(require(doc, "format", what), what) != "contraclip-ground-truth") {
    malformed(what, "not a ground-truth document");
  }
  GroundTruth truth;
  truth.separation = number(require(doc, "separation", what), what + ".separation");
  truth.centre = vector_from(require(doc, "centre", what), what + ".centre");
  const Json& dirs = require(doc, "directions", what);
  if (!dirs.is_array() || dirs.empty()) malformed(what, "directions must be a nonempty array");
  truth.directions.resize(truth.centre.size(), static_cast<Index>(dirs.size()));
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    truth.directions.col(static_cast<Index>(k)) =
        vector_from(dirs[k], what + ".directions", truth.centre.size());
  }
  return truth;
}

// Training ------------------------------------------------------------------

Json train_config_to_json(const TrainConfig& c) {
  Json doc;
  doc["batch_size"] = c.batch_size;
  doc["iterations"] = c.iterations;
  doc["learning_rate"] = c.learning_rate;
  doc["epsilon_min"] = c.epsilon_min;
  doc["epsilon_max"] = c.epsilon_max;
  doc["temperature"] = c.temperature;
  doc["mode"] = to_string(c.mode);
  doc["seed"] = c.seed;
  doc["train_scales"] = c.train_scales;
  doc["stall_window"] = c.stall_window;
  doc["stall_threshold"] = c.stall_threshold;
  doc["stall_tolerance"] = c.stall_tolerance;
  return doc;
}

TrainConfig train_config_from_json(const Json& doc) {
  const std::string what = "train config";
  TrainConfig c;
  c.batch_size = integer(require(doc, "batch_size", what), what);
  c.iterations = integer(require(doc, "iterations", what), what);
  c.learning_rate = number(require(doc, "learning_rate", what), what);
  c.epsilon_min = number(require(doc, "epsilon_min", what), what);
  c.epsilon_max = number(require(doc, "epsilon_max", what), what);
  c.temperature = number(require(doc, "temperature", what), what);
  try {
    c.mode = parse_similarity_mode(string(require(doc, "mode", what), what));
  } catch (const InvalidArgument& e) {
    malformed(what, e.what());
  }
  const auto& seed = require(doc, "seed", what);
  if (!seed.is_number_integer()) malformed(what, "seed must be an integer");
  c.seed = seed.get<std::uint64_t>();
  c.train_scales = boolean(require(doc, "train_scales", what), what);
  c.stall_window = integer(require(doc, "stall_window", what), what);
  c.stall_threshold = number(require(doc, "stall_threshold", what), what);
  c.stall_tolerance = number(require(doc, "stall_tolerance", what), what);
  return c;
}

Json checkpoint_to_json(const TrainState& state, const TrainConfig& config) {
  const auto& w = state.warper;
  Json doc;
  doc["format"] = "contraclip-checkpoint";
  doc["version"] = 1;
  doc["latent_dim"] = w.latent_dim();
  doc["num_paths"] = w.num_paths();
  doc["supports_per_path"] = w.supports_per_path();
  doc["iteration"] = state.iteration;
  Json paths = Json::array();
  for (Index k = 0; k < w.num_paths(); ++k) {
    Json p;
    Json supports = Json::array();
    for (Index i = 0; i < w.supports_per_path(); ++i) supports.push_back(vector_json(w.supports(k).col(i)));
    p["supports"] = std::move(supports);
    p["log_scales"] = vector_json(w.log_scales(k));
    paths.push_back(std::move(p));
  }
  doc["paths"] = std::move(paths);
  const auto& opt = state.optimizer;
  Json o;
  o["beta1"] = opt.beta1();
  o["beta2"] = opt.beta2();
  o["epsilon"] = opt.epsilon();
  o["step"] = opt.step();
  o["first_moment"] = vector_json(opt.first_moment());
  o["second_moment"] = vector_json(opt.second_moment());
  doc["optimizer"] = std::move(o);
  doc["guard_events"] = state.guard_events;
  doc["skipped_pairs"] = state.skipped_pairs;
  doc["loss_history"] = vector_json(Eigen::Map<const Vector>(
      state.loss_history.data(), static_cast<Index>(state.loss_history.size())));
  doc["config"] = train_config_to_json(config);
  return doc;
}

TrainState checkpoint_from_json(const Json& doc, TrainConfig* config) {
  const std::string what = "checkpoint";
  if (string(require(doc, "format", what), what) != "contraclip-checkpoint") {
    malformed(what, "not a checkpoint document");
  }
  if (integer(require(doc, "version", what), what) != 1) malformed(what, "unsupported version");
  const Index d = integer(require(doc, "latent_dim", what), what + ".latent_dim");
  const Index k_paths = integer(require(doc, "num_paths", what), what + ".num_paths");
  const Index n = integer(require(doc, "supports_per_path", what), what + ".supports_per_path");
  if (d < 1 || k_paths < 1 || n < 1) malformed(what, "sizes must be positive");

  LatentWarperd warper(d, k_paths, n);
  const Json& paths = require(doc, "paths", what);
  if (!paths.is_array() || static_cast<Index>(paths.size()) != k_paths) {
    throw DimensionMismatch(what + ": 'paths' does not have num_paths entries");
  }
  for (Index k = 0; k < k_paths; ++k) {
    const Json& p = paths[static_cast<std::size_t>(k)];
    const Json& supports = require(p, "supports", what);
    if (!supports.is_array() || static_cast<Index>(supports.size()) != n) {
      throw DimensionMismatch(what + ": path does not have supports_per_path supports");
    }
    for (Index i = 0; i < n; ++i) {
      warper.supports(k).col(i) = vector_from(supports[static_cast<std::size_t>(i)], what, d);
    }
    warper.log_scales(k) = vector_from(require(p, "log_scales", what), what, n);
  }
  if (!warper.is_finite()) throw NonFinite(what + ": non-finite parameters");

  TrainState state = TrainState::start(std::move(warper));
  const Json& o = require(doc, "optimizer", what);
  const Index count = state.warper.parameter_count();
  AdamOptimizer opt(count, number(require(o, "beta1", what), what), number(require(o, "beta2", what), what),
                    number(require(o, "epsilon", what), what));
  opt.restore(vector_from(require(o, "first_moment", what), what, count),
              vector_from(require(o, "second_moment", what), what, count),
              static_cast<long>(integer(require(o, "step", what), what)));
  state.optimizer = std::move(opt);
  state.iteration = integer(require(doc, "iteration", what), what);
  state.guard_events = static_cast<long>(integer(require(doc, "guard_events", what), what));
  state.skipped_pairs = static_cast<long>(integer(require(doc, "skipped_pairs", what), what));
  const Vector history = vector_from(require(doc, "loss_history", what), what);
  state.loss_history.assign(history.data(), history.data() + history.size());
  if (static_cast<Index>(state.loss_history.size()) != state.iteration) {
    malformed(what, "loss history length differs from the iteration counter");
  }
  if (config) *config = train_config_from_json(require(doc, "config", what));
  return state;
}

void save_checkpoint(const TrainState& state, const TrainConfig& config, std::ostream& sink) {
  sink << dump(checkpoint_to_json(state, config));
  if (!sink) throw IoError("failed writing checkpoint");
}

TrainState load_checkpoint(std::istream& source, TrainConfig* config) {
  std::ostringstream buf;
  buf << source.rdbuf();
  return checkpoint_from_json(parse(buf.str(), "checkpoint"), config);
}

Json report_to_json(const TrainReport& report) {
  Json doc;
  doc["final_loss"] = report.final_loss;
  doc["iterations_run"] = report.iterations_run;
  doc["stalled"] = report.stalled;
  doc["guard_events"] = report.guard_events;
  doc["skipped_pairs"] = report.skipped_pairs;
  doc["wall_time_seconds"] = report.wall_time_seconds;
  return doc;
}

// Traversal -------------------------------------------------------------------

std::string path_to_jsonl(const TraversalPath& path) {
  std::string out;
  for (std::size_t t = 0; t < path.latents.size(); ++t) {
    Json row;
    row["path_id"] = path.path_id;
    row["step"] = static_cast<Index>(t);
    row["z"] = vector_json(path.latents[t]);
    row["s"] = path.embeddings.empty() ? Json(nullptr) : vector_json(path.embeddings[t]);
    row["f"] = path.warp_values[t];
    out += dump(row, -1);
    out += '\n';
  }
  return out;
}

std::string validate_path_line(const std::string& line) {
  Json row;
  try {
    row = Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    return std::string("not JSON: ") + e.what();
  }
  if (!row.is_object()) return "not an object";
  if (row.size() != 5) return "expected exactly the keys path_id, step, z, s, f";
  auto numeric_array = [](const Json& v) {
    return v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number(); });
  };
  if (!row.contains("path_id") || !row["path_id"].is_string()) return "path_id must be a string";
  if (!row.contains("step") || !row["step"].is_number_integer() || row["step"].get<long>() < 0) {
    return "step must be a non-negative integer";
  }
  if (!row.contains("z") || !numeric_array(row["z"]) || row["z"].empty()) return "z must be a numeric array";
  if (!row.contains("s") || !(row["s"].is_null() || numeric_array(row["s"]))) {
    return "s must be a numeric array or null";
  }
  if (!row.contains("f") || !row["f"].is_number()) return "f must be a number";
  return {};
}

}  // namespace contraclip::io
