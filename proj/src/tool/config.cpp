#include "hce/tool/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hce/common/error.hpp"

namespace hce::tool {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("field '" + key + "' has the wrong type");
  }
}

double in_range(const json& j, const std::string& key, double fallback, double lo, double hi) {
  const double v = get<double>(j, key, fallback);
  if (!(v >= lo && v <= hi)) {
    std::ostringstream os;
    os << "field '" << key << "' = " << v << " is outside [" << lo << ", " << hi << "]";
    throw ValidationError(os.str());
  }
  return v;
}

long long at_least(const json& j, const std::string& key, long long fallback, long long lo) {
  const auto v = get<long long>(j, key, fallback);
  if (v < lo) throw ValidationError("field '" + key + "' = " + std::to_string(v) + " must be >= " + std::to_string(lo));
  return v;
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

DataPaths parse_data(const json& j, const std::filesystem::path& base) {
  DataPaths d;
  if (!j.contains("data")) return d;
  const json& x = j.at("data");
  check_keys(x, {"rules", "unify", "readings", "variants", "split"}, "data");
  d.rules = resolve(get<std::string>(x, "rules", ""), base);
  d.unify = resolve(get<std::string>(x, "unify", ""), base);
  d.readings = resolve(get<std::string>(x, "readings", ""), base);
  d.variants = resolve(get<std::string>(x, "variants", ""), base);
  d.split = resolve(get<std::string>(x, "split", ""), base);
  return d;
}

std::vector<Real> real_list(const json& j, const std::string& key, double lo, double hi) {
  if (!j.is_array() || j.empty()) throw ValidationError("grid." + key + " must be a non-empty array");
  std::vector<Real> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json wrap = {{key, j[i]}};
    out.push_back(in_range(wrap, key, 0, lo, hi));
  }
  return out;
}

std::optional<pron::Grid> parse_grid(const json& j) {
  if (!j.contains("grid")) return std::nullopt;
  const json& g = j.at("grid");
  if (g.is_string()) {
    if (g.get<std::string>() != "standard") throw ValidationError("grid must be \"standard\" or an object");
    return pron::Grid::standard();
  }
  check_keys(g, {"lr", "dropout"}, "grid");
  pron::Grid grid = pron::Grid::standard();
  if (g.contains("lr")) grid.lr = real_list(g.at("lr"), "lr", kMinLr, kMaxLr);
  if (g.contains("dropout")) grid.dropout = real_list(g.at("dropout"), "dropout", 0, kMaxDropout);
  return grid;
}

const std::set<std::string> kRunKeys = {"encoder", "scenario",   "order",         "operators", "output_order",
                                        "lr",      "dropout",    "epochs",        "batch_size", "hidden",
                                        "input_dim", "layers",   "bias",          "cnn_filters", "cnn_max_width",
                                        "seed",    "clip",       "weight_decay",  "patience"};

pron::RunConfig parse_run(const json& j) {
  pron::RunConfig r;
  auto& e = r.model.encoder;
  e.kind = enc::parse_encoder_kind(get<std::string>(j, "encoder", "treelstm"));
  e.order = ids::parse_linear_order(get<std::string>(j, "order", "pre"));
  e.op_inputs = get<bool>(j, "operators", true);
  e.bias = get<bool>(j, "bias", true);
  e.hidden = static_cast<std::size_t>(at_least(j, "hidden", 256, 1));
  e.input_dim = static_cast<std::size_t>(at_least(j, "input_dim", 64, 1));
  e.layers = static_cast<int>(in_range(j, "layers", 1, 1, 2));
  e.cnn_filters = static_cast<std::size_t>(at_least(j, "cnn_filters", 200, 1));
  e.cnn_max_width = static_cast<std::size_t>(at_least(j, "cnn_max_width", 7, 1));
  r.model.head_bias = e.bias;
  r.model.output_order = pron::parse_output_order(get<std::string>(j, "output_order", "cd-nu-on"));
  r.scenario = static_cast<int>(in_range(j, "scenario", 1, 1, 3));
  r.lr = in_range(j, "lr", 1e-3, kMinLr, kMaxLr);
  r.dropout = in_range(j, "dropout", 0.0, 0, kMaxDropout);
  r.epochs = static_cast<int>(at_least(j, "epochs", 200, 0));
  r.batch_size = static_cast<std::size_t>(at_least(j, "batch_size", 128, 1));
  r.seed = get<std::uint64_t>(j, "seed", 0);
  r.clip = in_range(j, "clip", 5.0, 0, 1e6);
  r.weight_decay = in_range(j, "weight_decay", 0.0, 0, 1);
  r.patience = static_cast<int>(at_least(j, "patience", 0, 0));
  return r;
}

}  // namespace

json DataPaths::to_json() const {
  return {{"rules", rules}, {"unify", unify}, {"readings", readings}, {"variants", variants}, {"split", split}};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

PronSpec parse_pron_config(const json& j, const std::filesystem::path& base) {
  auto keys = kRunKeys;
  keys.insert({"data", "grid"});
  check_keys(j, keys, "config");
  PronSpec s;
  s.run = parse_run(j);
  s.data = parse_data(j, base);
  s.grid = parse_grid(j);
  return s;
}

MatrixSpec parse_matrix_config(const json& j, const std::filesystem::path& base) {
  check_keys(j, {"base", "encoders", "scenarios", "orders", "ablation", "output_orders", "data", "splits", "grid"},
             "matrix config");
  MatrixSpec s;
  s.data = parse_data(j, base);
  s.grid = parse_grid(j);
  const json base_run = j.value("base", json::object());
  check_keys(base_run, kRunKeys, "base");
  const json encoders = j.value("encoders", json::array({json::object()}));
  const json scenarios = j.value("scenarios", json::array({base_run.value("scenario", 1)}));
  const json orders = j.value("orders", json::array({base_run.value("order", "pre")}));
  const json ablation = j.value("ablation", json::array({false}));
  const json outputs = j.value("output_orders", json::array({base_run.value("output_order", "cd-nu-on")}));
  for (const json* list : {&encoders, &scenarios, &orders, &ablation, &outputs}) {
    if (!list->is_array() || list->empty()) throw ValidationError("matrix dimensions must be non-empty arrays");
  }
  for (const auto& enc_override : encoders) {
    check_keys(enc_override, kRunKeys, "encoders[]");
    json cell = base_run;
    cell.update(enc_override);
    const bool tree = enc::parse_encoder_kind(cell.value("encoder", "treelstm")) == enc::EncoderKind::kTreeLstm;
    for (const auto& scenario : scenarios) {
      // Linearization order does not apply to the treeLSTM.
      const json tree_orders = json::array({orders[0]});
      for (const auto& order : tree ? tree_orders : orders) {
        for (const auto& removed : ablation) {
          for (const auto& output : outputs) {
            json c = cell;
            c["scenario"] = scenario;
            c["order"] = order;
            c["operators"] = !removed.get<bool>();
            c["output_order"] = output;
            s.cells.push_back(parse_run(c));
          }
        }
      }
    }
  }
  if (j.contains("splits")) {
    for (const auto& [k, v] : j.at("splits").items()) {
      int scenario = 0;
      try {
        scenario = std::stoi(k);
      } catch (const std::exception&) {
        throw ValidationError("splits keys must be scenario numbers, got '" + k + "'");
      }
      s.splits[scenario] = resolve(v.get<std::string>(), base);
    }
  }
  return s;
}

LmSpec parse_lm_config(const json& j, const std::filesystem::path& base) {
  check_keys(j,
             {"input", "embed_dim", "token_dim", "layers", "dropout_input", "dropout_hidden", "dropout_output", "lr",
              "epochs", "batch_size", "bptt", "seed", "clip", "data"},
             "LM config");
  LmSpec s;
  auto& c = s.config;
  c.input = lm::parse_lm_input(get<std::string>(j, "input", "lookup"));
  c.embed_dim = static_cast<std::size_t>(at_least(j, "embed_dim", static_cast<long long>(c.embed_dim), 1));
  c.token_dim = static_cast<std::size_t>(at_least(j, "token_dim", static_cast<long long>(c.token_dim), 1));
  if (j.contains("layers")) {
    c.layers.clear();
    const json& layers = j.at("layers");
    if (!layers.is_array() || layers.empty()) throw ValidationError("field 'layers' must be a non-empty array");
    for (const auto& l : layers) {
      const json wrap = {{"layers", l}};
      c.layers.push_back(static_cast<std::size_t>(at_least(wrap, "layers", 0, 1)));
    }
  }
  c.dropout_input = in_range(j, "dropout_input", c.dropout_input, 0, kMaxDropout);
  c.dropout_hidden = in_range(j, "dropout_hidden", c.dropout_hidden, 0, kMaxDropout);
  c.dropout_output = in_range(j, "dropout_output", c.dropout_output, 0, kMaxDropout);
  c.lr = in_range(j, "lr", c.lr, kMinLr, kMaxLr);
  c.epochs = static_cast<int>(at_least(j, "epochs", c.epochs, 0));
  c.batch_size = static_cast<std::size_t>(at_least(j, "batch_size", static_cast<long long>(c.batch_size), 1));
  c.bptt = static_cast<std::size_t>(at_least(j, "bptt", static_cast<long long>(c.bptt), 1));
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  c.clip = in_range(j, "clip", c.clip, 0, 1e6);
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"train", "valid", "test", "rules", "unify"}, "data");
    s.train = resolve(get<std::string>(d, "train", ""), base);
    s.valid = resolve(get<std::string>(d, "valid", ""), base);
    s.test = resolve(get<std::string>(d, "test", ""), base);
    s.rules = resolve(get<std::string>(d, "rules", ""), base);
    s.unify = resolve(get<std::string>(d, "unify", ""), base);
  }
  return s;
}

PronSpec load_pron_config(const std::filesystem::path& path) {
  return parse_pron_config(read_json_file(path), path.parent_path());
}

MatrixSpec load_matrix_config(const std::filesystem::path& path) {
  return parse_matrix_config(read_json_file(path), path.parent_path());
}

LmSpec load_lm_config(const std::filesystem::path& path) {
  return parse_lm_config(read_json_file(path), path.parent_path());
}

}  // namespace hce::tool
