#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "csnet/config_json.hpp"
#include "csnet/csnet_model.hpp"
#include "csnet/error.hpp"
#include "csnet/hash.hpp"

namespace csnet {

namespace {

using json = nlohmann::json;

constexpr char kMagic[] = "CSNET01";
constexpr std::size_t kMagicLen = 7;

std::string pooling_name(Pooling p) { return p == Pooling::Mean ? "mean" : "mean_last"; }

template <class T>
T get_checked(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::InvalidConfig, std::string("model config key '") + key + "' has the wrong type");
  }
}

// Little-endian primitive writer/reader.
class ByteWriter {
 public:
  explicit ByteWriter(std::ofstream& out) : out_(out) {}
  void u64(std::uint64_t v) {
    std::array<char, 8> b;
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(b.data(), 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

 private:
  std::ofstream& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::ifstream& in) : in_(in) {}
  std::uint64_t u64() {
    std::array<unsigned char, 8> b;
    read(reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    if (n > (std::size_t{1} << 30)) throw Error(Errc::IncompatibleModel, "implausible block length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (!in_) throw Error(Errc::IncompatibleModel, "model file is truncated");
  }
  std::ifstream& in_;
};

}  // namespace

json to_json(const CsNetConfig& c) {
  return json{{"variant", variant_name(c.variant)},
              {"window", c.window},
              {"horizon", c.horizon},
              {"n_kernels", c.n_kernels},
              {"k_t", c.k_t},
              {"k_s", c.k_s},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"d_ff", c.d_ff},
              {"encoder_layers", c.encoder_layers},
              {"mlp_hidden", c.mlp_hidden},
              {"pooling", pooling_name(c.pooling)},
              {"dropout", c.dropout},
              {"learning_rate", c.learning_rate},
              {"l2", c.l2},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"record_loss", c.record_loss}};
}

void merge_json(CsNetConfig& c, const json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "model config must be an object");
  static const std::set<std::string> known = {
      "variant", "window",     "horizon", "n_kernels", "k_t",         "k_s",
      "d_model", "n_heads",    "d_ff",    "encoder_layers", "mlp_hidden", "pooling",
      "dropout", "learning_rate", "l2",   "epochs",    "batch_size",  "seed",
      "record_loss"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(Errc::InvalidConfig, "unknown model config key '" + key + "'");
  }
  if (j.contains("variant")) c.variant = parse_variant(get_checked<std::string>(j, "variant"));
  if (j.contains("pooling")) {
    const auto p = get_checked<std::string>(j, "pooling");
    if (p == "mean") {
      c.pooling = Pooling::Mean;
    } else if (p == "mean_last") {
      c.pooling = Pooling::MeanLast;
    } else {
      throw Error(Errc::InvalidConfig, "model config key 'pooling' must be mean or mean_last");
    }
  }
  auto size_key = [&](const char* key, std::size_t& out) {
    if (j.contains(key)) out = get_checked<std::size_t>(j, key);
  };
  auto real_key = [&](const char* key, double& out) {
    if (j.contains(key)) out = get_checked<double>(j, key);
  };
  size_key("window", c.window);
  size_key("horizon", c.horizon);
  size_key("n_kernels", c.n_kernels);
  size_key("k_t", c.k_t);
  size_key("k_s", c.k_s);
  size_key("d_model", c.d_model);
  size_key("n_heads", c.n_heads);
  size_key("d_ff", c.d_ff);
  size_key("encoder_layers", c.encoder_layers);
  size_key("epochs", c.epochs);
  size_key("batch_size", c.batch_size);
  real_key("dropout", c.dropout);
  real_key("learning_rate", c.learning_rate);
  real_key("l2", c.l2);
  if (j.contains("mlp_hidden")) c.mlp_hidden = get_checked<std::vector<std::size_t>>(j, "mlp_hidden");
  if (j.contains("seed")) c.seed = get_checked<std::uint64_t>(j, "seed");
  if (j.contains("record_loss")) c.record_loss = get_checked<bool>(j, "record_loss");
}

std::string config_hash(const CsNetConfig& config) {
  json j = to_json(config);
  j.erase("record_loss");  // bookkeeping only; does not change the fitted model
  return fnv1a_hex(j.dump());
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write '" + path.string() + "'");
  ByteWriter w(out);

  json header = {{"config", to_json(model.config)},
                 {"config_hash", config_hash(model.config)},
                 {"e_len", model.e_len},
                 {"r_len", model.r_len},
                 {"count_data", model.count_data}};
  if (model.ensemble_weight) header["ensemble_weight"] = *model.ensemble_weight;
  const std::string header_text = header.dump();

  w.bytes(std::string_view(kMagic, kMagicLen));
  w.u64(header_text.size());
  w.bytes(header_text);

  const auto& norm = model.normalization;
  w.u64(norm.mean.size());
  for (double v : norm.mean) w.f64(v);
  for (double v : norm.scale) w.f64(v);

  std::uint64_t n_tensors = 0;
  nn::for_each_tensor(model.params, [&](std::string_view, auto, bool) { ++n_tensors; });
  w.u64(n_tensors);
  nn::for_each_tensor(model.params, [&](std::string_view name, auto values, bool) {
    w.u64(name.size());
    w.bytes(name);
    w.u64(values.size());
    for (double v : values) w.f64(v);
  });
  out.flush();
  if (!out) throw Error(Errc::IoFailure, "write to '" + path.string() + "' failed");
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open '" + path.string() + "'");
  ByteReader r(in);

  if (r.bytes(kMagicLen) != std::string_view(kMagic, kMagicLen)) {
    throw Error(Errc::IncompatibleModel, "'" + path.string() + "' is not a CSNET01 model file");
  }
  json header;
  try {
    header = json::parse(r.bytes(r.u64()));
  } catch (const json::exception& e) {
    throw Error(Errc::IncompatibleModel, std::string("unreadable model header: ") + e.what());
  }

  TrainedModel model;
  merge_json(model.config, header.at("config"));
  model.config.validate();
  if (header.value("config_hash", "") != config_hash(model.config)) {
    throw Error(Errc::IncompatibleModel, "model header hash does not match its configuration");
  }
  model.e_len = get_checked<std::size_t>(header, "e_len");
  model.r_len = get_checked<std::size_t>(header, "r_len");
  model.count_data = get_checked<bool>(header, "count_data");
  if (header.contains("ensemble_weight")) {
    model.ensemble_weight = get_checked<double>(header, "ensemble_weight");
  }

  const std::size_t n_series = r.u64();
  if (n_series != model.e_len * model.r_len) {
    throw Error(Errc::IncompatibleModel, "normalization block size does not match e_len x r_len");
  }
  model.normalization.e_len = model.e_len;
  model.normalization.r_len = model.r_len;
  model.normalization.mean.resize(n_series);
  model.normalization.scale.resize(n_series);
  for (auto& v : model.normalization.mean) v = r.f64();
  for (auto& v : model.normalization.scale) v = r.f64();

  nn::Rng rng(0);
  model.params = CsNetParams::init(model.config, model.e_len, rng);
  std::uint64_t expected = 0;
  nn::for_each_tensor(model.params, [&](std::string_view, auto, bool) { ++expected; });
  if (r.u64() != expected) throw Error(Errc::IncompatibleModel, "parameter tensor count differs");
  nn::for_each_tensor(model.params, [&](std::string_view name, std::span<double> values, bool) {
    const std::string stored = r.bytes(r.u64());
    if (stored != name) {
      throw Error(Errc::IncompatibleModel,
                  "expected tensor '" + std::string(name) + "', found '" + stored + "'");
    }
    if (r.u64() != values.size()) {
      throw Error(Errc::IncompatibleModel, "tensor '" + stored + "' has the wrong size");
    }
    for (auto& v : values) v = r.f64();
  });
  return model;
}

}  // namespace csnet
