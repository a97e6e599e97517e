#include "cantor/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace cantor {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'N', 'T', 'O', 'R', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian hosts");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("truncated checkpoint");
  return v;
}

// Constant values go through their bit pattern so they survive exactly.
std::uint64_t bits_of(double v) { return std::bit_cast<std::uint64_t>(v); }
double from_bits(std::uint64_t b) { return std::bit_cast<double>(b); }

nlohmann::json config_json(const ModelConfig& c) {
  return {{"d", c.d},
          {"heads", c.heads},
          {"encoder_blocks", c.encoder_blocks},
          {"decoder_blocks", c.decoder_blocks},
          {"ffn_hidden", c.ffn_hidden},
          {"max_len", c.max_len},
          {"L", c.L},
          {"decoder_self_attention", c.decoder_self_attention},
          {"init_std_bits", bits_of(c.init_std)},
          {"vocab_size", c.vocab_size},
          {"num_constants", c.num_constants},
          {"num_operators", c.num_operators}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.d = j.at("d");
  c.heads = j.at("heads");
  c.encoder_blocks = j.at("encoder_blocks");
  c.decoder_blocks = j.at("decoder_blocks");
  c.ffn_hidden = j.at("ffn_hidden");
  c.max_len = j.at("max_len");
  c.L = j.at("L");
  c.decoder_self_attention = j.at("decoder_self_attention");
  c.init_std = from_bits(j.at("init_std_bits").get<std::uint64_t>());
  c.vocab_size = j.at("vocab_size");
  c.num_constants = j.at("num_constants");
  c.num_operators = j.at("num_operators");
  return c;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Model& model) {
  nlohmann::json header;
  header["config"] = config_json(model.config);
  header["vocab"] = model.vocab.tokens();
  header["operators"] = model.operators.to_string();
  nlohmann::json consts = nlohmann::json::array();
  for (const Constant& c : model.constants.values())
    consts.push_back({{"name", c.name}, {"value_bits", bits_of(c.value)}, {"value", c.value}});
  header["constants"] = consts;
  nlohmann::json tensors = nlohmann::json::array();
  model.params.for_each([&](const std::string& name, const Matrix& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  header["tensors"] = tensors;
  const std::string text = header.dump();

  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  model.params.for_each([&](const std::string&, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (!out) throw CheckpointError("failed writing checkpoint");
}

Model read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw CheckpointError("not a cantor checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in);
  if (len > (1ULL << 30)) throw CheckpointError("checkpoint header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }

  Model model;
  try {
    model.config = config_from(header.at("config"));
    for (const auto& t : header.at("vocab")) model.vocab.add(t.get<std::string>());
    model.operators = OperatorSet::parse(header.at("operators").get<std::string>());
    std::vector<Constant> consts;
    for (const auto& c : header.at("constants"))
      consts.push_back({c.at("name").get<std::string>(), from_bits(c.at("value_bits").get<std::uint64_t>())});
    model.constants = ConstantsConfig(std::move(consts));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  if (model.vocab.size() != model.config.vocab_size) throw CheckpointError("vocabulary size mismatch");
  if (static_cast<int>(model.operators.size()) != model.config.num_operators)
    throw CheckpointError("operator count mismatch");
  if (static_cast<int>(model.constants.size()) != model.config.num_constants)
    throw CheckpointError("constant count mismatch");

  // Shapes come from a freshly initialized model; the header must agree.
  model.params = ModelParams::init(model.config, 0);
  const auto& tensors = header.at("tensors");
  std::size_t k = 0;
  model.params.for_each([&](const std::string& name, Matrix& m) {
    if (k >= tensors.size()) throw CheckpointError("checkpoint is missing tensor " + name);
    const auto& t = tensors[k++];
    if (t.at("name").get<std::string>() != name || t.at("rows").get<std::size_t>() != m.rows() ||
        t.at("cols").get<std::size_t>() != m.cols())
      throw CheckpointError("tensor shape mismatch at " + name);
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
      throw CheckpointError("truncated tensor " + name);
  });
  if (k != tensors.size()) throw CheckpointError("checkpoint has extra tensors");
  return model;
}

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  write_checkpoint(out, model);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace cantor
