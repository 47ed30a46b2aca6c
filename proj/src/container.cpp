#include "ilmfuse/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ilmfuse/error.hpp"
#include "ilmfuse/kernels.hpp"

namespace ilmfuse {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

using Shape = std::vector<std::int64_t>;

void add_lstm(std::vector<TensorSpec>& out, const std::string& prefix, std::int64_t in,
              std::int64_t hidden) {
  out.push_back({prefix + ".W_ih", {4 * hidden, in}});
  out.push_back({prefix + ".W_hh", {4 * hidden, hidden}});
  out.push_back({prefix + ".b_ih", {4 * hidden}});
  out.push_back({prefix + ".b_hh", {4 * hidden}});
}

void require_positive(const ModelContainer& c, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (c.hp_int(k) <= 0) {
      throw ValidationError(std::string("hyperparameter \"") + k + "\" must be positive");
    }
  }
}

void rnnt_specs(const ModelContainer& c, std::vector<TensorSpec>& out) {
  require_positive(c, {"feature_dim", "enc_layers", "enc_hidden", "embed_dim", "pred_layers",
                       "pred_hidden", "joint_dim"});
  const auto v = c.vocabulary.size();
  const bool ln = c.hp_bool("layer_norm", false);
  const auto enc_hidden = c.hp_int("enc_hidden");
  for (std::int64_t k = 0; k < c.hp_int("enc_layers"); ++k) {
    add_lstm(out, "enc.l" + std::to_string(k), k == 0 ? c.hp_int("feature_dim") : enc_hidden,
             enc_hidden);
  }
  std::int64_t enc_out = enc_hidden;
  if (c.hp_int("enc_out_dim") > 0) {
    if (ln) {
      out.push_back({"enc.ln.gamma", {enc_hidden}});
      out.push_back({"enc.ln.beta", {enc_hidden}});
    }
    enc_out = c.hp_int("enc_out_dim");
    out.push_back({"enc.proj.W", {enc_out, enc_hidden}});
    out.push_back({"enc.proj.b", {enc_out}});
  }
  out.push_back({"pred.embed", {v, c.hp_int("embed_dim")}});
  const auto pred_hidden = c.hp_int("pred_hidden");
  for (std::int64_t k = 0; k < c.hp_int("pred_layers"); ++k) {
    add_lstm(out, "pred.l" + std::to_string(k), k == 0 ? c.hp_int("embed_dim") : pred_hidden,
             pred_hidden);
  }
  std::int64_t pred_out = pred_hidden;
  if (c.hp_int("pred_out_dim") > 0) {
    if (ln) {
      out.push_back({"pred.ln.gamma", {pred_hidden}});
      out.push_back({"pred.ln.beta", {pred_hidden}});
    }
    pred_out = c.hp_int("pred_out_dim");
    out.push_back({"pred.proj.W", {pred_out, pred_hidden}});
    out.push_back({"pred.proj.b", {pred_out}});
  }
  const auto joint = c.hp_int("joint_dim");
  out.push_back({"joint.W_e", {joint, enc_out}});
  out.push_back({"joint.b_e", {joint}});
  out.push_back({"joint.W_p", {joint, pred_out}});
  out.push_back({"joint.b_p", {joint}});
  out.push_back({"joint.W_j", {v + 1, joint}});
  out.push_back({"joint.b_j", {v + 1}});
}

void aed_specs(const ModelContainer& c, std::vector<TensorSpec>& out) {
  require_positive(c, {"feature_dim", "enc_layers", "enc_hidden", "enc_dim", "dec_layers",
                       "dec_hidden", "att_dim"});
  const auto v = c.vocabulary.size();
  const bool ln = c.hp_bool("layer_norm", false);
  const auto enc_hidden = c.hp_int("enc_hidden");
  const auto enc_dim = c.hp_int("enc_dim");
  for (std::int64_t k = 0; k < c.hp_int("enc_layers"); ++k) {
    const std::string p = "enc.l" + std::to_string(k);
    const auto in = k == 0 ? c.hp_int("feature_dim") : enc_dim;
    add_lstm(out, p + ".fwd", in, enc_hidden);
    add_lstm(out, p + ".bwd", in, enc_hidden);
    out.push_back({p + ".proj.W", {enc_dim, 2 * enc_hidden}});
    out.push_back({p + ".proj.b", {enc_dim}});
    if (ln) {
      out.push_back({p + ".ln.gamma", {enc_dim}});
      out.push_back({p + ".ln.beta", {enc_dim}});
    }
  }
  const auto dec_hidden = c.hp_int("dec_hidden");
  out.push_back({"dec.embed", {v, enc_dim}});
  for (std::int64_t k = 0; k < c.hp_int("dec_layers"); ++k) {
    add_lstm(out, "dec.l" + std::to_string(k), k == 0 ? enc_dim : dec_hidden, dec_hidden);
  }
  out.push_back({"dec.W_d", {v, dec_hidden}});
  out.push_back({"dec.b_d", {v}});
  const auto att = c.hp_int("att_dim");
  out.push_back({"att.W_q", {att, dec_hidden}});
  out.push_back({"att.W_k", {att, enc_dim}});
  out.push_back({"att.b", {att}});
  out.push_back({"att.v", {att}});
}

void lm_specs(const ModelContainer& c, std::vector<TensorSpec>& out) {
  require_positive(c, {"embed_dim", "layers", "hidden"});
  const auto v = c.vocabulary.size();
  const auto hidden = c.hp_int("hidden");
  out.push_back({"lm.embed", {v, c.hp_int("embed_dim")}});
  for (std::int64_t k = 0; k < c.hp_int("layers"); ++k) {
    add_lstm(out, "lm.l" + std::to_string(k), k == 0 ? c.hp_int("embed_dim") : hidden, hidden);
  }
  std::int64_t top = hidden;
  if (c.hp_int("proj_dim") > 0) {
    top = c.hp_int("proj_dim");
    out.push_back({"lm.proj.W", {top, hidden}});
    out.push_back({"lm.proj.b", {top}});
  }
  if (c.hp_bool("tied_embeddings", false)) {
    if (top != c.hp_int("embed_dim")) {
      throw ValidationError("tied embeddings need embed_dim equal to the top layer size");
    }
  } else {
    out.push_back({"lm.W_out", {v, top}});
  }
  out.push_back({"lm.b_out", {v}});
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

std::size_t align_up(std::size_t n) {
  return (n + kPayloadAlignment - 1) / kPayloadAlignment * kPayloadAlignment;
}

}  // namespace

ModelKind parse_model_kind(const std::string& name) {
  if (name == "rnnt") return ModelKind::kRnnt;
  if (name == "aed") return ModelKind::kAed;
  if (name == "lm") return ModelKind::kLm;
  if (name == "features") return ModelKind::kFeatures;
  throw FormatError("unknown container kind \"" + name + "\"");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kRnnt: return "rnnt";
    case ModelKind::kAed: return "aed";
    case ModelKind::kLm: return "lm";
    case ModelKind::kFeatures: return "features";
  }
  return "?";
}

const Tensor& ModelContainer::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("missing tensor " + name);
  return it->second;
}

std::int64_t ModelContainer::hp_int(const std::string& key) const {
  auto it = hyperparams.find(key);
  if (it == hyperparams.end()) return 0;
  if (!it->is_number_integer()) {
    throw ValidationError("hyperparameter \"" + key + "\" must be an integer");
  }
  return it->get<std::int64_t>();
}

bool ModelContainer::hp_bool(const std::string& key, bool fallback) const {
  auto it = hyperparams.find(key);
  if (it == hyperparams.end()) return fallback;
  if (!it->is_boolean()) throw ValidationError("hyperparameter \"" + key + "\" must be a boolean");
  return it->get<bool>();
}

std::string ModelContainer::hp_string(const std::string& key) const {
  auto it = hyperparams.find(key);
  if (it == hyperparams.end() || !it->is_string()) {
    throw ValidationError("hyperparameter \"" + key + "\" must be a string");
  }
  return it->get<std::string>();
}

std::vector<TensorSpec> required_tensors(const ModelContainer& c) {
  std::vector<TensorSpec> out;
  switch (c.kind) {
    case ModelKind::kRnnt: rnnt_specs(c, out); break;
    case ModelKind::kAed: aed_specs(c, out); break;
    case ModelKind::kLm: lm_specs(c, out); break;
    case ModelKind::kFeatures: break;
  }
  return out;
}

void validate_container(const ModelContainer& c) {
  if (!c.hyperparams.is_object()) throw ValidationError("hyperparams must be an object");
  for (const auto& [name, t] : c.tensors) {
    if (static_cast<std::int64_t>(t.size()) != element_count(t.shape())) {
      throw ValidationError("tensor " + name + " payload does not match its shape");
    }
    require_finite(t.data(), name.c_str());
  }
  if (c.kind == ModelKind::kFeatures) {
    if (c.tensors.size() != 1 || !c.has("features")) {
      throw ValidationError("feature container must hold exactly one tensor named features");
    }
    const auto& f = c.tensor("features");
    if (f.rank() != 2 || f.dim(0) < 1 || f.dim(1) < 1) {
      throw ValidationError("features tensor must be [T >= 1, dim >= 1], got " +
                            shape_string(f.shape()));
    }
    return;
  }
  if (c.vocabulary.size() < 2) throw ValidationError("model container needs a vocabulary");
  if (c.kind == ModelKind::kRnnt) kernels::parse_activation(c.hp_string("activation"));

  const auto specs = required_tensors(c);
  for (const auto& spec : specs) {
    auto it = c.tensors.find(spec.name);
    if (it == c.tensors.end()) throw ValidationError("missing tensor " + spec.name);
    if (it->second.shape() != spec.shape) {
      throw ValidationError("tensor " + spec.name + " has shape " +
                            shape_string(it->second.shape()) + ", expected " +
                            shape_string(spec.shape));
    }
  }
  if (specs.size() != c.tensors.size()) {
    for (const auto& [name, t] : c.tensors) {
      bool known = false;
      for (const auto& spec : specs) known = known || spec.name == name;
      if (!known) throw ValidationError("unexpected tensor " + name);
    }
  }
}

std::uint64_t payload_checksum(const ModelContainer& c) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, t] : c.tensors) {
    h = fnv1a(reinterpret_cast<const std::uint8_t*>(t.data().data()), t.size() * sizeof(float), h);
  }
  return h;
}

std::vector<std::uint8_t> serialize_container(const ModelContainer& c) {
  nlohmann::json header;
  header["kind"] = model_kind_name(c.kind);
  header["hyperparams"] = c.hyperparams;
  auto tensors = nlohmann::json::array();
  for (const auto& [name, t] : c.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"}});
  }
  header["tensors"] = std::move(tensors);
  if (c.kind != ModelKind::kFeatures) {
    nlohmann::json vocab;
    vocab["tokens"] = c.vocabulary.tokens();
    vocab["sos_id"] = c.vocabulary.sos_id();
    vocab["eos_id"] = c.vocabulary.eos_id();
    if (c.kind == ModelKind::kRnnt) vocab["blank_id"] = c.vocabulary.blank_id();
    header["vocabulary"] = std::move(vocab);
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.resize(align_up(out.size()), 0);
  for (const auto& [name, t] : c.tensors) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    out.insert(out.end(), p, p + t.size() * sizeof(float));
  }
  put<std::uint64_t>(out, payload_checksum(c));
  return out;
}

ModelContainer parse_container(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 16) throw IoError(origin + ": truncated container header");
  if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0) {
    throw FormatError(origin + ": bad magic, not an ILMC container");
  }
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kContainerVersion) {
    throw FormatError(origin + ": unsupported container version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - 16) throw IoError(origin + ": truncated container header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16,
                                   bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": unparseable header: " + e.what());
  }

  ModelContainer c;
  std::vector<std::pair<std::string, Shape>> layout;
  try {
    c.kind = parse_model_kind(header.at("kind").get<std::string>());
    c.hyperparams = header.value("hyperparams", nlohmann::json::object());
    for (const auto& entry : header.at("tensors")) {
      if (entry.value("dtype", "f32") != "f32") {
        throw FormatError(origin + ": unsupported dtype for " + entry.at("name").get<std::string>());
      }
      layout.emplace_back(entry.at("name").get<std::string>(), entry.at("shape").get<Shape>());
    }
    if (c.kind != ModelKind::kFeatures) {
      const auto& vocab = header.at("vocabulary");
      c.vocabulary = Vocabulary(vocab.at("tokens").get<std::vector<std::string>>());
      if (vocab.at("sos_id").get<TokenId>() != Vocabulary::kSosId ||
          vocab.at("eos_id").get<TokenId>() != Vocabulary::kEosId) {
        throw ValidationError(origin + ": <sos> and <eos> must have ids 0 and 1");
      }
      if (c.kind == ModelKind::kRnnt &&
          vocab.at("blank_id").get<TokenId>() != c.vocabulary.blank_id()) {
        throw ValidationError(origin + ": blank_id must equal vocabulary size " +
                              std::to_string(c.vocabulary.size()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": malformed header: " + e.what());
  }

  std::size_t offset = align_up(16 + header_len);
  std::uint64_t checksum = kFnvOffset;
  for (auto& [name, shape] : layout) {
    const auto count = static_cast<std::size_t>(element_count(shape));
    const std::size_t nbytes = count * sizeof(float);
    if (offset + nbytes > bytes.size()) throw IoError(origin + ": truncated payload at " + name);
    std::vector<float> data(count);
    std::memcpy(data.data(), bytes.data() + offset, nbytes);
    checksum = fnv1a(bytes.data() + offset, nbytes, checksum);
    offset += nbytes;
    if (!c.tensors.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw FormatError(origin + ": duplicate tensor " + name);
    }
  }
  if (offset + 8 > bytes.size()) throw IoError(origin + ": truncated checksum");
  if (get<std::uint64_t>(bytes, offset) != checksum) {
    throw FormatError(origin + ": payload checksum mismatch");
  }
  if (offset + 8 != bytes.size()) throw FormatError(origin + ": trailing bytes after checksum");

  try {
    validate_container(c);
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return c;
}

ModelContainer load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return parse_container(bytes, path.string());
}

void save_container(const ModelContainer& c, const std::filesystem::path& path) {
  validate_container(c);
  const auto bytes = serialize_container(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ModelContainer make_feature_container(Tensor features) {
  ModelContainer c;
  c.kind = ModelKind::kFeatures;
  c.tensors.emplace("features", std::move(features));
  return c;
}

}  // namespace ilmfuse
