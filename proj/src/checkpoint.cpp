#include "hft/checkpoint.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace hft {

using nlohmann::json;

namespace {

constexpr std::uint64_t kCrcPoly = 0x42f0e1eba9ea3693ull;  // ECMA-182

const std::array<std::uint64_t, 256>& crc_table() {
  static const std::array<std::uint64_t, 256> table = [] {
    std::array<std::uint64_t, 256> t{};
    for (int i = 0; i < 256; ++i) {
      std::uint64_t c = static_cast<std::uint64_t>(i) << 56;
      for (int b = 0; b < 8; ++b) {
        c = (c & 0x8000000000000000ull) ? (c << 1) ^ kCrcPoly : c << 1;
      }
      t[i] = c;
    }
    return t;
  }();
  return table;
}

constexpr std::size_t kAlign = 64;

std::size_t align_up(std::size_t n) { return (n + kAlign - 1) / kAlign * kAlign; }

std::vector<std::uint8_t> tensor_bytes(const Tensor& t) {
  std::vector<std::uint8_t> out;
  if (t.dtype() == DType::F32) {
    out.resize(t.size() * 4);
    for (std::int64_t i = 0; i < t.size(); ++i) {
      const float f = static_cast<float>(t.data()[i]);
      std::memcpy(out.data() + i * 4, &f, 4);
    }
  } else {
    out.resize(t.size() * 8);
    std::memcpy(out.data(), t.data(), out.size());
  }
  return out;
}

json config_to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
              {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
              {"d_ff", c.d_ff},             {"max_seq_len", c.max_seq_len},
              {"dtype", dtype_name(c.dtype)}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.dtype = dtype_from_name(j.at("dtype").get<std::string>());
  return c;
}

json history_to_json_obj(const SelectionHistory& history) {
  json arr = json::array();
  for (const auto& p : history.plans) {
    json frozen = json::array();
    for (const auto& n : p.frozen) frozen.push_back(n);
    arr.push_back(json{{"round", p.round_index},
                       {"strategy", sel_strategy_name(p.strategy)},
                       {"seed", p.seed},
                       {"ratio", p.ratio},
                       {"freeze_io", p.freeze_io},
                       {"frozen", frozen}});
  }
  return arr;
}

SelectionHistory history_from_json_obj(const json& arr,
                                       const std::vector<std::string>& all_names) {
  SelectionHistory h;
  for (const auto& jp : arr) {
    SelectionPlan p;
    p.round_index = jp.at("round").get<int>();
    p.strategy = sel_strategy_from_name(jp.at("strategy").get<std::string>());
    p.seed = jp.at("seed").get<std::uint64_t>();
    p.ratio = jp.value("ratio", 0.5);
    p.freeze_io = jp.at("freeze_io").get<bool>();
    for (const auto& n : jp.at("frozen")) p.frozen.insert(n.get<std::string>());
    for (const auto& n : all_names) {
      if (!p.frozen.count(n)) p.trainable.insert(n);
    }
    h.push(std::move(p));
  }
  return h;
}

}  // namespace

std::uint64_t crc64(const void* data, std::size_t len) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  const auto& table = crc_table();
  std::uint64_t crc = 0;
  for (std::size_t i = 0; i < len; ++i) {
    crc = table[static_cast<std::uint8_t>(crc >> 56) ^ p[i]] ^ (crc << 8);
  }
  return crc;
}

std::string selection_history_to_json(const SelectionHistory& history) {
  return history_to_json_obj(history).dump();
}

SelectionHistory selection_history_from_json(const std::string& text) {
  const json arr = json::parse(text);
  std::set<std::string> names;
  for (const auto& jp : arr) {
    for (const auto& n : jp.at("frozen")) names.insert(n.get<std::string>());
  }
  return history_from_json_obj(arr, {names.begin(), names.end()});
}

std::size_t save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto& reg = ckpt.registry;

  json index = json::object();
  json order = json::array();
  std::vector<std::vector<std::uint8_t>> payload_parts;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < reg.count(); ++i) {
    const auto& e = reg.entry(i);
    if (!e.tensor.all_finite()) {
      throw CheckpointError("refusing to serialize non-finite tensor: " + e.name);
    }
    auto bytes = tensor_bytes(e.tensor);
    offset = align_up(offset);
    char crc_hex[32];
    std::snprintf(crc_hex, sizeof crc_hex, "%016llx",
                  static_cast<unsigned long long>(crc64(bytes.data(), bytes.size())));
    index[e.name] = json{{"category", category_name(e.category)},
                         {"layer", e.layer},
                         {"shape", e.tensor.shape()},
                         {"dtype", dtype_name(e.tensor.dtype())},
                         {"byte_offset", offset},
                         {"byte_length", bytes.size()},
                         {"crc64", crc_hex}};
    order.push_back(e.name);
    offset += bytes.size();
    payload_parts.push_back(std::move(bytes));
  }

  json meta = json::object();
  if (!ckpt.metadata_json.empty()) meta = json::parse(ckpt.metadata_json);

  json header{{"format_version", kCheckpointFormatVersion},
              {"model_config", config_to_json(ckpt.config)},
              {"tensors", index},
              {"tensor_order", order},
              {"selection_history", history_to_json_obj(ckpt.history)},
              {"run_metadata", meta}};
  const std::string header_str = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open for writing: " + path);

  std::uint64_t hlen = header_str.size();
  std::uint8_t hlen_le[8];
  for (int i = 0; i < 8; ++i) hlen_le[i] = static_cast<std::uint8_t>(hlen >> (8 * i));
  f.write(reinterpret_cast<const char*>(hlen_le), 8);
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

  // Pad so the payload region starts 64-byte aligned in the file.
  std::size_t written = 8 + header_str.size();
  const std::size_t payload_start = align_up(written);
  for (; written < payload_start; ++written) f.put('\0');

  std::size_t pos = 0;
  for (const auto& part : payload_parts) {
    const std::size_t aligned = align_up(pos);
    for (; pos < aligned; ++pos) f.put('\0');
    f.write(reinterpret_cast<const char*>(part.data()),
            static_cast<std::streamsize>(part.size()));
    pos += part.size();
  }
  if (!f) throw CheckpointError("write failure: " + path);
  return payload_start + pos;
}

Checkpoint load_checkpoint(const std::string& path, std::optional<DType> convert_to) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open: " + path);
  std::uint8_t hlen_le[8];
  if (!f.read(reinterpret_cast<char*>(hlen_le), 8)) {
    throw CheckpointError("truncated file: missing header length");
  }
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= static_cast<std::uint64_t>(hlen_le[i]) << (8 * i);
  std::string header_str(hlen, '\0');
  if (!f.read(header_str.data(), static_cast<std::streamsize>(hlen))) {
    throw CheckpointError("truncated file: incomplete header");
  }
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed header JSON: ") + e.what());
  }
  const int version = header.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported format version " + std::to_string(version));
  }

  Checkpoint ckpt;
  ckpt.format_version = version;
  ckpt.config = config_from_json(header.at("model_config"));

  const std::size_t payload_start = align_up(8 + hlen);
  const json& index = header.at("tensors");
  std::vector<std::string> names;
  std::size_t prev_end = 0;
  for (const auto& jn : header.at("tensor_order")) {
    const std::string name = jn.get<std::string>();
    names.push_back(name);
    const json& ti = index.at(name);
    const std::size_t off = ti.at("byte_offset").get<std::size_t>();
    const std::size_t len = ti.at("byte_length").get<std::size_t>();
    if (off % kAlign != 0 || off < prev_end) {
      throw CheckpointError("bad tensor offset for " + name);
    }
    prev_end = off + len;
    const DType dt = dtype_from_name(ti.at("dtype").get<std::string>());
    std::vector<int> shape = ti.at("shape").get<std::vector<int>>();
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    if (len != static_cast<std::size_t>(n) * dtype_bytes(dt)) {
      throw CheckpointError("byte length does not match shape for " + name);
    }

    std::vector<std::uint8_t> bytes(len);
    f.seekg(static_cast<std::streamoff>(payload_start + off));
    if (!f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(len))) {
      throw CheckpointError("truncated payload for tensor " + name);
    }
    char crc_hex[32];
    std::snprintf(crc_hex, sizeof crc_hex, "%016llx",
                  static_cast<unsigned long long>(crc64(bytes.data(), bytes.size())));
    if (ti.at("crc64").get<std::string>() != crc_hex) {
      throw CheckpointError("checksum mismatch for tensor " + name);
    }

    std::vector<double> data(n);
    if (dt == DType::F32) {
      for (std::int64_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, bytes.data() + i * 4, 4);
        data[i] = v;
      }
    } else {
      std::memcpy(data.data(), bytes.data(), len);
    }

    DType out_dt = dt;
    if (convert_to && *convert_to != dt) out_dt = *convert_to;
    Tensor t = Tensor::from_data(std::move(shape), std::move(data), out_dt);
    ckpt.registry.add(name, category_from_name(ti.at("category").get<std::string>()),
                      ti.at("layer").get<int>(), std::move(t));
  }

  if (convert_to) {
    ckpt.config.dtype = *convert_to;
  } else {
    // Strict policy: session dtype is whatever the file declares; a
    // mixed-dtype file is rejected.
    for (const auto& name : names) {
      if (ckpt.registry.tensor(name).dtype() != ckpt.config.dtype) {
        throw CheckpointError("tensor dtype differs from model dtype (pass an explicit "
                              "conversion to allow): " + name);
      }
    }
  }

  ckpt.history = history_from_json_obj(header.at("selection_history"), names);
  ckpt.metadata_json = header.at("run_metadata").dump();
  return ckpt;
}

}  // namespace hft
