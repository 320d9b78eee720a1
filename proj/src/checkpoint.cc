#include "fovb/checkpoint.h"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "fovb/io.h"

namespace fovb {
namespace {

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t GetU32(const std::string& bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i]))
         << (8 * i);
  return v;
}

std::uint32_t Crc32(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n));
  return static_cast<std::uint32_t>(crc);
}

class Cursor {
 public:
  Cursor(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  std::size_t pos() const { return pos_; }
  void Need(std::size_t n) const {
    if (end_ - pos_ < n) throw IntegrityError("checkpoint truncated");
  }
  std::uint32_t U32() {
    Need(4);
    const std::uint32_t v = GetU32(bytes_, pos_);
    pos_ += 4;
    return v;
  }
  std::uint8_t U8() {
    Need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::string Bytes(std::size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void Skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

NamedTensor Meta(const std::string& name, std::vector<double> values) {
  return {"meta/" + name, {values.size()}, std::move(values)};
}

// 64-bit integers are split into exact 32-bit halves.
std::vector<double> SplitU64(std::uint64_t v) {
  return {static_cast<double>(v >> 32), static_cast<double>(v & 0xFFFFFFFFULL)};
}

std::uint64_t JoinU64(const std::vector<double>& v) {
  if (v.size() != 2) throw IntegrityError("malformed 64-bit metadata");
  return (static_cast<std::uint64_t>(v[0]) << 32) | static_cast<std::uint64_t>(v[1]);
}

}  // namespace

std::string EncodeCheckpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kCheckpointMagic, 4);
  PutU32(out, kCheckpointVersion);
  PutU32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (NumElements(t.shape) != t.data.size()) {
      throw ContractError("tensor " + t.name + " data does not match its shape");
    }
    PutU32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    PutU32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) PutU32(out, static_cast<std::uint32_t>(d));
    out.push_back(0);  // dtype: f64 LE
    const std::size_t offset = out.size();
    out.resize(offset + t.data.size() * 8);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &t.data[i], 8);
      for (int b = 0; b < 8; ++b)
        out[offset + i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  PutU32(out, Crc32(out.data(), out.size()));
  return out;
}

std::vector<NamedTensor> DecodeCheckpoint(const std::string& bytes) {
  if (bytes.size() < 16) throw IntegrityError("checkpoint truncated");
  const std::size_t body = bytes.size() - 4;
  if (Crc32(bytes.data(), body) != GetU32(bytes, body)) {
    throw IntegrityError("checkpoint CRC mismatch");
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw IntegrityError("not a FOVB checkpoint");
  }
  Cursor c(bytes, body);
  c.Skip(4);
  const std::uint32_t version = c.U32();
  if (version != kCheckpointVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = c.U32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = c.Bytes(c.U32());
    const std::uint32_t rank = c.U32();
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(c.U32());
    if (c.U8() != 0) throw IntegrityError("unsupported dtype in " + t.name);
    std::size_t n = 1;
    for (std::size_t d : t.shape) {
      if (d == 0 || n > body / d) throw IntegrityError("bad shape for " + t.name);
      n *= d;
    }
    c.Need(n * 8);
    t.data.resize(n);
    const std::string raw = c.Bytes(n * 8);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(raw[k * 8 + b]))
                << (8 * b);
      std::memcpy(&t.data[k], &bits, 8);
    }
    out.push_back(std::move(t));
  }
  if (c.pos() != body) throw IntegrityError("trailing bytes in checkpoint");
  return out;
}

void WriteFile(const std::string& path, const std::string& bytes) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw WriteError("cannot open " + path + " for writing");
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw WriteError("failed writing " + path);
}

std::string ReadFile(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IntegrityError("cannot open " + path);
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return buffer.str();
}

std::vector<NamedTensor> SnapshotTensors(const FovbModel& model,
                                         std::uint64_t seed, std::uint64_t step,
                                         const AdamWState* optimizer) {
  const ModelConfig& m = model.config();
  std::vector<NamedTensor> out;
  out.push_back(Meta("seed", SplitU64(seed)));
  out.push_back(Meta("step", SplitU64(step)));
  out.push_back(Meta("model",
                     {double(m.blocks), double(m.dim), double(m.heads),
                      double(m.patch), double(m.reduction), double(m.vbfe_block),
                      double(m.encoder_blocks), double(m.image_size)}));
  std::vector<double> glfa(m.glfa_blocks.begin(), m.glfa_blocks.end());
  if (glfa.empty()) glfa.push_back(0.0);  // dims must be positive
  out.push_back(Meta("glfa_blocks", glfa));
  out.push_back(Meta("frozen_crc", {double(model.params().FrozenChecksum())}));
  if (optimizer != nullptr) {
    out.push_back(Meta("adam_step", SplitU64(optimizer->step)));
  }
  std::size_t index = 0;
  for (const ParameterStore::Entry& e : model.params().entries()) {
    if (!e.trainable) continue;
    auto data = e.value.data();
    out.push_back({"param/" + e.name, e.value.shape(),
                   std::vector<double>(data.begin(), data.end())});
    if (optimizer != nullptr) {
      out.push_back({"adam_m/" + e.name, e.value.shape(), optimizer->m.at(index)});
      out.push_back({"adam_v/" + e.name, e.value.shape(), optimizer->v.at(index)});
    }
    ++index;
  }
  return out;
}

LoadedCheckpoint RestoreCheckpoint(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const NamedTensor& t : tensors) by_name[t.name] = &t;
  const auto get = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IntegrityError("checkpoint lacks " + name);
    return *it->second;
  };

  LoadedCheckpoint out;
  TrainingSnapshot& snap = out.snapshot;
  snap.seed = JoinU64(get("meta/seed").data);
  snap.step = JoinU64(get("meta/step").data);
  const std::vector<double>& m = get("meta/model").data;
  if (m.size() != 8) throw IntegrityError("malformed model metadata");
  snap.model.blocks = static_cast<std::size_t>(m[0]);
  snap.model.dim = static_cast<std::size_t>(m[1]);
  snap.model.heads = static_cast<std::size_t>(m[2]);
  snap.model.patch = static_cast<std::size_t>(m[3]);
  snap.model.reduction = static_cast<std::size_t>(m[4]);
  snap.model.vbfe_block = static_cast<std::size_t>(m[5]);
  snap.model.encoder_blocks = static_cast<std::size_t>(m[6]);
  snap.model.image_size = static_cast<std::size_t>(m[7]);
  snap.model.glfa_blocks.clear();
  for (double b : get("meta/glfa_blocks").data)
    if (b > 0.0) snap.model.glfa_blocks.push_back(static_cast<std::size_t>(b));
  snap.frozen_checksum =
      static_cast<std::uint32_t>(get("meta/frozen_crc").data.at(0));

  try {
    out.model = std::make_unique<FovbModel>(snap.model, snap.seed);
  } catch (const std::invalid_argument& e) {
    throw IntegrityError(std::string("checkpoint model config invalid: ") + e.what());
  }
  if (out.model->params().FrozenChecksum() != snap.frozen_checksum) {
    throw IntegrityError("regenerated backbone does not match the checkpoint");
  }
  const bool has_optimizer = by_name.count("meta/adam_step") > 0;
  if (has_optimizer) snap.optimizer.step = JoinU64(get("meta/adam_step").data);
  for (const ParameterStore::Entry& e : out.model->params().entries()) {
    if (!e.trainable) continue;
    const NamedTensor& t = get("param/" + e.name);
    if (t.shape != e.value.shape()) {
      throw IntegrityError("shape mismatch for " + e.name);
    }
    Tensor value = e.value;
    std::copy(t.data.begin(), t.data.end(), value.mutable_data().begin());
    if (has_optimizer) {
      const NamedTensor& mt = get("adam_m/" + e.name);
      const NamedTensor& vt = get("adam_v/" + e.name);
      if (mt.data.size() != t.data.size() || vt.data.size() != t.data.size()) {
        throw IntegrityError("optimizer state mismatch for " + e.name);
      }
      snap.optimizer.m.push_back(mt.data);
      snap.optimizer.v.push_back(vt.data);
    }
  }
  return out;
}

void SaveCheckpoint(const std::string& path, const FovbModel& model,
                    std::uint64_t seed, std::uint64_t step,
                    const AdamWState* optimizer) {
  WriteFile(path, EncodeCheckpoint(SnapshotTensors(model, seed, step, optimizer)));
}

LoadedCheckpoint LoadCheckpoint(const std::string& path) {
  return RestoreCheckpoint(DecodeCheckpoint(ReadFile(path)));
}

}  // namespace fovb
