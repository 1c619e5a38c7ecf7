#include "moodseq/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "moodseq/audio_pipeline.hpp"  // DataFormatError

namespace moodseq {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = char((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = char((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[i]) << (8 * i);
  return true;
}

bool get_u64(std::istream& in, std::uint64_t& v) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[i]) << (8 * i);
  return true;
}

[[noreturn]] void truncated(const std::string& path) {
  throw DataFormatError(path + ": truncated checkpoint");
}

}  // namespace

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const ParamList<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string blob = meta.dump();
  put_u32(out, std::uint32_t(blob.size()));
  out.write(blob.data(), std::streamsize(blob.size()));
  for (const auto& p : params) {
    put_u32(out, std::uint32_t(p.name.size()));
    out.write(p.name.data(), std::streamsize(p.name.size()));
    const auto& shape = p.tensor.shape();
    put_u32(out, std::uint32_t(shape.size()));
    std::size_t count = 1;
    for (std::size_t d : shape) {
      put_u64(out, d);
      count *= d;
    }
    static_assert(sizeof(float) == 4);
    auto data = p.tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(4 * count));
  }
  if (!out) throw DataFormatError("write failed for checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw DataFormatError(path + ": not a model checkpoint (bad magic)");
  std::uint32_t version = 0;
  if (!get_u32(in, version)) truncated(path);
  if (version != kCheckpointVersion)
    throw DataFormatError(path + ": unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  std::uint32_t meta_len = 0;
  if (!get_u32(in, meta_len)) truncated(path);
  std::string blob(meta_len, '\0');
  if (!in.read(blob.data(), meta_len)) truncated(path);

  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(path + ": corrupt checkpoint metadata: " + e.what());
  }

  std::uint32_t name_len = 0;
  while (get_u32(in, name_len)) {
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) truncated(path);
    std::uint32_t rank = 0;
    if (!get_u32(in, rank)) truncated(path);
    CheckpointTensor t;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint64_t d = 0;
      if (!get_u64(in, d)) truncated(path);
      t.shape.push_back(std::size_t(d));
      count *= std::size_t(d);
    }
    t.values.resize(count);
    if (!in.read(reinterpret_cast<char*>(t.values.data()), std::streamsize(4 * count)))
      truncated(path);
    if (!ckpt.tensors.emplace(name, std::move(t)).second)
      throw DataFormatError(path + ": duplicate parameter " + name);
  }
  return ckpt;
}

void load_into(ParamList<float>& params, const Checkpoint& ckpt) {
  if (params.size() != ckpt.tensors.size())
    throw DataFormatError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                          " tensors but the model has " + std::to_string(params.size()) +
                          " parameters");
  for (auto& p : params) {
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end())
      throw DataFormatError("checkpoint is missing parameter " + p.name);
    if (it->second.shape != p.tensor.shape())
      throw DataFormatError("checkpoint shape mismatch for " + p.name + ": stored " +
                            shape_str(it->second.shape) + ", model wants " +
                            shape_str(p.tensor.shape()));
    auto& dst = p.tensor.mutable_data();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
  }
}

}  // namespace moodseq
