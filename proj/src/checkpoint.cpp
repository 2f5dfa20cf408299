#include "oplm/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace oplm {

void Checkpoint::put(const std::string& name, Tensor value) {
  if (has(name)) throw ContractError("checkpoint: duplicate tensor " + name);
  tensor_names.push_back(name);
  tensors.push_back(std::move(value));
}

void Checkpoint::put_text(const std::string& name, std::string value) {
  if (has_text(name)) throw ContractError("checkpoint: duplicate text " + name);
  text_names.push_back(name);
  texts.push_back(std::move(value));
}

bool Checkpoint::has(const std::string& name) const {
  return std::find(tensor_names.begin(), tensor_names.end(), name) != tensor_names.end();
}

bool Checkpoint::has_text(const std::string& name) const {
  return std::find(text_names.begin(), text_names.end(), name) != text_names.end();
}

const Tensor& Checkpoint::get(const std::string& name) const {
  const auto it = std::find(tensor_names.begin(), tensor_names.end(), name);
  if (it == tensor_names.end()) throw IoError("checkpoint has no tensor '" + name + "'");
  return tensors[static_cast<std::size_t>(it - tensor_names.begin())];
}

const std::string& Checkpoint::get_text(const std::string& name) const {
  const auto it = std::find(text_names.begin(), text_names.end(), name);
  if (it == text_names.end()) throw IoError("checkpoint has no text '" + name + "'");
  return texts[static_cast<std::size_t>(it - text_names.begin())];
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  if (config_hash != other.config_hash || tensor_names != other.tensor_names || text_names != other.text_names ||
      texts != other.texts) {
    return false;
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& a = tensors[i];
    const auto& b = other.tensors[i];
    if (a.shape() != b.shape()) return false;
    // bitwise, so -0.0 and NaN payloads count
    if (a.size() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

namespace {

static_assert(sizeof(double) == 8);

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_bytes(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  unsigned char u8() {
    need(1);
    return static_cast<unsigned char>(bytes_[pos_++]);
  }
  std::string bytes() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out = "OPLM";
  put_u32(out, kCheckpointVersion);
  put_u64(out, ckpt.config_hash);
  put_u64(out, ckpt.tensors.size() + ckpt.texts.size());
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    out.push_back(0);
    put_bytes(out, ckpt.tensor_names[i]);
    const Tensor& t = ckpt.tensors[i];
    put_u64(out, t.rank());
    for (auto d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  for (std::size_t i = 0; i < ckpt.texts.size(); ++i) {
    out.push_back(1);
    put_bytes(out, ckpt.text_names[i]);
    put_bytes(out, ckpt.texts[i]);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "OPLM") != 0) throw IoError("not a checkpoint (bad magic)");
  Reader r(bytes);
  r.need(4);
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.config_hash = r.u64();
  const std::uint64_t count = r.u64();
  for (std::uint64_t k = 0; k < count; ++k) {
    const unsigned char kind = r.u8();
    std::string name = r.bytes();
    if (kind == 0) {
      const std::uint64_t rank = r.u64();
      if (rank > 8) throw IoError("checkpoint tensor '" + name + "' has implausible rank");
      Shape shape;
      std::uint64_t n = 1;
      for (std::uint64_t d = 0; d < rank; ++d) {
        shape.push_back(static_cast<std::size_t>(r.u64()));
        if (shape.back() != 0 && n > (std::uint64_t{1} << 40) / shape.back()) {
          throw IoError("checkpoint tensor '" + name + "' is implausibly large");
        }
        n *= shape.back();
      }
      r.need(n * 8);
      std::vector<double> data(n);
      for (auto& v : data) v = std::bit_cast<double>(r.u64());
      ckpt.put(name, Tensor(std::move(shape), std::move(data)));
    } else if (kind == 1) {
      ckpt.put_text(name, r.bytes());
    } else {
      throw IoError("checkpoint record of unknown kind " + std::to_string(kind));
    }
  }
  if (!r.done()) throw IoError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    const std::string bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path, std::optional<std::uint64_t> expected_hash, bool force) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  Checkpoint ckpt = deserialize_checkpoint(ss.str());
  if (expected_hash && *expected_hash != ckpt.config_hash && !force) {
    throw IoError("checkpoint " + path + " was written for a different model configuration");
  }
  return ckpt;
}

}  // namespace oplm
