#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "kgfuse/checkpoint.hpp"
#include "kgfuse/error.hpp"
#include "kgfuse/io.hpp"

namespace kgfuse {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'M', 'K'};

template <typename T>
void put(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(bits & 0xFF));
    bits = static_cast<U>(bits >> 8);
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::make_unsigned_t<T>>(
          static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i]))
          << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view phase_name(Phase phase) {
  return phase == Phase::kPretrained ? "pretrained" : "finetuned";
}

const NamedTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(ckpt.phase));
  if (ckpt.config_text.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ContractError("config text too long for a checkpoint");
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
  out += ckpt.config_text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ContractError("tensor name too long: " + t.name.substr(0, 32));
    }
    std::size_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.values.size() || t.dims.size() > 255) {
      throw ContractError("tensor '" + t.name + "' dims do not match its values");
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint32_t>(out, d);
    for (double v : t.values) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  for (auto s : ckpt.rng) put<std::uint64_t>(out, s);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != std::string_view(kMagic, 4)) {
    throw FormatError("not a checkpoint (bad magic bytes)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  const auto phase = r.get<std::uint8_t>("phase");
  if (phase > 1) throw FormatError("unknown checkpoint phase " + std::to_string(phase));
  ckpt.phase = static_cast<Phase>(phase);
  ckpt.config_text = std::string(r.take(r.get<std::uint32_t>("config length"), "config text"));
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = std::string(r.take(r.get<std::uint16_t>("name length"), "tensor name"));
    const auto rank = r.get<std::uint8_t>("rank");
    std::size_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.get<std::uint32_t>("dims"));
      n *= t.dims.back();
    }
    if (n > bytes.size() / 8) throw FormatError("tensor '" + t.name + "' is larger than the file");
    t.values.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      t.values.push_back(std::bit_cast<double>(r.get<std::uint64_t>("tensor values")));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  for (auto& s : ckpt.rng) s = r.get<std::uint64_t>("rng state");
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place at '" + path.string() + "'");
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace kgfuse
