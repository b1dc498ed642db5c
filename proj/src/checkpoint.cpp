#include "daslab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "daslab/errors.hpp"

namespace daslab {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'S', 'L', 'A', 'B', 'C', 'K'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename U>
  void uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  const std::uint8_t* bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw MalformedFileError("checkpoint truncated at byte " + std::to_string(pos_));
    const auto* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U uint() {
    const auto* p = bytes(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const std::size_t count = ckpt.params.values.size();
  if (ckpt.adam.m.size() != count || ckpt.adam.v.size() != count) {
    throw StructuralError("checkpoint: optimizer moments do not match parameters");
  }
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(sizeof(float));
  const std::string spec = to_string(ckpt.spec);
  w.uint<std::uint64_t>(spec.size());
  w.bytes(spec.data(), spec.size());
  w.uint<std::uint64_t>(count);
  for (float v : ckpt.params.values) w.f32(v);
  w.uint<std::uint64_t>(ckpt.adam.t);
  w.f64(ckpt.adam.beta1);
  w.f64(ckpt.adam.beta2);
  w.f64(ckpt.adam.epsilon);
  w.f64(ckpt.adam.learning_rate);
  for (float v : ckpt.adam.m) w.f32(v);
  for (float v : ckpt.adam.v) w.f32(v);
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.bytes(sizeof kMagic), kMagic, sizeof kMagic) != 0) {
    throw MalformedFileError("not a daslab checkpoint (bad magic)");
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw MalformedFileError("unsupported checkpoint version " + std::to_string(version));
  }
  if (r.uint<std::uint32_t>() != sizeof(float)) throw MalformedFileError("unsupported checkpoint scalar width");
  const auto spec_len = r.uint<std::uint64_t>();
  const auto* spec_bytes = r.bytes(spec_len);
  Checkpoint ckpt;
  ckpt.spec = parse_model_spec(std::string(reinterpret_cast<const char*>(spec_bytes), spec_len));
  const auto count = r.uint<std::uint64_t>();
  if (count != parameter_count(ckpt.spec)) {
    throw MalformedFileError("checkpoint parameter count does not match its model spec");
  }
  ckpt.params.layout = parameter_layout(ckpt.spec);
  ckpt.params.values.resize(count);
  for (auto& v : ckpt.params.values) v = r.f32();
  ckpt.adam.t = r.uint<std::uint64_t>();
  ckpt.adam.beta1 = r.f64();
  ckpt.adam.beta2 = r.f64();
  ckpt.adam.epsilon = r.f64();
  ckpt.adam.learning_rate = r.f64();
  ckpt.adam.m.resize(count);
  ckpt.adam.v.resize(count);
  for (auto& v : ckpt.adam.m) v = r.f32();
  for (auto& v : ckpt.adam.v) v = r.f32();
  if (!r.done()) throw MalformedFileError("trailing bytes after checkpoint payload");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace daslab
