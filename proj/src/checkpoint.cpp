#include "headmotion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

#include "headmotion/detail/text.hpp"
#include "headmotion/error.hpp"

namespace headmotion::nn {

namespace {

constexpr char kMagic[8] = {'H', 'M', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  void need(std::size_t n) const {
    if (pos_ + n > end_) throw Error(ErrorKind::Integrity, "checkpoint is truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> parse_ints(std::string_view text) {
  std::vector<int> out;
  for (auto f : detail::split_csv(text)) {
    const auto v = detail::parse_double(f);
    if (!v) throw Error(ErrorKind::Parse, "bad integer list '" + std::string(text) + "'");
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

}  // namespace

std::string describe(const ModelInfo& info) {
  std::ostringstream s;
  s << "block_channels = " << join_ints(info.net.block_channels) << '\n'
    << "head_channels = " << info.net.head_channels << '\n'
    << "output_bins = " << info.net.output_bins << '\n'
    << "dropout_rate = " << detail::format_double(info.net.dropout_rate) << '\n'
    << "norm = " << to_string(info.net.norm) << '\n'
    << "head = " << to_string(info.net.head) << '\n'
    << "net_seed = " << info.net.seed << '\n'
    << "bin_min = " << detail::format_double(info.grid.min) << '\n'
    << "bin_max = " << detail::format_double(info.grid.max) << '\n'
    << "bin_count = " << info.grid.count << '\n'
    << "sigma = " << detail::format_double(info.sigma) << '\n'
    << "preprocess = " << prep::to_string(info.preprocess) << '\n'
    << "target = " << io::to_string(info.target) << '\n';
  return s.str();
}

ModelInfo parse_model_info(const std::string& text) {
  ModelInfo info;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Parse, "config line without '=': " + line);
    const std::string key(detail::trim(std::string_view(line).substr(0, eq)));
    const std::string value(detail::trim(std::string_view(line).substr(eq + 1)));
    auto number = [&]() {
      const auto v = detail::parse_double(value);
      if (!v) throw Error(ErrorKind::Parse, "config key " + key + " is not numeric");
      return *v;
    };
    if (key == "block_channels") info.net.block_channels = parse_ints(value);
    else if (key == "head_channels") info.net.head_channels = static_cast<int>(number());
    else if (key == "output_bins") info.net.output_bins = static_cast<int>(number());
    else if (key == "dropout_rate") info.net.dropout_rate = number();
    else if (key == "norm") info.net.norm = parse_norm(value);
    else if (key == "head") info.net.head = parse_head(value);
    else if (key == "net_seed") info.net.seed = std::stoull(value);
    else if (key == "bin_min") info.grid.min = number();
    else if (key == "bin_max") info.grid.max = number();
    else if (key == "bin_count") info.grid.count = static_cast<int>(number());
    else if (key == "sigma") info.sigma = number();
    else if (key == "preprocess") info.preprocess = prep::parse_preprocess(value);
    else if (key == "target") info.target = io::parse_target(value);
    else throw Error(ErrorKind::Parse, "unknown config key '" + key + "'");
  }
  info.net.validate();
  info.grid.validate();
  return info;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  for (const auto& p : ckpt.params) {
    std::size_t n = 1;
    for (int d : p.shape) n *= static_cast<std::size_t>(d);
    if (n != p.values.size()) throw Error(ErrorKind::ShapeMismatch, "tensor " + p.name + " size disagrees with shape");
  }
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.str(describe(ckpt.info));
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.u8(p.trainable ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    w.u64(p.values.size());
    for (double v : p.values) w.f64(v);
  }
  auto& buf = w.buffer();
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size()));
  w.u32(static_cast<std::uint32_t>(crc));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 8 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::Integrity, path.string() + " is not a checkpoint");
  }
  const std::size_t body = buf.size() - 4;
  Reader tail(buf, buf.size());
  tail.skip(body);
  const auto stored = tail.u32();
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(body));
  if (stored != static_cast<std::uint32_t>(crc)) {
    throw Error(ErrorKind::Integrity, path.string() + ": checksum mismatch");
  }
  Reader r(buf, body);
  r.skip(sizeof(kMagic));
  const auto version = r.u32();
  if (version != kVersion) {
    throw Error(ErrorKind::Integrity, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.info = parse_model_info(r.str());
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamTensor p;
    p.name = r.str();
    p.trainable = r.u8() != 0;
    const auto ndims = r.u32();
    std::size_t expected = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      p.shape.push_back(static_cast<int>(r.u32()));
      expected *= static_cast<std::size_t>(p.shape.back());
    }
    const auto n = r.u64();
    if (n != expected) throw Error(ErrorKind::Integrity, "tensor " + p.name + " size disagrees with shape");
    r.need(n * 8);
    p.values.resize(n);
    for (auto& v : p.values) v = r.f64();
    ckpt.params.push_back(std::move(p));
  }
  if (r.pos() != body) throw Error(ErrorKind::Integrity, "trailing bytes in checkpoint");
  const auto ref = init_params(ckpt.info.net);
  if (ref.size() != ckpt.params.size()) {
    throw Error(ErrorKind::Integrity, "tensor count does not match the stored configuration");
  }
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i].name != ckpt.params[i].name || ref[i].shape != ckpt.params[i].shape) {
      throw Error(ErrorKind::Integrity, "tensor " + ckpt.params[i].name + " does not match the configuration");
    }
  }
  return ckpt;
}

}  // namespace headmotion::nn
