#include "flowguard/model_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace flowguard {

namespace {

constexpr std::array<char, 8> kMagic{'F', 'L', 'W', 'G', 'M', 'D', 'L', '\0'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8 + 8;
constexpr std::uint64_t kMaxCount = 1ULL << 32;

using Kind = ModelFileError::Kind;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    std::array<char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    buf_.append(b.data(), b.size());
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    buf_.append(s);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::array<char, sizeof(T)> b;
    std::memcpy(b.data(), data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
  }
  std::uint64_t count() {
    const auto n = get<std::uint64_t>();
    if (n > kMaxCount) throw ModelFileError(Kind::Malformed, "model file: implausible element count");
    return n;
  }
  std::string get_string() {
    const auto n = count();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ModelFileError(Kind::Malformed, "model file: payload ends early");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string encode_payload(const TrainedEnsemble& e) {
  Writer w;
  w.put<std::uint64_t>(e.embedder.seed());
  w.put<std::uint64_t>(e.embedder.table().size());
  for (const auto& [token, v] : e.embedder.table()) {
    w.put_string(token);
    for (double x : v) w.put(x);
  }
  for (double x : e.stats.min) w.put(x);
  for (double x : e.stats.max) w.put(x);

  const auto& m = e.metadata;
  w.put(m.seed);
  w.put(m.trainFlows);
  w.put(m.validationFlows);
  w.put(m.epochs);
  w.put(m.batchSize);
  w.put(m.learningRate);
  w.put(m.updates);

  w.put<std::uint32_t>(static_cast<std::uint32_t>(e.members.size()));
  for (const auto& member : e.members) {
    const auto& a = member.model.architecture();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.windowSize));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.inputWidth));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.encoderWidths.size()));
    for (int width : a.encoderWidths) w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.activation));
    w.put(member.threshold);
    const auto& p = member.model.parameters();
    w.put<std::uint64_t>(static_cast<std::uint64_t>(p.size()));
    for (Eigen::Index k = 0; k < p.size(); ++k) w.put(p[k]);
  }
  return w.bytes();
}

TrainedEnsemble decode_payload(std::string_view payload) {
  Reader r(payload);
  TrainedEnsemble e;
  e.embedder = CharEmbedder(r.get<std::uint64_t>());
  const auto entries = r.count();
  for (std::uint64_t k = 0; k < entries; ++k) {
    auto token = r.get_string();
    Embedding v;
    for (double& x : v) x = r.get<double>();
    e.embedder.set_entry(token, v);
  }
  for (double& x : e.stats.min) x = r.get<double>();
  for (double& x : e.stats.max) x = r.get<double>();

  auto& m = e.metadata;
  m.seed = r.get<std::uint64_t>();
  m.trainFlows = r.get<std::uint64_t>();
  m.validationFlows = r.get<std::uint64_t>();
  m.epochs = r.get<std::uint32_t>();
  m.batchSize = r.get<std::uint32_t>();
  m.learningRate = r.get<double>();
  m.updates = r.get<std::uint32_t>();

  const auto members = r.get<std::uint32_t>();
  if (members > 16) throw ModelFileError(Kind::Malformed, "model file: implausible member count");
  for (std::uint32_t k = 0; k < members; ++k) {
    Architecture a;
    a.windowSize = static_cast<int>(r.get<std::uint32_t>());
    a.inputWidth = static_cast<int>(r.get<std::uint32_t>());
    const auto layers = r.get<std::uint32_t>();
    if (layers == 0 || layers > 16) throw ModelFileError(Kind::Malformed, "model file: bad layer count");
    a.encoderWidths.clear();
    for (std::uint32_t l = 0; l < layers; ++l) a.encoderWidths.push_back(static_cast<int>(r.get<std::uint32_t>()));
    const auto activation = r.get<std::uint32_t>();
    if (activation > 1) throw ModelFileError(Kind::Malformed, "model file: unknown cell activation");
    a.activation = static_cast<CellActivation>(activation);
    const double threshold = r.get<double>();
    const auto n = r.count();
    try {
      a.validate();
    } catch (const std::invalid_argument& ex) {
      throw ModelFileError(Kind::Malformed, std::string("model file: ") + ex.what());
    }
    if (static_cast<std::uint64_t>(a.parameter_count()) != n)
      throw ModelFileError(Kind::Malformed, "model file: parameter count does not match architecture");
    Eigen::VectorXd p(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = r.get<double>();
    e.members.push_back({SequenceAutoencoder(a, std::move(p)), threshold});
  }
  if (!r.done()) throw ModelFileError(Kind::Malformed, "model file: trailing bytes in payload");
  try {
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw ModelFileError(Kind::Malformed, std::string("model file: ") + ex.what());
  }
  return e;
}

}  // namespace

std::string_view to_string(ModelFileError::Kind kind) {
  switch (kind) {
    case Kind::Io: return "io";
    case Kind::BadMagic: return "bad-magic";
    case Kind::VersionMismatch: return "version-mismatch";
    case Kind::Truncated: return "truncated";
    case Kind::DigestMismatch: return "digest-mismatch";
    case Kind::Malformed: return "malformed";
  }
  return "unknown";
}

void save_ensemble(std::ostream& out, const TrainedEnsemble& ensemble) {
  ensemble.validate();
  const std::string payload = encode_payload(ensemble);
  Writer head;
  for (char c : kMagic) head.put(c);
  head.put<std::uint32_t>(kModelFormatVersion);
  head.put<std::uint64_t>(ensemble.config_digest());
  head.put<std::uint64_t>(payload.size());
  Writer tail;
  tail.put<std::uint64_t>(fnv1a(payload));
  out << head.bytes() << payload << tail.bytes();
  if (!out) throw ModelFileError(Kind::Io, "model file: write failed");
}

TrainedEnsemble load_ensemble(std::istream& in) {
  const std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw ModelFileError(Kind::Io, "model file: read failed");
  if (data.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), data.begin()))
    throw ModelFileError(Kind::BadMagic, "model file: not a model file");
  if (data.size() < kHeaderSize) throw ModelFileError(Kind::Truncated, "model file: header truncated");

  Reader head(std::string_view(data).substr(kMagic.size(), kHeaderSize - kMagic.size()));
  const auto version = head.get<std::uint32_t>();
  if (version != kModelFormatVersion)
    throw ModelFileError(Kind::VersionMismatch, "model file: version " + std::to_string(version) +
                                                    ", expected " + std::to_string(kModelFormatVersion));
  const auto configDigest = head.get<std::uint64_t>();
  const auto length = head.get<std::uint64_t>();
  if (data.size() - kHeaderSize < 8 || data.size() - kHeaderSize - 8 < length)
    throw ModelFileError(Kind::Truncated, "model file: payload truncated");
  if (data.size() - kHeaderSize - 8 != length)
    throw ModelFileError(Kind::Malformed, "model file: trailing bytes after payload");

  const std::string_view payload = std::string_view(data).substr(kHeaderSize, length);
  Reader tail(std::string_view(data).substr(kHeaderSize + length));
  if (tail.get<std::uint64_t>() != fnv1a(payload))
    throw ModelFileError(Kind::DigestMismatch, "model file: payload digest mismatch");

  TrainedEnsemble e = decode_payload(payload);
  if (e.config_digest() != configDigest)
    throw ModelFileError(Kind::DigestMismatch, "model file: configuration digest mismatch");
  return e;
}

void save_ensemble(const std::string& path, const TrainedEnsemble& ensemble) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelFileError(Kind::Io, "cannot open " + tmp + " for writing");
    save_ensemble(out, ensemble);
    out.close();
    if (!out) throw ModelFileError(Kind::Io, "write to " + tmp + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw ModelFileError(Kind::Io, "cannot rename " + tmp + " to " + path);
  }
}

TrainedEnsemble load_ensemble(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFileError(Kind::Io, "cannot open model file " + path);
  return load_ensemble(in);
}

}  // namespace flowguard
