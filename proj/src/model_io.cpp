#include "gace/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gace {

namespace {

constexpr char kMagic[4] = {'G', 'A', 'C', 'E'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }
  void put_bytes(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw ModelFormatError("model file truncated at byte " + std::to_string(pos_));
    }
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void write_mlp(Writer& w, const MlpParams& mlp) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(mlp.layers.size()));
  for (const auto& l : mlp.layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.out_dim()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.in_dim()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.activation));
  }
}

void write_payload(Writer& w, const MlpParams& mlp) {
  for (const auto& l : mlp.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.put<float>(static_cast<float>(l.weight(r, c)));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.put<float>(static_cast<float>(l.bias(r)));
  }
}

MlpParams read_mlp_header(Reader& r) {
  const auto layers = r.get<std::uint32_t>();
  if (layers == 0 || layers > 16) throw ModelFormatError("implausible layer count");
  MlpParams mlp;
  for (std::uint32_t k = 0; k < layers; ++k) {
    const auto out = r.get<std::uint32_t>();
    const auto in = r.get<std::uint32_t>();
    const auto act = r.get<std::uint8_t>();
    if (act > static_cast<std::uint8_t>(Activation::kLogistic)) throw ModelFormatError("unknown activation");
    if (out == 0 || in == 0 || out > (1u << 16) || in > (1u << 16)) throw ModelFormatError("implausible layer shape");
    DenseLayer<double> l;
    l.weight = Eigen::MatrixXd::Zero(out, in);
    l.bias = Eigen::VectorXd::Zero(out);
    l.activation = static_cast<Activation>(act);
    mlp.layers.push_back(std::move(l));
  }
  return mlp;
}

void read_payload(Reader& r, MlpParams& mlp) {
  for (auto& l : mlp.layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(i, c) = r.get<float>();
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = r.get<float>();
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const GaceModel& model) {
  model.validate();
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(GaceModel::kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.shape.hidden));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.shape.instance_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.shape.context_dim));
  const NormConfig& n = model.norm;
  w.put<double>(n.max_range);
  w.put<double>(n.z_lo);
  w.put<double>(n.z_hi);
  for (double d : n.max_dims) w.put<double>(d);
  w.put<double>(n.max_points);
  w.put<double>(n.radius);
  w.put<std::uint32_t>(n.class_count);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(n.stat_channels.size()));
  for (auto c : n.stat_channels.channels()) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
  w.put<std::uint8_t>(n.use_elongation ? 1 : 0);
  w.put<std::uint8_t>(model.groups.bits());
  w.put<std::uint8_t>(model.params.use_context ? 1 : 0);
  w.put<std::uint64_t>(model.seed);
  write_mlp(w, model.params.instance_net);
  write_mlp(w, model.params.context_net);
  write_mlp(w, model.params.fusion_net);
  write_payload(w, model.params.instance_net);
  write_payload(w, model.params.context_net);
  write_payload(w, model.params.fusion_net);
  return w.take();
}

GaceModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ModelFormatError("not a GACE model (bad magic)");
  }
  Reader r(bytes);
  for (int i = 0; i < 4; ++i) r.get<std::uint8_t>();
  const auto version = r.get<std::uint32_t>();
  if (version != GaceModel::kFormatVersion) {
    throw ModelFormatError("unsupported model format version " + std::to_string(version));
  }
  GaceModel m;
  m.shape.hidden = r.get<std::uint32_t>();
  m.shape.instance_dim = r.get<std::uint32_t>();
  m.shape.context_dim = r.get<std::uint32_t>();
  NormConfig& n = m.norm;
  n.max_range = r.get<double>();
  n.z_lo = r.get<double>();
  n.z_hi = r.get<double>();
  for (double& d : n.max_dims) d = r.get<double>();
  n.max_points = r.get<double>();
  n.radius = r.get<double>();
  n.class_count = r.get<std::uint32_t>();
  const auto channel_count = r.get<std::uint8_t>();
  if (channel_count > 5) throw ModelFormatError("too many statistics channels");
  std::vector<StatChannel> channels;
  for (std::uint8_t i = 0; i < channel_count; ++i) {
    const auto c = r.get<std::uint8_t>();
    if (c > static_cast<std::uint8_t>(StatChannel::kElongation)) throw ModelFormatError("unknown channel");
    channels.push_back(static_cast<StatChannel>(c));
  }
  try {
    n.stat_channels = ChannelSet(std::move(channels));
  } catch (const std::invalid_argument& e) {
    throw ModelFormatError(e.what());
  }
  n.use_elongation = r.get<std::uint8_t>() != 0;
  m.groups = FeatureGroups::from_bits(r.get<std::uint8_t>());
  m.params.use_context = r.get<std::uint8_t>() != 0;
  m.seed = r.get<std::uint64_t>();
  m.params.instance_net = read_mlp_header(r);
  m.params.context_net = read_mlp_header(r);
  m.params.fusion_net = read_mlp_header(r);
  read_payload(r, m.params.instance_net);
  read_payload(r, m.params.context_net);
  read_payload(r, m.params.fusion_net);
  if (!r.at_end()) throw ModelFormatError("trailing bytes after model payload");
  try {
    n.validate();
    const auto mask = ablation_mask(m.groups, n);
    m.params.input_mask = Eigen::Map<const Eigen::VectorXd>(mask.data(), static_cast<Eigen::Index>(mask.size()));
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ModelFormatError(std::string("inconsistent model file: ") + e.what());
  }
  return m;
}

void save_model(const GaceModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

GaceModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace gace
