#include "gace/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>

#include "gace/adam.hpp"
#include "gace/parallel.hpp"

namespace gace {

namespace {

constexpr char kStoreMagic[8] = {'G', 'A', 'C', 'E', 'S', 'T', 'O', 'R'};
constexpr std::uint32_t kStoreVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "feature cache serialization assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
void put_array(std::vector<std::uint8_t>& out, const T* data, std::size_t n) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n * sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : b_(b) {}
  template <typename T>
  T get() {
    T v;
    get_array(&v, 1);
    return v;
  }
  template <typename T>
  void get_array(T* data, std::size_t n) {
    const std::size_t bytes = n * sizeof(T);
    if (pos_ + bytes > b_.size()) throw std::runtime_error("feature cache truncated");
    std::memcpy(data, b_.data() + pos_, bytes);
    pos_ += bytes;
  }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

FrameRecord make_record(const Frame& frame, const NormConfig& norm,
                        const IouThresholds& thresholds) {
  if (!frame.ground_truth) {
    throw TrainingError("frame '" + frame.frame_id + "' has no ground truth");
  }
  if (norm.use_elongation && frame.channels < 5) {
    throw TrainingError("frame '" + frame.frame_id +
                        "' has no elongation channel but the feature config uses it");
  }
  FrameRecord r;
  r.frame_id = frame.frame_id;
  r.inputs = build_frame_inputs(frame.detections, frame.points, norm);
  const auto labels = assign_labels(frame.detections, *frame.ground_truth, thresholds);
  r.u.reserve(labels.size());
  r.v.reserve(labels.size());
  for (const auto& l : labels) {
    r.u.push_back(l.u);
    r.v.push_back(l.v);
  }
  return r;
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch < 1) throw std::invalid_argument("batch must be at least 1");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (loss.lambda_iou < 0.0 || loss.focal_gamma < 0.0 || !(loss.focal_alpha > 0.0) ||
      !(loss.focal_alpha < 1.0)) {
    throw std::invalid_argument("invalid loss configuration");
  }
  norm.validate();
}

std::size_t FrameStore::sample_count() const {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.u.size();
  return n;
}

std::vector<std::uint8_t> FrameStore::serialize() const {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kStoreMagic, kStoreMagic + 8);
  put(out, kStoreVersion);
  put(out, norm.digest());
  put(out, static_cast<std::uint64_t>(frames.size()));
  for (const auto& f : frames) {
    put(out, static_cast<std::uint32_t>(f.frame_id.size()));
    put_array(out, f.frame_id.data(), f.frame_id.size());
    const auto& in = f.inputs;
    put(out, static_cast<std::uint32_t>(in.instance.rows()));
    put(out, static_cast<std::uint32_t>(in.instance.cols()));
    put_array(out, in.instance.data(), static_cast<std::size_t>(in.instance.size()));
    put(out, static_cast<std::uint32_t>(in.pair_geometry.rows()));
    put(out, static_cast<std::uint32_t>(in.pair_neighbor.size()));
    put_array(out, in.pair_offsets.data(), in.pair_offsets.size());
    put_array(out, in.pair_neighbor.data(), in.pair_neighbor.size());
    put_array(out, in.pair_geometry.data(), static_cast<std::size_t>(in.pair_geometry.size()));
    put_array(out, f.u.data(), f.u.size());
    put_array(out, f.v.data(), f.v.size());
  }
  return out;
}

FrameStore FrameStore::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kStoreMagic, 8) != 0) {
    throw std::runtime_error("not a feature cache");
  }
  ByteReader r(bytes);
  char magic[8];
  r.get_array(magic, 8);
  if (r.get<std::uint32_t>() != kStoreVersion) throw std::runtime_error("feature cache version");
  r.get<std::uint64_t>();  // digest, checked by load()
  FrameStore store;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    FrameRecord f;
    f.frame_id.resize(r.get<std::uint32_t>());
    r.get_array(f.frame_id.data(), f.frame_id.size());
    const auto rows = r.get<std::uint32_t>();
    const auto n = r.get<std::uint32_t>();
    f.inputs.instance.resize(rows, n);
    r.get_array(f.inputs.instance.data(), static_cast<std::size_t>(f.inputs.instance.size()));
    const auto grows = r.get<std::uint32_t>();
    const auto p = r.get<std::uint32_t>();
    f.inputs.pair_offsets.resize(n + 1);
    f.inputs.pair_neighbor.resize(p);
    f.inputs.pair_geometry.resize(grows, p);
    r.get_array(f.inputs.pair_offsets.data(), n + 1);
    r.get_array(f.inputs.pair_neighbor.data(), p);
    r.get_array(f.inputs.pair_geometry.data(), static_cast<std::size_t>(f.inputs.pair_geometry.size()));
    f.u.resize(n);
    f.v.resize(n);
    r.get_array(f.u.data(), n);
    r.get_array(f.v.data(), n);
    store.frames.push_back(std::move(f));
  }
  if (!r.at_end()) throw std::runtime_error("trailing bytes in feature cache");
  return store;
}

void FrameStore::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing feature cache " + path.string());
}

FrameStore FrameStore::load(const std::filesystem::path& path, const NormConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature cache " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 20) throw std::runtime_error("feature cache truncated");
  std::uint64_t digest = 0;
  std::memcpy(&digest, bytes.data() + 12, sizeof digest);
  if (digest != expected.digest()) {
    throw std::runtime_error("feature cache was built with a different normalization config");
  }
  FrameStore store = deserialize(bytes);
  store.norm = expected;
  return store;
}

FrameStore build_training_set(std::size_t frame_count, const FrameLoader& load,
                              const NormConfig& norm, const IouThresholds& thresholds) {
  norm.validate();
  FrameStore store;
  store.norm = norm;
  store.frames.resize(frame_count);
  parallel_for(frame_count, [&](std::size_t i) {
    store.frames[i] = make_record(load(i), norm, thresholds);
  });
  return store;
}

FrameStore build_training_set(const std::vector<Frame>& frames, const NormConfig& norm,
                              const IouThresholds& thresholds) {
  norm.validate();
  FrameStore store;
  store.norm = norm;
  store.frames.resize(frames.size());
  parallel_for(frames.size(), [&](std::size_t i) {
    store.frames[i] = make_record(frames[i], norm, thresholds);
  });
  return store;
}

void write_epoch_line(std::ostream& out, const EpochStats& s) {
  out << s.epoch << '\t' << std::setprecision(9) << s.total << '\t' << s.focal << '\t'
      << s.iou_l1 << '\t' << std::setprecision(4) << s.seconds << '\n';
}

GaceModel train(const FrameStore& store, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (store.frames.empty()) throw TrainingError("training store is empty");
  if (store.norm.digest() != cfg.norm.digest()) {
    throw TrainingError("training store was built with a different normalization config");
  }
  GaceModel model = GaceModel::create(cfg.norm, cfg.shape, cfg.groups, cfg.use_context, cfg.seed);
  auto param_blocks = parameter_blocks(model.params);
  AdamState adam = AdamState::zeros_like(param_blocks);
  const AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8};
  const BackwardOptions backward{cfg.detach_neighbor_embeddings, false};

  const std::size_t slots = std::min(cfg.batch, store.frames.size());
  std::vector<GaceGradients> slot_grads(slots, GaceGradients::zeros_like(model.params));
  std::vector<LossParts> slot_loss(slots);
  GaceGradients total = GaceGradients::zeros_like(model.params);
  auto total_blocks = parameter_blocks(total);

  std::vector<std::size_t> order(store.frames.size());
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_focal = 0.0, sum_l1 = 0.0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t count = std::min(cfg.batch, order.size() - start);
      std::size_t batch_dets = 0;
      for (std::size_t k = 0; k < count; ++k) batch_dets += store.frames[order[start + k]].u.size();
      if (batch_dets == 0) continue;
      const double normalizer = static_cast<double>(batch_dets);

      parallel_for(count, [&](std::size_t k) {
        const FrameRecord& rec = store.frames[order[start + k]];
        slot_grads[k].set_zero();
        slot_loss[k] = {};
        if (rec.u.empty()) return;
        ForwardState<double> state;
        gace_forward(model.params, rec.inputs, state);
        slot_loss[k] = accumulate_gradients(model.params, rec.inputs, state, rec.u, rec.v,
                                            cfg.loss, normalizer, backward, slot_grads[k]);
      });

      total.set_zero();
      double batch_focal = 0.0, batch_l1 = 0.0;
      for (std::size_t k = 0; k < count; ++k) {
        total.add(slot_grads[k]);
        batch_focal += slot_loss[k].focal;
        batch_l1 += slot_loss[k].iou_l1;
      }
      const double batch_total = batch_focal + cfg.loss.lambda_iou * batch_l1;
      if (!std::isfinite(batch_total)) {
        std::string ids;
        for (std::size_t k = 0; k < count; ++k) {
          ids += (k ? ", " : "") + store.frames[order[start + k]].frame_id;
        }
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) +
                            " on frames [" + ids + "]");
      }
      adam_step(param_blocks, total_blocks, adam, adam_cfg);
      sum_focal += batch_focal;
      sum_l1 += batch_l1;
      seen += batch_dets;
    }

    if (on_epoch) {
      EpochStats s;
      s.epoch = epoch;
      const double n = seen ? static_cast<double>(seen) : 1.0;
      s.focal = sum_focal / n;
      s.iou_l1 = sum_l1 / n;
      s.total = s.focal + cfg.loss.lambda_iou * s.iou_l1;
      s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      on_epoch(s);
    }
  }
  model.round_to_storage_precision();
  return model;
}

Rescorer::Rescorer(const GaceModel& model)
    : model_(model), params_(model.params.cast<float>()) {
  model_.validate();
}

std::vector<double> Rescorer::rescore(const Frame& frame, RescoreTimings* timings) const {
  if (model_.norm.use_elongation && frame.channels < 5) {
    throw std::invalid_argument("frame '" + frame.frame_id +
                                "' has 4 point channels but the model was trained with "
                                "elongation (5 channels)");
  }
  const FrameInputs inputs = build_frame_inputs(frame.detections, frame.points, model_.norm,
                                                timings ? &timings->features : nullptr);
  ForwardState<float> state;
  state.keep_pair_cache = false;
  gace_forward(params_, inputs, state, timings ? &timings->net : nullptr);
  std::vector<double> scores(frame.detections.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = std::clamp(static_cast<double>(state.s_hat(static_cast<Eigen::Index>(i))), 0.0, 1.0);
  }
  return scores;
}

std::vector<double> rescore(const GaceModel& model, const Frame& frame) {
  return Rescorer(model).rescore(frame);
}

}  // namespace gace
