#include "panelnet/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "panelnet/errors.hpp"
#include "panelnet/losses.hpp"
#include "panelnet/panel_merge.hpp"
#include "panelnet/panel_pipeline.hpp"

namespace panelnet {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kOrderSalt = 0x6f7264657273616cull;
constexpr std::uint64_t kAugmentSalt = 0x6175676d656e7421ull;

std::vector<double> parse_double_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError(key + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::uint32_t> dims_of(const ad::Shape& s) {
  return std::vector<std::uint32_t>(s.begin(), s.end());
}

template <typename T>
void put_tensor(Checkpoint& ck, const std::string& name, const Tensor<T>& t) {
  if constexpr (std::is_same_v<T, float>) {
    ck.add_f32(name, dims_of(t.shape()), t.data());
  } else {
    ck.add_f64(name, dims_of(t.shape()), t.data());
  }
}

template <typename T>
void get_tensor(const Checkpoint& ck, const std::string& name, Tensor<T>& t) {
  const auto& e = ck.at(name);
  if (e.dims != dims_of(t.shape())) {
    throw VersionError("checkpoint: '" + name + "' has a different shape than the model's " +
                       ad::to_string(t.shape()));
  }
  const auto v = ck.values<T>(name);
  std::copy(v.begin(), v.end(), t.mutable_data().begin());
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Keeps the header and rows whose leading step is <= `step`.
void truncate_csv(const fs::path& p, std::int64_t step, const std::string& header) {
  std::vector<std::string> keep{header};
  if (fs::exists(p)) {
    const auto lines = read_lines(p);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto comma = lines[i].find(',');
      if (comma == std::string::npos) continue;
      if (std::stoll(lines[i].substr(0, comma)) <= step) keep.push_back(lines[i]);
    }
  }
  std::ofstream out(p, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

void append_line(const fs::path& p, const std::string& line) {
  std::ofstream out(p, std::ios::app);
  out << line << '\n';
  if (!out) throw DataError("cannot append to " + p.string());
}

std::uint8_t argmax_label(const float* v, std::int64_t k, std::int64_t stride) {
  std::int64_t best = 0;
  for (std::int64_t c = 1; c < k; ++c) {
    if (v[c * stride] > v[best * stride]) best = c;
  }
  return static_cast<std::uint8_t>(best);
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::parse(std::string_view text) {
  const auto kv = KeyValueConfig::parse(text);
  RunConfig r;
  r.scale = kv.get_string("scale", "desk");
  r.model = ModelConfig::from_keys(kv);
  r.adam.lr = kv.get_double("lr", r.adam.lr);
  r.adam.beta1 = kv.get_double("beta1", r.adam.beta1);
  r.adam.beta2 = kv.get_double("beta2", r.adam.beta2);
  r.adam.eps = kv.get_double("eps", r.adam.eps);
  r.batch = kv.get_int("batch", r.batch);
  r.accumulate = kv.get_int("accumulate", r.accumulate);
  r.steps = kv.get_int("steps", static_cast<int>(r.steps));
  r.eval_every = kv.get_int("eval_every", static_cast<int>(r.eval_every));
  const auto seed = kv.get_string("seed", "0");
  try {
    std::size_t used = 0;
    // stoull happily wraps negative input.
    if (seed.empty() || !std::isdigit(static_cast<unsigned char>(seed[0]))) throw std::invalid_argument(seed);
    r.seed = std::stoull(seed, &used);
    if (used != seed.size()) throw std::invalid_argument(seed);
  } catch (const std::exception&) {
    throw ConfigError("seed: '" + seed + "' is not an unsigned integer");
  }
  r.merge = parse_merge_mode(kv.get_string("merge", to_string(r.merge)));
  r.augment = kv.get_bool("augment", r.augment);
  r.rotate_step = kv.get_int("rotate_step", r.rotate_step);
  r.gamma_lo = kv.get_double("gamma_lo", r.gamma_lo);
  r.gamma_hi = kv.get_double("gamma_hi", r.gamma_hi);
  r.freeze_bn = kv.get_bool("freeze_bn", r.freeze_bn);
  r.freeze_bn_step = kv.get_int("freeze_bn_step", static_cast<int>(r.freeze_bn_step));
  if (kv.has("class_weights")) r.class_weights = parse_double_list(kv.get_string("class_weights", ""), "class_weights");
  kv.reject_unknown();
  r.validate();
  return r;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << model.serialize() << "lr=" << fmt(adam.lr) << "\nbeta1=" << fmt(adam.beta1)
     << "\nbeta2=" << fmt(adam.beta2) << "\neps=" << fmt(adam.eps) << "\nbatch=" << batch
     << "\naccumulate=" << accumulate << "\nsteps=" << steps << "\neval_every=" << eval_every
     << "\nseed=" << seed << "\nmerge=" << to_string(merge) << "\naugment=" << (augment ? "true" : "false")
     << "\nrotate_step=" << rotate_step << "\ngamma_lo=" << fmt(gamma_lo) << "\ngamma_hi=" << fmt(gamma_hi)
     << "\nfreeze_bn=" << (freeze_bn ? "true" : "false")
     << "\nfreeze_bn_step=" << freeze_bn_step << '\n';
  if (!class_weights.empty()) {
    os << "class_weights=";
    for (std::size_t i = 0; i < class_weights.size(); ++i) os << (i ? "," : "") << fmt(class_weights[i]);
    os << '\n';
  }
  return os.str();
}

void RunConfig::validate() const {
  model.validate();
  if (batch < 1 || accumulate < 1) throw ConfigError("batch and accumulate must be at least 1");
  if (steps < 0 || eval_every < 1) throw ConfigError("steps must be >= 0 and eval_every >= 1");
  if (freeze_bn_step < -1) throw ConfigError("freeze_bn_step must be -1 (never) or a step index");
  const int step = rotate_step == 0 ? model.panel.stride : rotate_step;
  if (step < 1 || model.panel.width % step != 0) {
    throw ConfigError("rotate_step " + std::to_string(step) + " must divide the ERP width");
  }
  if (!(gamma_lo >= 0.5 && gamma_lo <= gamma_hi && gamma_hi <= 2.0)) {
    throw ConfigError("gamma range must satisfy 0.5 <= gamma_lo <= gamma_hi <= 2");
  }
  if (!class_weights.empty()) {
    if (static_cast<int>(class_weights.size()) != model.num_classes) {
      throw ConfigError("class_weights has " + std::to_string(class_weights.size()) + " entries for " +
                        std::to_string(model.num_classes) + " classes");
    }
    for (double w : class_weights) {
      if (!(w >= 0)) throw ConfigError("class weights must be non-negative");
    }
  }
}

int scene_for_slot(std::uint64_t seed, std::int64_t slot, int num_scenes) {
  const std::int64_t epoch = slot / num_scenes;
  std::vector<int> order(num_scenes);
  for (int i = 0; i < num_scenes; ++i) order[i] = i;
  std::mt19937_64 rng(scene_seed(seed ^ kOrderSalt, static_cast<int>(epoch)));
  // Fisher-Yates with explicit draws; std::shuffle's use of the engine is
  // library-defined.
  for (int i = num_scenes - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order[slot % num_scenes];
}

std::vector<RoomSample> load_dataset(const fs::path& root) {
  std::vector<RoomSample> out;
  for (const auto& dir : list_scenes(root)) out.push_back(read_sample(dir));
  return out;
}

void check_dataset(const std::vector<RoomSample>& data, const ModelConfig& model) {
  if (data.empty()) throw DataError("dataset is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    if (s.rgb.height() != model.panel.height || s.rgb.width() != model.panel.width) {
      throw DataError("scene " + std::to_string(i) + " is " + std::to_string(s.rgb.height()) + "x" +
                      std::to_string(s.rgb.width()) + ", model expects " + std::to_string(model.panel.height) +
                      "x" + std::to_string(model.panel.width));
    }
    for (auto l : s.semantics.data()) {
      if (l >= model.num_classes && l != kIgnoreLabel) {
        throw DataError("scene " + std::to_string(i) + " has label " + std::to_string(l) + " outside [0, " +
                        std::to_string(model.num_classes) + ")");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Model serialization

template <typename T>
void save_model(const PanelNet<T>& net, Checkpoint& ck) {
  ck.add_text("meta.config", net.config().serialize());
  for (const auto& p : net.store().parameters()) put_tensor(ck, p.name, p.tensor);
  for (const auto& b : net.store().buffers()) put_tensor(ck, b.name, b.tensor);
}

ModelConfig checkpoint_model_config(const Checkpoint& ck) {
  try {
    return ModelConfig::deserialize(ck.text("meta.config"));
  } catch (const VersionError&) {
    throw;
  } catch (const ConfigError& e) {
    throw VersionError(std::string("checkpoint: unreadable model config: ") + e.what());
  }
}

template <typename T>
void load_model(PanelNet<T>& net, const Checkpoint& ck) {
  if (!(checkpoint_model_config(ck) == net.config())) {
    throw VersionError("checkpoint: model config differs from the requested model");
  }
  std::set<std::string> names;
  for (auto& p : net.store().parameters()) {
    get_tensor(ck, p.name, p.tensor);
    names.insert(p.name);
  }
  for (auto& b : net.store().buffers()) {
    get_tensor(ck, b.name, b.tensor);
    names.insert(b.name);
  }
  for (const auto& e : ck.entries()) {
    const bool bookkeeping = e.name.rfind("meta.", 0) == 0 || e.name.rfind("adam.", 0) == 0 ||
                             e.name.rfind("state.", 0) == 0;
    if (!bookkeeping && !names.count(e.name)) {
      throw VersionError("checkpoint: tensor '" + e.name + "' does not exist in this model");
    }
  }
}

// ---------------------------------------------------------------------------
// Trainer

template <typename T>
Trainer<T>::Trainer(const RunConfig& cfg, std::vector<RoomSample> data) : cfg_(cfg), data_(std::move(data)) {
  cfg_.validate();
  check_dataset(data_, cfg_.model);
  net_ = std::make_unique<PanelNet<T>>(cfg_.model, cfg_.seed);
  adam_ = std::make_unique<Adam<T>>(net_->store().parameters(), cfg_.adam);
}

template <typename T>
Tensor<T> Trainer<T>::loss(const std::vector<const RoomSample*>& scenes, bool training) {
  const auto& m = cfg_.model;
  std::vector<ErpTensor> rgb;
  for (const auto* s : scenes) rgb.push_back(s->rgb);
  const auto panels = panels_to_tensor<T>(rgb, m.panel);
  const int b = static_cast<int>(scenes.size());
  const auto out = net_->forward(panels, b, training, cfg_.merge);
  switch (m.task) {
    case Task::kDepth: {
      std::vector<float> gt;
      for (const auto* s : scenes) gt.insert(gt.end(), s->depth.data().begin(), s->depth.data().end());
      return berhu_loss(out.merged, gt);
    }
    case Task::kSegmentation: {
      std::vector<std::uint8_t> labels;
      for (const auto* s : scenes) labels.insert(labels.end(), s->semantics.data().begin(), s->semantics.data().end());
      std::vector<double> w = cfg_.class_weights;
      if (w.empty()) w.assign(m.num_classes, 1.0);
      return weighted_cross_entropy(out.merged, labels, w);
    }
    case Task::kLayout: {
      std::vector<double> boundary, height, cam;
      for (const auto* s : scenes) {
        boundary.insert(boundary.end(), s->boundary.begin(), s->boundary.end());
        height.push_back(s->height);
        cam.push_back(s->camera_height);
      }
      return layout_loss(out.boundary, out.height, boundary, height, cam);
    }
  }
  throw ConfigError("unknown task");
}

template <typename T>
StepStats Trainer<T>::step() {
  const int n = static_cast<int>(data_.size());
  const int rotate = cfg_.rotate_step == 0 ? cfg_.model.panel.stride : cfg_.rotate_step;
  const bool bn_frozen = cfg_.freeze_bn || (cfg_.freeze_bn_step >= 0 && step_ >= cfg_.freeze_bn_step);
  StepStats stats;
  for (int a = 0; a < cfg_.accumulate; ++a) {
    std::vector<RoomSample> augmented;
    augmented.reserve(cfg_.batch);
    std::vector<const RoomSample*> scenes;
    for (int i = 0; i < cfg_.batch; ++i) {
      const std::int64_t slot = (step_ * cfg_.accumulate + a) * cfg_.batch + i;
      const auto& s = data_[scene_for_slot(cfg_.seed, slot, n)];
      if (cfg_.augment) {
        const auto ops = random_augment_ops(scene_seed(cfg_.seed ^ kAugmentSalt, static_cast<int>(slot)),
                                            cfg_.model.panel.width, rotate, cfg_.gamma_lo, cfg_.gamma_hi);
        augmented.push_back(augment(s, ops));
        scenes.push_back(&augmented.back());
      } else {
        scenes.push_back(&s);
      }
    }
    auto l = loss(scenes, !bn_frozen);
    stats.loss += static_cast<double>(l.item()) / cfg_.accumulate;
    if (cfg_.accumulate > 1) l = ad::scale(l, static_cast<T>(1.0 / cfg_.accumulate));
    l.backward();
  }
  adam_->step();
  net_->store().zero_grad();
  ++step_;
  return stats;
}

template <typename T>
EvalResult Trainer<T>::evaluate(MergeMode merge) {
  return evaluate_model(*net_, data_, merge);
}

template <typename T>
double Trainer<T>::selection_score(const EvalResult& r) const {
  if (r.depth) return r.depth->rmse;
  if (r.seg) return 1.0 - r.seg->miou;
  if (r.iou3d) return 1.0 - *r.iou3d;
  return INFINITY;
}

template <typename T>
Checkpoint Trainer<T>::checkpoint() const {
  Checkpoint ck;
  save_model(*net_, ck);
  ck.add_text("meta.run", cfg_.serialize());
  adam_->save(ck);
  ck.add_u64("state.step", static_cast<std::uint64_t>(step_));
  ck.add_u64("state.seed", cfg_.seed);
  ck.add_f64("state.best", best_);
  return ck;
}

template <typename T>
void Trainer<T>::restore(const Checkpoint& ck) {
  load_model(*net_, ck);
  if (ck.u64("state.seed") != cfg_.seed) throw VersionError("checkpoint: run seed differs from the config");
  adam_->load(ck);
  step_ = static_cast<std::int64_t>(ck.u64("state.step"));
  best_ = ck.f64("state.best");
}

template <typename T>
void Trainer<T>::run(const fs::path& out, bool resume, std::function<void(const std::string&)> log) {
  fs::create_directories(out);
  const auto loss_csv = out / "loss.csv", metrics_csv = out / "metrics.csv";
  const auto last = out / "last.pnck", best = out / "best.pnck";
  const auto say = [&log](const std::string& s) {
    if (log) log(s);
  };
  bool fresh = true;
  if (resume && fs::exists(last)) {
    restore(Checkpoint::load(last));
    fresh = false;
    say("resumed at step " + std::to_string(step_));
  }
  truncate_csv(loss_csv, fresh ? -1 : step_, "step,loss");
  truncate_csv(metrics_csv, fresh ? -1 : step_, metrics_csv_header());

  const auto eval_and_save = [&]() {
    const auto r = evaluate(cfg_.merge);
    append_line(metrics_csv, r.row(step_));
    const double score = selection_score(r);
    if (score < best_) {
      best_ = score;
      checkpoint().save(best);
    }
    checkpoint().save(last);
    say("step " + std::to_string(step_) + " metrics " + r.row(step_));
  };
  if (fresh) eval_and_save();
  while (step_ < cfg_.steps) {
    const auto s = step();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%lld,%.9g", static_cast<long long>(step_), s.loss);
    append_line(loss_csv, buf);
    if (!std::isfinite(s.loss)) throw NumericError("training loss became non-finite at step " + std::to_string(step_));
    if (step_ % cfg_.eval_every == 0 || step_ == cfg_.steps) eval_and_save();
  }
}

// ---------------------------------------------------------------------------
// Evaluation and inference

template <typename T>
EvalResult evaluate_model(PanelNet<T>& net, const std::vector<RoomSample>& data, MergeMode merge, bool oracle) {
  const auto& m = net.config();
  check_dataset(data, m);
  ad::NoGradGuard no_grad;
  EvalResult r;
  std::vector<float> pred_depth, gt_depth;
  std::vector<std::uint8_t> pred_labels, gt_labels;
  double iou_sum = 0;
  for (const auto& s : data) {
    PanelNetOutput<T> out;
    if (!oracle) {
      const std::vector<ErpTensor> rgb{s.rgb};
      out = net.forward(panels_to_tensor<T>(rgb, m.panel), 1, false, merge);
      r.clamped_boundary += out.layout.clamped;
    }
    switch (m.task) {
      case Task::kDepth: {
        gt_depth.insert(gt_depth.end(), s.depth.data().begin(), s.depth.data().end());
        if (oracle) {
          pred_depth.insert(pred_depth.end(), s.depth.data().begin(), s.depth.data().end());
        } else {
          for (T v : out.merged.data()) pred_depth.push_back(static_cast<float>(v));
        }
        break;
      }
      case Task::kSegmentation: {
        gt_labels.insert(gt_labels.end(), s.semantics.data().begin(), s.semantics.data().end());
        if (oracle) {
          pred_labels.insert(pred_labels.end(), s.semantics.data().begin(), s.semantics.data().end());
        } else {
          const ErpTensor logits = tensor_to_erp(out.merged, 0);
          const std::int64_t plane = static_cast<std::int64_t>(logits.height()) * logits.width();
          for (std::int64_t i = 0; i < plane; ++i) {
            pred_labels.push_back(argmax_label(logits.data().data() + i, logits.channels(), plane));
          }
        }
        break;
      }
      case Task::kLayout: {
        std::vector<double> boundary = s.boundary;
        double height = s.height;
        if (!oracle) {
          boundary.assign(out.boundary.data().begin(), out.boundary.data().end());
          height = static_cast<double>(out.height.data()[0]);
        }
        const auto gt_box = fit_cuboid(s.boundary, s.camera_height, s.height);
        double iou = 0.0;
        try {
          iou = cuboid_3diou(fit_cuboid(boundary, s.camera_height, height), gt_box);
        } catch (const NumericError&) {
          // A prediction that admits no enclosing box scores zero.
        }
        iou_sum += iou;
        break;
      }
    }
  }
  if (m.task == Task::kDepth) r.depth = depth_metrics(pred_depth, gt_depth);
  if (m.task == Task::kSegmentation) r.seg = seg_metrics(pred_labels, gt_labels, m.num_classes);
  if (m.task == Task::kLayout) r.iou3d = iou_sum / static_cast<double>(data.size());
  return r;
}

template <typename T>
Inference infer(PanelNet<T>& net, const ErpTensor& rgb, MergeMode merge) {
  const auto& m = net.config();
  if (rgb.channels() != 3 || rgb.height() != m.panel.height || rgb.width() != m.panel.width) {
    throw DataError("infer: input is " + std::to_string(rgb.channels()) + "x" + std::to_string(rgb.height()) + "x" +
                    std::to_string(rgb.width()) + ", model expects 3x" + std::to_string(m.panel.height) + "x" +
                    std::to_string(m.panel.width));
  }
  ad::NoGradGuard no_grad;
  const std::vector<ErpTensor> in{rgb};
  const auto out = net.forward(panels_to_tensor<T>(in, m.panel), 1, false, merge);
  Inference r;
  if (m.task == Task::kLayout) {
    std::vector<float> b(out.boundary.data().begin(), out.boundary.data().end());
    r.values = ErpTensor(1, 1, m.panel.width, std::move(b));
    r.room_height = static_cast<double>(out.height.data()[0]);
    return r;
  }
  r.values = tensor_to_erp(out.merged, 0);
  if (m.task == Task::kSegmentation) {
    const std::int64_t plane = static_cast<std::int64_t>(r.values.height()) * r.values.width();
    LabelMap labels(1, r.values.height(), r.values.width());
    for (std::int64_t i = 0; i < plane; ++i) {
      labels.data()[i] = argmax_label(r.values.data().data() + i, r.values.channels(), plane);
    }
    r.labels = std::move(labels);
  }
  return r;
}

template void save_model(const PanelNet<float>&, Checkpoint&);
template void save_model(const PanelNet<double>&, Checkpoint&);
template void load_model(PanelNet<float>&, const Checkpoint&);
template void load_model(PanelNet<double>&, const Checkpoint&);
template EvalResult evaluate_model(PanelNet<float>&, const std::vector<RoomSample>&, MergeMode, bool);
template EvalResult evaluate_model(PanelNet<double>&, const std::vector<RoomSample>&, MergeMode, bool);
template Inference infer(PanelNet<float>&, const ErpTensor&, MergeMode);
template Inference infer(PanelNet<double>&, const ErpTensor&, MergeMode);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace panelnet
