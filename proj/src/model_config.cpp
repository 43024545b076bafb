#include "panelnet/model_config.hpp"

#include <cmath>
#include <sstream>

#include "panelnet/errors.hpp"

namespace panelnet {

std::string to_string(Task t) {
  switch (t) {
    case Task::kDepth: return "depth";
    case Task::kSegmentation: return "seg";
    case Task::kLayout: return "layout";
  }
  return "depth";
}

Task parse_task(std::string_view s) {
  if (s == "depth") return Task::kDepth;
  if (s == "seg" || s == "segmentation") return Task::kSegmentation;
  if (s == "layout") return Task::kLayout;
  throw ConfigError("unknown task '" + std::string(s) + "' (depth|seg|layout)");
}

std::string to_string(MergeMode m) { return m == MergeMode::kUniform ? "uniform" : "confidence"; }

MergeMode parse_merge_mode(std::string_view s) {
  if (s == "uniform") return MergeMode::kUniform;
  if (s == "confidence") return MergeMode::kConfidence;
  throw ConfigError("unknown merge mode '" + std::string(s) + "' (uniform|confidence)");
}

int L2GConfig::total_blocks() const {
  int n = panel_blocks;
  for (const auto& s : window_stages) n += s.blocks;
  return n;
}

std::string format_window_stages(const std::vector<WindowStage>& stages) {
  std::string out;
  for (const auto& s : stages) {
    if (!out.empty()) out += ',';
    out += std::to_string(s.patch) + ':' + std::to_string(s.blocks) + ':' + std::to_string(s.heads);
  }
  return out;
}

std::vector<WindowStage> parse_window_stages(std::string_view text) {
  std::vector<WindowStage> out;
  std::istringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    WindowStage s;
    char c1 = 0, c2 = 0;
    std::istringstream is(item);
    if (!(is >> s.patch >> c1 >> s.blocks >> c2 >> s.heads) || c1 != ':' || c2 != ':') {
      throw ConfigError("window_stages: expected patch:blocks:heads, got '" + item + "'");
    }
    out.push_back(s);
  }
  return out;
}

int ModelConfig::feature_channels() const {
  const int hw = feature_height() * feature_width();
  return hw > 0 ? token_dim / hw : 0;
}

int ModelConfig::output_channels() const {
  switch (task) {
    case Task::kDepth: return 1;
    case Task::kSegmentation: return num_classes;
    case Task::kLayout: return decoder_widths.back();
  }
  return 1;
}

void ModelConfig::validate() const {
  panel.validate();
  if (panel.height % 32 != 0 || panel.interval % 32 != 0) {
    throw ConfigError("model: ERP height " + std::to_string(panel.height) + " and interval " +
                      std::to_string(panel.interval) + " must be multiples of 32");
  }
  const int hb = feature_height(), wb = feature_width();
  if (token_dim <= 0 || token_dim % (hb * wb) != 0) {
    throw ConfigError("model: token dim " + std::to_string(token_dim) + " not divisible by H_b*W_b = " +
                      std::to_string(hb * wb));
  }
  const int cb = feature_channels();
  if (encoder_widths.size() != 4 || encoder_blocks.size() != 4) {
    throw ConfigError("model: encoder needs 4 widths and 4 block counts");
  }
  for (int i = 0; i < 4; ++i) {
    if (encoder_widths[i] <= 0 || encoder_blocks[i] <= 0) {
      throw ConfigError("model: encoder widths and block counts must be positive");
    }
  }
  if (decoder_widths.size() != 6) throw ConfigError("model: decoder needs 6 widths");
  for (int w : decoder_widths) {
    if (w <= 0) throw ConfigError("model: decoder widths must be positive");
  }
  if (geometry_hidden <= 0) throw ConfigError("model: geometry_hidden must be positive");
  if (ref_panel < 0 || ref_panel >= panel.num_panels()) {
    throw ConfigError("model: ref_panel outside [0, " + std::to_string(panel.num_panels()) + ")");
  }
  for (const auto& s : l2g.window_stages) {
    if (s.patch <= 0 || hb % s.patch != 0 || wb % s.patch != 0) {
      throw ConfigError("model: window patch " + std::to_string(s.patch) +
                        " must divide H_b = " + std::to_string(hb) + " and W_b = " +
                        std::to_string(wb));
    }
    const int dim = s.patch * s.patch * cb;
    if (s.blocks < 0 || s.heads <= 0 || dim % s.heads != 0) {
      throw ConfigError("model: window token dim " + std::to_string(dim) + " not divisible by " +
                        std::to_string(s.heads) + " heads");
    }
  }
  if (l2g.panel_blocks < 0 || l2g.panel_heads <= 0 || token_dim % l2g.panel_heads != 0) {
    throw ConfigError("model: panel token dim " + std::to_string(token_dim) +
                      " not divisible by " + std::to_string(l2g.panel_heads) + " heads");
  }
  if (l2g.mlp_ratio <= 0) throw ConfigError("model: mlp_ratio must be positive");
  if (!(max_depth > 0.0) || !(depth_init > 0.0) || !(depth_init < max_depth)) {
    throw ConfigError("model: need 0 < depth_init < max_depth");
  }
  if (num_classes < 2 || num_classes > 255) throw ConfigError("model: num_classes outside [2, 255]");
  if (task == Task::kLayout && boundary_length != panel.width) {
    throw ConfigError("model: boundary_length " + std::to_string(boundary_length) +
                      " must equal the ERP width " + std::to_string(panel.width));
  }
}

ModelConfig ModelConfig::preset(std::string_view scale, Task task, const PanelConfig& panel) {
  ModelConfig m;
  m.task = task;
  m.panel = panel;
  m.boundary_length = panel.width;
  std::vector<int> heads{2, 4, 4};
  if (scale == "full") {
    // defaults above
  } else if (scale == "desk") {
    m.encoder_widths = {16, 32, 64, 128};
    m.encoder_blocks = {1, 1, 1, 1};
    m.decoder_widths = {64, 64, 32, 16, 16, 16};
    m.token_dim = 128;
    m.l2g.panel_blocks = 2;
  } else if (scale == "tiny") {
    m.encoder_widths = {4, 8, 8, 16};
    m.encoder_blocks = {1, 1, 1, 1};
    m.decoder_widths = {8, 8, 8, 4, 4, 4};
    m.geometry_hidden = 8;
    m.token_dim = 32;
    m.l2g.panel_blocks = 2;
    m.l2g.panel_heads = 2;
    m.l2g.mlp_ratio = 2;
    heads = {2, 2, 2};
  } else {
    throw ConfigError("unknown model scale '" + std::string(scale) + "' (full|desk|tiny)");
  }
  m.l2g.window_stages.clear();
  const int hb = panel.height / 32, wb = panel.interval / 32;
  const int blocks = scale == "tiny" ? 1 : 2;
  int k = 0;
  for (int p : {1, 2, 4}) {
    if (hb > 0 && wb > 0 && hb % p == 0 && wb % p == 0) {
      m.l2g.window_stages.push_back({p, blocks, heads[k]});
    }
    ++k;
  }
  return m;
}

ModelConfig ModelConfig::from_keys(const KeyValueConfig& kv) {
  const Task task = parse_task(kv.get_string("task", "depth"));
  PanelConfig panel;
  panel.height = kv.get_int("height", 512);
  panel.width = kv.get_int("width", 1024);
  const int default_stride = task == Task::kSegmentation ? 16 : task == Task::kLayout ? 64 : 32;
  panel.interval = kv.get_int("interval", 128);
  panel.stride = kv.get_int("stride", default_stride);
  ModelConfig m = preset(kv.get_string("scale", "desk"), task, panel);
  m.encoder_widths = kv.get_int_list("encoder_widths", m.encoder_widths);
  m.encoder_blocks = kv.get_int_list("encoder_blocks", m.encoder_blocks);
  m.decoder_widths = kv.get_int_list("decoder_widths", m.decoder_widths);
  m.use_geometry = kv.get_bool("use_geometry", m.use_geometry);
  m.geometry_hidden = kv.get_int("geometry_hidden", m.geometry_hidden);
  m.ref_panel = kv.get_int("ref_panel", m.ref_panel);
  m.token_dim = kv.get_int("token_dim", m.token_dim);
  if (kv.has("window_stages")) {
    m.l2g.window_stages = parse_window_stages(kv.get_string("window_stages", ""));
  }
  m.l2g.panel_blocks = kv.get_int("panel_blocks", m.l2g.panel_blocks);
  m.l2g.panel_heads = kv.get_int("panel_heads", m.l2g.panel_heads);
  m.l2g.mlp_ratio = kv.get_int("mlp_ratio", m.l2g.mlp_ratio);
  m.l2g.panel_first = kv.get_bool("panel_first", m.l2g.panel_first);
  m.zero_init_residual = kv.get_bool("zero_init_residual", m.zero_init_residual);
  m.max_depth = kv.get_double("max_depth", m.max_depth);
  m.depth_init = kv.get_double("depth_init", m.depth_init);
  m.num_classes = kv.get_int("num_classes", m.num_classes);
  m.boundary_length = kv.get_int("boundary_length", m.boundary_length);
  m.validate();
  return m;
}

namespace {

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "task=" << to_string(task) << '\n'
     << "height=" << panel.height << '\n'
     << "width=" << panel.width << '\n'
     << "interval=" << panel.interval << '\n'
     << "stride=" << panel.stride << '\n'
     << "scale=full\n"
     << "encoder_widths=" << join(encoder_widths) << '\n'
     << "encoder_blocks=" << join(encoder_blocks) << '\n'
     << "decoder_widths=" << join(decoder_widths) << '\n'
     << "use_geometry=" << (use_geometry ? "true" : "false") << '\n'
     << "geometry_hidden=" << geometry_hidden << '\n'
     << "ref_panel=" << ref_panel << '\n'
     << "token_dim=" << token_dim << '\n'
     << "window_stages=" << format_window_stages(l2g.window_stages) << '\n'
     << "panel_blocks=" << l2g.panel_blocks << '\n'
     << "panel_heads=" << l2g.panel_heads << '\n'
     << "mlp_ratio=" << l2g.mlp_ratio << '\n'
     << "panel_first=" << (l2g.panel_first ? "true" : "false") << '\n'
     << "zero_init_residual=" << (zero_init_residual ? "true" : "false") << '\n'
     << "max_depth=" << fmt(max_depth) << '\n'
     << "depth_init=" << fmt(depth_init) << '\n'
     << "num_classes=" << num_classes << '\n'
     << "boundary_length=" << boundary_length << '\n';
  return os.str();
}

ModelConfig ModelConfig::deserialize(std::string_view text) {
  const auto kv = KeyValueConfig::parse(text);
  // The "full" preset is only a base; every field is overwritten.
  auto m = from_keys(kv);
  kv.reject_unknown();
  return m;
}

bool ModelConfig::operator==(const ModelConfig& o) const { return serialize() == o.serialize(); }

}  // namespace panelnet
