// panelnet command-line front end. Exit codes: 0 ok, 2 config error,
// 3 data error, 4 numeric error.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <fstream>

#include "CLI11.hpp"
#include "panelnet/errors.hpp"
#include "panelnet/harness.hpp"
#include "panelnet/panel_pipeline.hpp"
#include "panelnet/parallel.hpp"

namespace fs = std::filesystem;
using namespace panelnet;

namespace {

constexpr int kOk = 0, kConfig = 2, kData = 3, kNumeric = 4;

int render_cmd(const fs::path& out, int count, std::uint64_t seed, int height, int width, int furniture) {
  RoomRanges ranges;
  ranges.furniture = furniture;
  ranges.validate();
  if (count < 1) throw ConfigError("render: --count must be at least 1");
  for (int i = 0; i < count; ++i) {
    const auto scene = sample_room(scene_seed(seed, i), ranges);
    write_sample(scene_directory(out, i), render_erp(scene, width, height));
  }
  std::printf("rendered %d scenes to %s\n", count, out.string().c_str());
  return kOk;
}

int train_cmd(const fs::path& config, const fs::path& data, const fs::path& out, bool deterministic, bool resume) {
  const auto cfg = RunConfig::load(config);
  if (deterministic) set_num_threads(1);
  Trainer<float> trainer(cfg, load_dataset(data));
  trainer.run(out, resume, [](const std::string& line) { std::printf("%s\n", line.c_str()); std::fflush(stdout); });
  return kOk;
}

int eval_cmd(const fs::path& checkpoint, const fs::path& data, const std::string& task, const std::string& merge,
             bool oracle, const std::string& out) {
  const auto ck = Checkpoint::load(checkpoint);
  const auto model = checkpoint_model_config(ck);
  if (parse_task(task) != model.task) {
    throw VersionError("checkpoint was trained for task '" + to_string(model.task) + "', not '" + task + "'");
  }
  PanelNet<float> net(model, 0);
  load_model(net, ck);
  const auto mode = parse_merge_mode(merge);
  const auto r = evaluate_model(net, load_dataset(data), mode, oracle);
  const std::int64_t step = ck.has("state.step") ? static_cast<std::int64_t>(ck.u64("state.step")) : 0;
  const std::string text = "# merge=" + to_string(mode) + (oracle ? " oracle" : "") + "\n" +
                           metrics_csv_header() + "\n" + r.row(step) + "\n";
  std::fputs(text.c_str(), stdout);
  if (r.clamped_boundary > 0) {
    std::fprintf(stderr, "warning: %lld boundary values clamped into (pi/2, pi)\n",
                 static_cast<long long>(r.clamped_boundary));
  }
  if (!out.empty()) {
    std::ofstream f(out, std::ios::trunc);
    f << text;
  }
  return kOk;
}

int infer_cmd(const fs::path& checkpoint, const fs::path& input, const fs::path& out, const std::string& merge) {
  const auto ck = Checkpoint::load(checkpoint);
  PanelNet<float> net(checkpoint_model_config(ck), 0);
  load_model(net, ck);
  const auto r = infer(net, read_erpt_float(input), parse_merge_mode(merge));
  if (r.labels) {
    write_erpt(out, *r.labels);
  } else {
    write_erpt(out, r.values);
  }
  if (r.room_height) std::printf("room_height %.9g\n", *r.room_height);
  return kOk;
}

int panelize_cmd(const fs::path& input, int interval, int stride, const fs::path& out) {
  const auto erp = read_erpt_float(input);
  const PanelConfig cfg{interval, stride, erp.width(), erp.height()};
  const auto set = partition_erp(erp, cfg);
  fs::create_directories(out);
  for (std::size_t i = 0; i < set.panels.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "panel_%03zu.erpt", i);
    write_erpt(out / name, set.panels[i]);
  }
  write_erpt(out / "reassembled.erpt", merge_panels(set, nullptr, cfg));
  std::printf("%zu panels of %dx%d written to %s\n", set.panels.size(), erp.height(), interval, out.string().c_str());
  return kOk;
}

int gradcheck_cmd(const std::string& module, int seeds) {
  bool ok = true;
  for (const auto& o : run_gradchecks(module, seeds)) {
    std::printf("%s %-40s max_rel=%.3e checked=%zu kinks_skipped=%zu\n", o.passed ? "PASS" : "FAIL", o.name.c_str(),
                o.max_rel_error, o.checked, o.skipped);
    if (!o.passed) std::printf("     worst %s\n", o.detail.c_str());
    ok = ok && o.passed;
  }
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PanelNet panorama depth/segmentation/layout toolkit"};
  app.require_subcommand(1);

  auto* render = app.add_subcommand("render", "Render synthetic cuboid rooms");
  std::string render_out;
  int count = 8, height = 128, width = 256, furniture = 0;
  std::uint64_t seed = 0;
  render->add_option("--out", render_out)->required();
  render->add_option("--count", count);
  render->add_option("--seed", seed);
  render->add_option("--height", height);
  render->add_option("--width", width);
  render->add_option("--furniture", furniture);

  auto* train = app.add_subcommand("train", "Train a model");
  std::string config, data, out;
  bool deterministic = false, resume = false;
  train->add_option("--config", config)->required();
  train->add_option("--data", data)->required();
  train->add_option("--out", out)->required();
  train->add_flag("--deterministic", deterministic, "Single-threaded, bitwise reproducible");
  train->add_flag("--resume", resume, "Continue from OUT/last.pnck");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint, task = "depth", merge = "confidence", eval_out;
  bool oracle = false;
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--task", task)->required();
  eval->add_option("--merge", merge);
  eval->add_option("--out", eval_out, "Also write the CSV here");
  eval->add_flag("--oracle", oracle, "Score ground truth as the prediction");

  auto* inf = app.add_subcommand("infer", "Predict one panorama");
  std::string input;
  inf->add_option("--checkpoint", checkpoint)->required();
  inf->add_option("--input", input)->required();
  inf->add_option("--out", out)->required();
  inf->add_option("--merge", merge);

  auto* panelize = app.add_subcommand("panelize", "Split an ERP into panels and reassemble it");
  int interval = 128, stride = 32;
  panelize->add_option("--input", input)->required();
  panelize->add_option("--interval", interval);
  panelize->add_option("--stride", stride);
  panelize->add_option("--out", out)->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::string module = "all";
  int seeds = 10;
  gradcheck->add_option("--module", module);
  gradcheck->add_option("--seeds", seeds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*render) return render_cmd(render_out, count, seed, height, width, furniture);
    if (*train) return train_cmd(config, data, out, deterministic, resume);
    if (*eval) return eval_cmd(checkpoint, data, task, merge, oracle, eval_out);
    if (*inf) return infer_cmd(checkpoint, input, out, merge);
    if (*panelize) return panelize_cmd(input, interval, stride, out);
    if (*gradcheck) return gradcheck_cmd(module, seeds);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  }
  return kOk;
}
