// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#include "apf/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "apf/checkpoint.hpp"
#include "apf/image_io.hpp"
#include "apf/losses.hpp"

namespace apf {

namespace fs = std::filesystem;

namespace {

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
  if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw std::runtime_error("config: unknown key \"" + key + "\" in " + where);
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void parse_dataset(const nlohmann::json& j, DatasetConfig& d) {
  require_keys(j,
               {"preset", "n_views", "width", "height", "fov_deg", "orbit_radius", "bob",
                "test_views", "global_strength", "lights"},
               "dataset");
  if (j.contains("preset")) d.preset = j.at("preset").get<std::string>();
  if (d.preset != "room" && d.preset != "backdrop" && d.preset != "open")
    throw std::runtime_error("config: unknown dataset preset \"" + d.preset + "\"");
  if (j.contains("n_views")) d.n_views = j.at("n_views").get<int>();
  if (j.contains("width")) d.width = j.at("width").get<int>();
  if (j.contains("height")) d.height = j.at("height").get<int>();
  if (j.contains("fov_deg")) d.fov_deg = j.at("fov_deg").get<double>();
  if (j.contains("orbit_radius")) d.orbit_radius = j.at("orbit_radius").get<double>();
  if (j.contains("bob")) d.bob = j.at("bob").get<double>();
  if (j.contains("test_views")) d.test_views = j.at("test_views").get<std::vector<int>>();
  if (j.contains("global_strength")) d.global_strength = j.at("global_strength").get<double>();
  if (j.contains("lights")) {
    d.lights.clear();
    for (const auto& l : j.at("lights")) {
      require_keys(l, {"center", "radius", "gain"}, "dataset.lights[]");
      LocalLight light;
      const auto center = l.at("center").get<std::array<double, 3>>();
      const auto gain = l.at("gain").get<std::array<double, 3>>();
      light.center = Eigen::Vector3d(center[0], center[1], center[2]);
      light.gain = Eigen::Vector3d(gain[0], gain[1], gain[2]);
      light.radius = l.at("radius").get<double>();
      d.lights.push_back(light);
    }
  }
}

void parse_model(const nlohmann::json& j, RunConfig& cfg) {
  require_keys(j,
               {"levels", "features_per_level", "table_size", "base_resolution",
                "finest_resolution", "mlp_hidden", "embedding_dim", "encoding",
                "pe_frequencies"},
               "model");
  AppearanceConfig& m = cfg.model;
  if (j.contains("levels")) m.grid.levels = j.at("levels").get<int>();
  if (j.contains("features_per_level"))
    m.grid.features_per_level = j.at("features_per_level").get<int>();
  if (j.contains("table_size")) m.grid.table_size = j.at("table_size").get<int>();
  if (j.contains("base_resolution")) m.grid.base_resolution = j.at("base_resolution").get<int>();
  if (j.contains("finest_resolution"))
    cfg.finest_resolution = j.at("finest_resolution").get<int>();
  if (j.contains("mlp_hidden")) m.mlp_hidden = j.at("mlp_hidden").get<std::vector<int>>();
  if (j.contains("embedding_dim")) m.embedding_dim = j.at("embedding_dim").get<int>();
  if (j.contains("encoding"))
    m.encoding.kind = encoding_kind_from_string(j.at("encoding").get<std::string>());
  if (j.contains("pe_frequencies"))
    m.encoding.pe_frequencies = j.at("pe_frequencies").get<int>();
}

void parse_train(const nlohmann::json& j, TrainConfig& t) {
  require_keys(j,
               {"iters", "lr_grids", "lr_mlp", "lr_embeddings", "cell_size", "lambda1",
                "lambda2_warmup", "lambda2_peak", "lambda2_final", "lambda2_total"},
               "train");
  if (j.contains("iters")) t.total_iters = j.at("iters").get<int>();
  if (j.contains("lr_grids")) t.lr_grids = j.at("lr_grids").get<double>();
  if (j.contains("lr_mlp")) t.lr_mlp = j.at("lr_mlp").get<double>();
  if (j.contains("lr_embeddings")) t.lr_embeddings = j.at("lr_embeddings").get<double>();
  if (j.contains("cell_size")) t.cell_size = j.at("cell_size").get<int>();
  if (j.contains("lambda1")) t.loss.lambda1 = j.at("lambda1").get<double>();
  if (j.contains("lambda2_warmup")) t.loss.lambda2.warmup_iters = j.at("lambda2_warmup").get<int>();
  if (j.contains("lambda2_peak")) t.loss.lambda2.peak = j.at("lambda2_peak").get<double>();
  if (j.contains("lambda2_final"))
    t.loss.lambda2.final_value = j.at("lambda2_final").get<double>();
  if (j.contains("lambda2_total")) t.loss.lambda2.total_iters = j.at("lambda2_total").get<int>();
}

void parse_eval(const nlohmann::json& j, EvalConfig& e) {
  require_keys(j, {"fit_iters", "fit_lr"}, "eval");
  if (j.contains("fit_iters")) e.fit_iters = j.at("fit_iters").get<int>();
  if (j.contains("fit_lr")) e.fit_lr = j.at("fit_lr").get<double>();
}

SceneSpec scene_for(const DatasetConfig& d, std::uint64_t seed) {
  if (d.preset == "room") return scene_room(seed);
  if (d.preset == "backdrop") return scene_backdrop(seed);
  return scene_open(seed);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
  write_text_file(out_dir + "/config.json", run_config_to_json(cfg).dump(2) + "\n");
}

FitConfig fit_config_for(const RunConfig& cfg) {
  FitConfig fit;
  fit.iters = cfg.eval.fit_iters;
  fit.adam.lr = cfg.eval.fit_lr;
  fit.loss = cfg.train.loss;
  fit.cell_size = cfg.train.cell_size;
  fit.threads = cfg.threads;
  return fit;
}

}  // namespace

RunConfig load_run_config(const std::string& path, const CliOverrides& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("config: parse error in " + path + ": " + e.what());
    }
    require_keys(j, {"seed", "threads", "dataset", "model", "train", "eval"}, "top level");
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
    if (j.contains("model")) parse_model(j.at("model"), cfg);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
  }

  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.threads) cfg.threads = *overrides.threads;
  if (overrides.cell_size) cfg.train.cell_size = *overrides.cell_size;
  if (overrides.iters) cfg.train.total_iters = *overrides.iters;
  if (overrides.encoding)
    cfg.model.encoding.kind = encoding_kind_from_string(*overrides.encoding);

  if (cfg.threads < 1) throw std::runtime_error("config: threads must be >= 1");
  cfg.model.grid.growth_factor = growth_for_finest(
      cfg.model.grid.levels, cfg.model.grid.base_resolution, cfg.finest_resolution);
  cfg.train.seed = cfg.seed + 3;
  cfg.train.threads = cfg.threads;
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json lights = nlohmann::json::array();
  for (const auto& l : cfg.dataset.lights)
    lights.push_back({{"center", {l.center.x(), l.center.y(), l.center.z()}},
                      {"radius", l.radius},
                      {"gain", {l.gain.x(), l.gain.y(), l.gain.z()}}});
  return {
      {"seed", cfg.seed},
      {"threads", cfg.threads},
      {"dataset",
       {{"preset", cfg.dataset.preset},
        {"n_views", cfg.dataset.n_views},
        {"width", cfg.dataset.width},
        {"height", cfg.dataset.height},
        {"fov_deg", cfg.dataset.fov_deg},
        {"orbit_radius", cfg.dataset.orbit_radius},
        {"bob", cfg.dataset.bob},
        {"test_views", cfg.dataset.test_views},
        {"global_strength", cfg.dataset.global_strength},
        {"lights", lights}}},
      {"model",
       {{"levels", cfg.model.grid.levels},
        {"features_per_level", cfg.model.grid.features_per_level},
        {"table_size", cfg.model.grid.table_size},
        {"base_resolution", cfg.model.grid.base_resolution},
        {"finest_resolution", cfg.finest_resolution},
        {"mlp_hidden", cfg.model.mlp_hidden},
        {"embedding_dim", cfg.model.embedding_dim},
        {"encoding", to_string(cfg.model.encoding.kind)},
        {"pe_frequencies", cfg.model.encoding.pe_frequencies}}},
      {"train",
       {{"iters", cfg.train.total_iters},
        {"lr_grids", cfg.train.lr_grids},
        {"lr_mlp", cfg.train.lr_mlp},
        {"lr_embeddings", cfg.train.lr_embeddings},
        {"cell_size", cfg.train.cell_size},
        {"lambda1", cfg.train.loss.lambda1},
        {"lambda2_warmup", cfg.train.loss.lambda2.warmup_iters},
        {"lambda2_peak", cfg.train.loss.lambda2.peak},
        {"lambda2_final", cfg.train.loss.lambda2.final_value},
        {"lambda2_total", cfg.train.loss.lambda2.total_iters}}},
      {"eval", {{"fit_iters", cfg.eval.fit_iters}, {"fit_lr", cfg.eval.fit_lr}}}};
}

int cmd_generate(const RunConfig& cfg, const std::string& out_dir) {
  const SceneSpec scene = scene_for(cfg.dataset, cfg.seed);
  OrbitSpec orbit;
  orbit.n_views = cfg.dataset.n_views;
  orbit.radius = cfg.dataset.orbit_radius;
  orbit.bob = cfg.dataset.bob;
  orbit.width = cfg.dataset.width;
  orbit.height = cfg.dataset.height;
  orbit.fov_deg = cfg.dataset.fov_deg;
  if (cfg.dataset.preset == "backdrop") orbit.center = Eigen::Vector3d(0.0, 0.0, 8.0);

  VariationSpec variation;
  variation.seed = cfg.seed + 1;
  variation.global_affines =
      make_latent_global_affines(cfg.dataset.n_views, cfg.dataset.global_strength, cfg.seed + 1);
  variation.local_lights = cfg.dataset.lights;

  const auto cameras = make_orbit_cameras<double>(orbit);
  const Dataset<double> ds =
      generate_dataset(scene, cameras, variation, cfg.dataset.test_views, cfg.threads);
  save_dataset(ds, out_dir);
  write_resolved_config(cfg, out_dir);
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& dataset_dir, const std::string& out_dir,
              const std::string& resume_checkpoint) {
  const LoadedDataset ds = load_dataset(dataset_dir);
  std::vector<FrameBundle<double>> train_frames;
  std::vector<std::string> train_ids;
  for (const auto& f : ds.frames)
    if (!f.is_test) {
      train_frames.push_back(f);
      train_ids.push_back(f.view_id);
    }
  if (train_frames.empty()) throw std::runtime_error("cmd_train: dataset has no train frames");

  AppearanceModel<double> model;
  int start_iter = 0;
  if (!resume_checkpoint.empty()) {
    LoadedCheckpoint<double> loaded = load_checkpoint<double>(resume_checkpoint);
    model = std::move(loaded.model);
    start_iter = loaded.iter;
  } else {
    AppearanceConfig mc = cfg.model;
    mc.grid.domain_min = ds.domain_min;
    mc.grid.domain_max = ds.domain_max;
    mc.encoding.depth_scale = (ds.domain_max - ds.domain_min).norm();
    model = create_appearance_model<double>(mc, train_ids, cfg.seed + 2);
  }

  const TrainResult result = train(model, train_frames, cfg.train, start_iter);

  fs::create_directories(out_dir);
  save_checkpoint(model, cfg.train.total_iters, out_dir + "/checkpoint.apf");
  std::string csv = "iter,l1,dssim,lid,lambda2,total\n";
  for (const auto& row : result.log)
    csv += std::to_string(row.iter) + "," + fmt4(row.l1) + "," + fmt4(row.dssim) + "," +
           fmt4(row.lid) + "," + fmt4(row.lambda2) + "," + fmt4(row.total) + "\n";
  write_text_file(out_dir + "/loss.csv", csv);
  write_resolved_config(cfg, out_dir);
  return 0;
}

std::vector<EvalRow> evaluate_test_frames(const AppearanceModel<double>* model,
                                          const LoadedDataset& ds, const RunConfig& cfg,
                                          const std::string& image_out_dir) {
  std::vector<EvalRow> rows;
  const FitConfig fit_cfg = fit_config_for(cfg);
  for (const auto& frame : ds.frames) {
    if (!frame.is_test) continue;
    EvalRow row;
    row.view_id = frame.view_id;

    Image<double> output = frame.rendered;  // the discard path: untouched render
    if (model) {
      double fit_loss = 0.0;
      const VectorX<double> embedding = fit_test_embedding(
          *model, frame.ground_truth, frame.rendered, frame.depth, frame.camera, fit_cfg,
          &fit_loss);
      row.fit_loss = fit_loss;
      AppearanceModel<double> probe = single_view_model(*model, embedding);
      const TransformField<double> field = build_transform_field(
          probe, frame.depth, frame.camera, 0, fit_cfg.cell_size, &frame.rendered, nullptr,
          cfg.threads);
      output = transform_image(frame.rendered, field, nullptr, cfg.threads);
    }

    const int w = frame.rendered.width();
    const Image<double> out_right = clamp01(crop_columns(output, w / 2, w));
    const Image<double> gt_right = crop_columns(frame.ground_truth, w / 2, w);
    row.psnr = psnr(out_right, gt_right);
    row.ssim = ssim(out_right, gt_right, cfg.train.loss);
    const ColorCorrection<double> cc = color_correct(out_right, gt_right);
    row.psnr_cc = psnr(cc.corrected, gt_right);
    row.ssim_cc = ssim(cc.corrected, gt_right, cfg.train.loss);
    rows.push_back(row);

    if (!image_out_dir.empty()) {
      write_pfm(image_out_dir + "/" + frame.view_id + "_raw.pfm", frame.rendered);
      write_pfm(image_out_dir + "/" + frame.view_id + "_out.pfm",
                model ? clamp01(output) : output);
      write_png(image_out_dir + "/" + frame.view_id + "_raw.png", frame.rendered);
      write_png(image_out_dir + "/" + frame.view_id + "_out.png", output);
    }
  }
  return rows;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& dataset_dir, const std::string& out_dir, bool no_appearance) {
  const LoadedDataset ds = load_dataset(dataset_dir);
  fs::create_directories(out_dir);

  std::vector<EvalRow> rows;
  if (no_appearance) {
    rows = evaluate_test_frames(nullptr, ds, cfg, out_dir);
  } else {
    const LoadedCheckpoint<double> loaded = load_checkpoint<double>(checkpoint_path);
    rows = evaluate_test_frames(&loaded.model, ds, cfg, out_dir);
  }

  std::string csv = "view_id,psnr,ssim,psnr_cc,ssim_cc\n";
  std::string fit_csv = "view_id,fit_loss\n";
  for (const auto& row : rows) {
    csv += row.view_id + "," + fmt4(row.psnr) + "," + fmt4(row.ssim) + "," +
           fmt4(row.psnr_cc) + "," + fmt4(row.ssim_cc) + "\n";
    fit_csv += row.view_id + "," + fmt4(row.fit_loss) + "\n";
  }
  write_text_file(out_dir + "/metrics.csv", csv);
  if (!no_appearance) write_text_file(out_dir + "/fit.csv", fit_csv);
  write_resolved_config(cfg, out_dir);
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& dataset_dir,
               const std::string& out_dir) {
  const LoadedDataset ds = load_dataset(dataset_dir);
  fs::create_directories(out_dir);

  struct Setup {
    EncodingKind kind;
    bool lid;
    int cell_size;
  };
  std::vector<Setup> setups;
  for (EncodingKind kind : {EncodingKind::xyz, EncodingKind::uv, EncodingKind::depth,
                            EncodingKind::uv_depth, EncodingKind::color})
    setups.push_back({kind, true, cfg.train.cell_size});
  setups.push_back({EncodingKind::xyz, false, cfg.train.cell_size});
  for (int c : {1, 2, 4, 8, 16, 32})
    if (c != cfg.train.cell_size) setups.push_back({EncodingKind::xyz, true, c});

  std::vector<FrameBundle<double>> train_frames;
  std::vector<std::string> train_ids;
  for (const auto& f : ds.frames)
    if (!f.is_test) {
      train_frames.push_back(f);
      train_ids.push_back(f.view_id);
    }
  if (train_frames.empty()) throw std::runtime_error("cmd_ablate: dataset has no train frames");

  std::string csv = "encoding,lid,cell_size,psnr,ssim,psnr_cc,ssim_cc\n";
  for (const auto& setup : setups) {
    RunConfig run = cfg;
    run.model.encoding.kind = setup.kind;
    run.train.cell_size = setup.cell_size;
    if (!setup.lid) {
      run.train.loss.lambda2.peak = 0.0;
      run.train.loss.lambda2.final_value = 0.0;
    }
    AppearanceConfig mc = run.model;
    mc.grid.domain_min = ds.domain_min;
    mc.grid.domain_max = ds.domain_max;
    mc.encoding.depth_scale = (ds.domain_max - ds.domain_min).norm();
    AppearanceModel<double> model = create_appearance_model<double>(mc, train_ids, cfg.seed + 2);
    train(model, train_frames, run.train, 0);
    const std::vector<EvalRow> rows = evaluate_test_frames(&model, ds, run);
    double p = 0, s = 0, pc = 0, sc = 0;
    for (const auto& r : rows) {
      p += r.psnr;
      s += r.ssim;
      pc += r.psnr_cc;
      sc += r.ssim_cc;
    }
    const double n = static_cast<double>(rows.size());
    csv += to_string(setup.kind) + "," + (setup.lid ? "on" : "off") + "," +
           std::to_string(setup.cell_size) + "," + fmt4(p / n) + "," + fmt4(s / n) + "," +
           fmt4(pc / n) + "," + fmt4(sc / n) + "\n";
  }
  write_text_file(out_dir + "/ablation.csv", csv);
  write_resolved_config(cfg, out_dir);
  return 0;
}

}  // namespace apf
