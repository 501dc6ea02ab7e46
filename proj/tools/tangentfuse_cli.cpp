#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "tangentfuse/errors.hpp"
#include "tangentfuse/pipeline.hpp"
#include "tangentfuse/resampling.hpp"

using namespace tfuse;

namespace {

// Flags shared by the subcommands that run (part of) the pipeline. Anything
// left unset keeps the value from --config or the built-in default.
struct RunFlags {
  std::string config_file;
  std::optional<std::string> provider;
  std::optional<std::string> provider_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> erp_width;
  std::optional<int> erp_height;
  std::optional<std::string> blend;
  std::optional<std::string> schedule;
  std::optional<std::string> scene;
  std::optional<std::string> gt;
  bool matterport = false;
  bool no_corrupt = false;
  bool dump = false;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file");
    app->add_option("--provider", provider, "files | synthetic");
    app->add_option("--provider-dir", provider_dir, "directory with 20 PFMs and manifest.json");
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--erp-width", erp_width);
    app->add_option("--erp-height", erp_height);
    app->add_option("--blend", blend, "nn | mean | radial | frustum | poisson");
    app->add_option("--schedule", schedule, "grid schedule, e.g. 4x3,8x7,16x14 or none");
    app->add_option("--scene", scene, "box_room | sphere_in_room");
    app->add_option("--gt", gt, "ground-truth ERP depth (files provider)");
    app->add_flag("--matterport", matterport, "exclude 25 degree pole caps");
    app->add_flag("--no-corrupt", no_corrupt, "synthetic provider without affine corruption");
    app->add_flag("--dump", dump, "write intermediate artifacts");
    app->add_option("--out", out, "output directory");
  }

  PipelineConfig resolve() const {
    PipelineConfig c;
    if (!config_file.empty()) c.merge_json(read_json_file(config_file));
    Json j;
    if (provider) j["provider"] = *provider;
    if (provider_dir) j["provider_dir"] = *provider_dir;
    if (seed) j["rng_seed"] = *seed;
    if (erp_width) j["erp_width"] = *erp_width;
    if (erp_height) j["erp_height"] = *erp_height;
    if (gt) j["gt_depth"] = *gt;
    if (scene) j["scene"]["kind"] = *scene;
    if (blend) j["blend"]["mode"] = *blend;
    if (!j.is_null()) c.merge_json(j);
    if (schedule) c.alignment.grid_schedule = parse_schedule(*schedule);
    if (matterport) c.matterport_mode = true;
    if (no_corrupt) c.scene.corrupt = false;
    if (dump) c.dump_intermediates = true;
    if (!out.empty()) c.output_dir = out;
    // A files run without an explicit provider flag still means files.
    if (provider_dir && !provider) c.provider = ProviderKind::files;
    c.validate();
    return c;
  }

  static std::vector<GridSize> parse_schedule(const std::string& text) {
    std::vector<GridSize> out;
    if (text == "none" || text.empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      GridSize g;
      char x = 0;
      std::stringstream is(item);
      if (!(is >> g.cols >> x >> g.rows) || x != 'x')
        throw ParameterError("bad grid size '" + item + "' (expected COLSxROWS)");
      out.push_back(g);
    }
    return out;
  }
};

struct LayoutFlags {
  double padding = 0.3;
  int width = 400;
  int height = 346;
  std::string layout_file;

  void attach(CLI::App* app) {
    app->add_option("--padding", padding, "tangent padding p");
    app->add_option("--tangent-width", width);
    app->add_option("--tangent-height", height);
    app->add_option("--layout", layout_file, "read the layout from JSON instead");
  }

  IcosahedronLayout resolve() const {
    if (!layout_file.empty()) return layout_from_json(read_json_file(layout_file));
    return build_icosahedron_layout(padding, width, height);
  }
};

void print_metrics(const MetricReport& m) { std::cout << metrics_to_json(m).dump(2) << "\n"; }

int cmd_layout(const LayoutFlags& lf, const std::string& out, bool print_hash) {
  const IcosahedronLayout layout = lf.resolve();
  const std::string text = layout_json_text(layout);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
  if (print_hash) std::cerr << "layout sha256 " << sha256_hex(text) << "\n";
  return 0;
}

int cmd_project(const LayoutFlags& lf, const std::string& input, const std::string& out_dir,
                bool nearest) {
  const IcosahedronLayout layout = lf.resolve();
  const fs::path in = input;
  const std::string ext = in.extension().string();
  const bool is_float = ext == ".pfm" || ext == ".exr";
  const Image img = is_float ? read_float_image(in) : read_color_image(in);
  ErpImage erp(img.width, img.height, img.channels);
  erp.values = img.values;
  erp.mask = img.mask;

  fs::create_directories(out_dir);
  write_text_file(fs::path(out_dir) / "layout.json", layout_json_text(layout));
  const Filter filter = nearest ? Filter::nearest : Filter::bilinear;
  for (const TangentCamera& cam : layout.cameras) {
    const TangentImage t = erp_to_tangent(erp, cam, filter);
    const fs::path path =
        fs::path(out_dir) / face_file_name("tangent", cam.face_index, is_float ? "pfm" : "png");
    if (is_float) {
      write_pfm(path, t);
    } else {
      write_color_png(path, t);
    }
  }
  std::cout << "wrote " << layout.size() << " tangent images to " << out_dir << "\n";
  return 0;
}

int cmd_estimate_check(const LayoutFlags& lf, const std::string& dir) {
  const std::vector<std::string> problems = check_provider_directory(dir, lf.resolve());
  for (const std::string& p : problems) std::cout << "FAIL " << p << "\n";
  if (problems.empty()) std::cout << "OK " << dir << " satisfies the provider contract\n";
  return problems.empty() ? 0 : 1;
}

int cmd_synth(RunFlags rf, bool texture) {
  rf.provider = "synthetic";
  PipelineConfig c = rf.resolve();
  if (c.output_dir.empty()) throw ParameterError("synth needs --out");
  const IcosahedronLayout layout =
      build_icosahedron_layout(c.padding, c.tangent_width, c.tangent_height);
  const SyntheticData data =
      generate_synthetic(c.effective_scene(), layout, c.erp_width, c.erp_height);

  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  const std::string layout_text = layout_json_text(layout);
  write_text_file(dir / "layout.json", layout_text);
  ProviderManifest manifest;
  manifest.layout_hash = sha256_hex(layout_text);
  manifest.model_id = "synthetic-oracle";
  manifest.model_version = "1";
  manifest.tangent_width = c.tangent_width;
  manifest.tangent_height = c.tangent_height;
  for (const DisparityMap& m : data.maps) {
    const std::string name = face_file_name("disparity", m.face(), "pfm");
    write_pfm(dir / name, m.image);
    manifest.files.push_back(name);
  }
  write_manifest(dir, manifest);
  write_pfm(dir / "gt_depth.pfm", data.gt_depth);
  Json table = Json::array();
  for (const FaceCorruption& f : data.corruption)
    table.push_back({{"face", f.face}, {"scale", f.scale}, {"offset", f.offset}});
  write_text_file(dir / "corruption.json", table.dump(2) + "\n");
  if (texture)
    write_color_png(dir / "texture.png",
                    render_scene_texture(c.effective_scene(), c.erp_width, c.erp_height));
  std::cout << "wrote synthetic provider directory " << dir.string() << "\n";
  return 0;
}

int cmd_align(RunFlags rf) {
  PipelineConfig c = rf.resolve();
  if (c.output_dir.empty()) throw ParameterError("align needs --out");
  const IcosahedronLayout layout =
      build_icosahedron_layout(c.padding, c.tangent_width, c.tangent_height);
  std::vector<DisparityMap> maps;
  if (c.provider == ProviderKind::files) {
    maps = load_provider_maps(c.provider_dir, layout);
  } else {
    maps = generate_synthetic(c.effective_scene(), layout, c.erp_width, c.erp_height).maps;
  }
  const AlignmentConfig align = c.effective_alignment();
  AlignmentResult result =
      align_multiscale(convert_all_to_spherical(maps), align, c.erp_width, c.erp_height);
  result.aligned = quantize_to_float(result.aligned);

  const fs::path dir = c.output_dir;
  fs::create_directories(dir / "grids");
  write_text_file(dir / "layout.json", layout_json_text(layout));
  for (const DisparityMap& m : result.aligned)
    write_pfm(dir / face_file_name("aligned", m.face(), "pfm"), m.image);
  for (std::size_t s = 0; s < result.grids_per_scale.size(); ++s)
    write_text_file(dir / "grids" / ("grids_stage_" + std::to_string(s) + ".json"),
                    grids_to_json(result.grids_per_scale[s], static_cast<int>(s)).dump() + "\n");
  for (const ScaleReport& r : result.reports)
    std::printf("grid %dx%d: %zu samples, energy %.6g -> %.6g (alignment %.6g -> %.6g), %d iterations\n",
                r.size.cols, r.size.rows, r.sample_count, r.initial.total, r.final.total,
                r.initial.alignment, r.final.alignment, r.solver.iterations);
  return 0;
}

int cmd_blend(const std::string& aligned_dir, const std::string& mode, int erp_width,
              int erp_height, const std::string& out) {
  check_erp_dimensions(erp_width, erp_height);
  const std::vector<DisparityMap> maps = load_aligned_maps(aligned_dir);
  const BlendOutput result =
      blend_aligned_maps(maps, parse_blend_mode(mode), BlendConfig{}, erp_width, erp_height);
  write_pfm(out, result.disparity);
  if (result.poisson)
    std::printf("poisson: %d iterations, relative residual %.3g%s\n", result.poisson->iterations,
                result.poisson->relative_residual, result.poisson->converged ? "" : " (not converged)");
  return 0;
}

int cmd_pipeline(const RunFlags& rf) {
  const PipelineConfig c = rf.resolve();
  const PipelineResult r = run_pipeline(c);
  std::printf("alignment %.2f s, blending %.2f s\n", r.align_seconds, r.blend_seconds);
  if (r.metrics) print_metrics(*r.metrics);
  if (!c.output_dir.empty()) std::printf("outputs in %s\n", c.output_dir.string().c_str());
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, double pole_cap,
             const std::string& out) {
  const Image p = read_float_image(pred);
  const Image g = read_float_image(gt);
  if (p.width != g.width || p.height != g.height)
    throw ParameterError("prediction and ground truth differ in size");
  std::vector<std::uint8_t> mask;
  if (pole_cap > 0) mask = pole_cap_mask(g.width, g.height, pole_cap);
  const Json j = metrics_to_json(evaluate_pipeline(p, g, mask));
  if (!out.empty()) write_text_file(out, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const RunFlags& rf, const std::string& json_out) {
  PipelineConfig c = rf.resolve();
  const std::vector<AblationRow> rows =
      run_ablation(c, default_ablation_schedules(),
                   {BlendMode::nn, BlendMode::mean, BlendMode::frustum, BlendMode::poisson});
  std::vector<std::pair<std::string, MetricReport>> table;
  Json j = Json::array();
  for (const AblationRow& r : rows) {
    table.emplace_back(r.alignment + " / " + to_string(r.blend), r.metrics);
    Json row = metrics_to_json(r.metrics);
    row["alignment"] = r.alignment;
    row["blend"] = to_string(r.blend);
    row["overlap_rms"] = r.overlap_rms;
    j.push_back(row);
  }
  std::cout << format_metric_table(table);
  std::printf("\noverlap RMS disagreement (pooled-MAD units):\n");
  for (std::size_t i = 0; i < rows.size(); i += 4)
    std::printf("  %-12s %.5f\n", rows[i].alignment.c_str(), rows[i].overlap_rms);
  if (!json_out.empty()) write_text_file(json_out, j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"360 degree depth from tangent-image disparities"};
  app.require_subcommand(1);

  LayoutFlags layout_flags;
  std::string layout_out;
  bool layout_hash = false;
  CLI::App* layout_cmd = app.add_subcommand("layout", "emit the 20-camera layout JSON");
  layout_flags.attach(layout_cmd);
  layout_cmd->add_option("--out", layout_out, "write to a file instead of stdout");
  layout_cmd->add_flag("--hash", layout_hash, "print the layout hash to stderr");

  LayoutFlags project_layout;
  std::string project_in, project_out;
  bool project_nearest = false;
  CLI::App* project_cmd = app.add_subcommand("project", "ERP image -> 20 tangent images");
  project_layout.attach(project_cmd);
  project_cmd->add_option("--input", project_in, "ERP image (PNG/JPG, or PFM/EXR)")->required();
  project_cmd->add_option("--out", project_out, "output directory")->required();
  project_cmd->add_flag("--nearest", project_nearest, "nearest-neighbour sampling");

  LayoutFlags check_layout;
  std::string check_dir;
  CLI::App* check_cmd =
      app.add_subcommand("estimate-check", "validate a provider directory against the layout");
  check_layout.attach(check_cmd);
  check_cmd->add_option("dir", check_dir, "provider directory")->required();

  RunFlags align_flags;
  CLI::App* align_cmd = app.add_subcommand("align", "align provider disparities, write aligned maps");
  align_flags.attach(align_cmd);

  std::string blend_dir, blend_mode = "poisson", blend_out = "disparity.pfm";
  int blend_w = 2048, blend_h = 1024;
  CLI::App* blend_cmd = app.add_subcommand("blend", "blend aligned maps into an ERP disparity");
  blend_cmd->add_option("--aligned", blend_dir, "directory written by align or pipeline --dump")
      ->required();
  blend_cmd->add_option("--blend", blend_mode, "nn | mean | radial | frustum | poisson");
  blend_cmd->add_option("--erp-width", blend_w);
  blend_cmd->add_option("--erp-height", blend_h);
  blend_cmd->add_option("--out", blend_out, "output PFM");

  RunFlags pipeline_flags;
  CLI::App* pipeline_cmd = app.add_subcommand("pipeline", "full run: align, blend, evaluate");
  pipeline_flags.attach(pipeline_cmd);

  RunFlags synth_flags;
  bool synth_texture = false;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "write a synthetic provider directory with ground truth");
  synth_flags.attach(synth_cmd);
  synth_cmd->add_flag("--texture", synth_texture, "also render a textured ERP image");

  std::string eval_pred, eval_gt, eval_out;
  double eval_cap = 0;
  CLI::App* eval_cmd = app.add_subcommand("eval", "affine-fit a disparity and score it");
  eval_cmd->add_option("--pred", eval_pred, "predicted ERP disparity")->required();
  eval_cmd->add_option("--gt", eval_gt, "ground-truth ERP depth")->required();
  eval_cmd->add_option("--pole-cap", eval_cap, "exclude polar caps of this radius (degrees)");
  eval_cmd->add_option("--out", eval_out, "also write the JSON here");

  RunFlags ablate_flags;
  std::string ablate_json;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "alignment x blending ablation table");
  ablate_flags.attach(ablate_cmd);
  ablate_cmd->add_option("--json", ablate_json, "write rows as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (layout_cmd->parsed()) return cmd_layout(layout_flags, layout_out, layout_hash);
    if (project_cmd->parsed())
      return cmd_project(project_layout, project_in, project_out, project_nearest);
    if (check_cmd->parsed()) return cmd_estimate_check(check_layout, check_dir);
    if (align_cmd->parsed()) return cmd_align(align_flags);
    if (blend_cmd->parsed()) return cmd_blend(blend_dir, blend_mode, blend_w, blend_h, blend_out);
    if (pipeline_cmd->parsed()) return cmd_pipeline(pipeline_flags);
    if (synth_cmd->parsed()) return cmd_synth(synth_flags, synth_texture);
    if (eval_cmd->parsed()) return cmd_eval(eval_pred, eval_gt, eval_cap, eval_out);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_flags, ablate_json);
  } catch (const ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return 3;
  } catch (const ParameterError& e) {
    std::cerr << "invalid parameter: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
