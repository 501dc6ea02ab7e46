#include "tangentfuse/pipeline.hpp"

#include <chrono>
#include <cstdio>

#include "tangentfuse/errors.hpp"

namespace tfuse {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Json vec3_json(Vec3 v) { return Json::array({v.x, v.y, v.z}); }
Vec3 vec3_from(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

template <class T>
void read_if(const Json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

Json corruption_json(const std::vector<FaceCorruption>& table) {
  Json arr = Json::array();
  for (const FaceCorruption& c : table)
    arr.push_back({{"face", c.face},
                   {"scale", c.scale},
                   {"offset", c.offset},
                   {"smooth_phase_u", c.smooth_phase_u},
                   {"smooth_phase_v", c.smooth_phase_v}});
  return arr;
}

}  // namespace

std::string to_string(BlendMode mode) {
  switch (mode) {
    case BlendMode::nn: return "nn";
    case BlendMode::mean: return "mean";
    case BlendMode::radial: return "radial";
    case BlendMode::frustum: return "frustum";
    case BlendMode::poisson: return "poisson";
  }
  return "unknown";
}

BlendMode parse_blend_mode(const std::string& name) {
  if (name == "poisson") return BlendMode::poisson;
  switch (parse_blend_scheme(name)) {
    case BlendScheme::nn: return BlendMode::nn;
    case BlendScheme::mean: return BlendMode::mean;
    case BlendScheme::radial: return BlendMode::radial;
    case BlendScheme::frustum: return BlendMode::frustum;
  }
  return BlendMode::poisson;
}

AlignmentConfig PipelineConfig::effective_alignment() const {
  AlignmentConfig a = alignment;
  a.rng_seed = rng_seed;
  if (matterport_mode) a.pole_exclusion_deg = std::max(a.pole_exclusion_deg, kMatterportPoleCapDeg);
  return a;
}

BlendConfig PipelineConfig::effective_blend() const {
  BlendConfig b = blend;
  if (matterport_mode) b.pole_exclusion_deg = std::max(b.pole_exclusion_deg, kMatterportPoleCapDeg);
  return b;
}

SceneConfig PipelineConfig::effective_scene() const {
  SceneConfig s = scene;
  s.seed = rng_seed;
  return s;
}

void PipelineConfig::validate() const {
  check_erp_dimensions(erp_width, erp_height);
  if (!(padding >= 0 && padding <= 1)) throw ParameterError("padding must lie in [0, 1]");
  if (tangent_width < 2 || tangent_height < 2) throw ParameterError("tangent resolution too small");
  effective_alignment().validate();
  effective_blend().validate();
  if (provider == ProviderKind::synthetic) effective_scene().validate();
  if (provider == ProviderKind::files && provider_dir.empty())
    throw ParameterError("the files provider needs provider_dir");
}

Json PipelineConfig::to_json() const {
  Json schedule = Json::array();
  for (const GridSize& g : alignment.grid_schedule) schedule.push_back({g.cols, g.rows});
  return {
      {"erp_width", erp_width},
      {"erp_height", erp_height},
      {"padding", padding},
      {"tangent_width", tangent_width},
      {"tangent_height", tangent_height},
      {"alignment",
       {{"lambda_smoothness", alignment.lambda_smoothness},
        {"lambda_scale", alignment.lambda_scale},
        {"sample_fraction", alignment.sample_fraction},
        {"iterations_per_scale", alignment.iterations_per_scale},
        {"grid_schedule", schedule},
        {"pole_exclusion_deg", alignment.pole_exclusion_deg}}},
      {"blend",
       {{"mode", tfuse::to_string(blend_mode)},
        {"lambda_fidelity", blend.lambda_fidelity},
        {"radial_decay_start_deg", blend.radial_decay_start_deg},
        {"frustum_decay_start", blend.frustum_decay_start},
        {"solver_tolerance", blend.solver_tolerance},
        {"solver_max_iterations", blend.solver_max_iterations},
        {"pole_exclusion_deg", blend.pole_exclusion_deg}}},
      {"provider", provider == ProviderKind::files ? "files" : "synthetic"},
      {"provider_dir", provider_dir.string()},
      {"scene",
       {{"kind", tfuse::to_string(scene.kind)},
        {"room_min", vec3_json(scene.room_min)},
        {"room_max", vec3_json(scene.room_max)},
        {"sphere_center", vec3_json(scene.sphere_center)},
        {"sphere_radius", scene.sphere_radius},
        {"corrupt", scene.corrupt},
        {"scale_min", scene.scale_min},
        {"scale_max", scene.scale_max},
        {"offset_min", scene.offset_min},
        {"offset_max", scene.offset_max},
        {"smooth_amplitude", scene.smooth_amplitude}}},
      {"matterport_mode", matterport_mode},
      {"rng_seed", rng_seed},
      {"output_dir", output_dir.string()},
      {"dump_intermediates", dump_intermediates},
      {"gt_depth", gt_depth.string()},
  };
}

void PipelineConfig::merge_json(const Json& j) {
  read_if(j, "erp_width", erp_width);
  read_if(j, "erp_height", erp_height);
  read_if(j, "padding", padding);
  read_if(j, "tangent_width", tangent_width);
  read_if(j, "tangent_height", tangent_height);
  if (j.contains("alignment")) {
    const Json& a = j["alignment"];
    read_if(a, "lambda_smoothness", alignment.lambda_smoothness);
    read_if(a, "lambda_scale", alignment.lambda_scale);
    read_if(a, "sample_fraction", alignment.sample_fraction);
    read_if(a, "iterations_per_scale", alignment.iterations_per_scale);
    read_if(a, "pole_exclusion_deg", alignment.pole_exclusion_deg);
    if (a.contains("grid_schedule")) {
      alignment.grid_schedule.clear();
      for (const Json& g : a["grid_schedule"])
        alignment.grid_schedule.push_back({g.at(0).get<int>(), g.at(1).get<int>()});
    }
  }
  if (j.contains("blend")) {
    const Json& b = j["blend"];
    if (b.contains("mode")) blend_mode = parse_blend_mode(b["mode"].get<std::string>());
    read_if(b, "lambda_fidelity", blend.lambda_fidelity);
    read_if(b, "radial_decay_start_deg", blend.radial_decay_start_deg);
    read_if(b, "frustum_decay_start", blend.frustum_decay_start);
    read_if(b, "solver_tolerance", blend.solver_tolerance);
    read_if(b, "solver_max_iterations", blend.solver_max_iterations);
    read_if(b, "pole_exclusion_deg", blend.pole_exclusion_deg);
  }
  if (j.contains("provider")) {
    const std::string p = j["provider"].get<std::string>();
    if (p == "files") {
      provider = ProviderKind::files;
    } else if (p == "synthetic") {
      provider = ProviderKind::synthetic;
    } else {
      throw ParameterError("unknown provider '" + p + "'");
    }
  }
  if (j.contains("provider_dir")) provider_dir = j["provider_dir"].get<std::string>();
  if (j.contains("scene")) {
    const Json& s = j["scene"];
    if (s.contains("kind")) scene.kind = parse_scene_kind(s["kind"].get<std::string>());
    if (s.contains("room_min")) scene.room_min = vec3_from(s["room_min"]);
    if (s.contains("room_max")) scene.room_max = vec3_from(s["room_max"]);
    if (s.contains("sphere_center")) scene.sphere_center = vec3_from(s["sphere_center"]);
    read_if(s, "sphere_radius", scene.sphere_radius);
    read_if(s, "corrupt", scene.corrupt);
    read_if(s, "scale_min", scene.scale_min);
    read_if(s, "scale_max", scene.scale_max);
    read_if(s, "offset_min", scene.offset_min);
    read_if(s, "offset_max", scene.offset_max);
    read_if(s, "smooth_amplitude", scene.smooth_amplitude);
  }
  read_if(j, "matterport_mode", matterport_mode);
  read_if(j, "rng_seed", rng_seed);
  if (j.contains("output_dir")) output_dir = j["output_dir"].get<std::string>();
  read_if(j, "dump_intermediates", dump_intermediates);
  if (j.contains("gt_depth")) gt_depth = j["gt_depth"].get<std::string>();
}

std::vector<DisparityMap> convert_all_to_spherical(const std::vector<DisparityMap>& maps) {
  std::vector<DisparityMap> out;
  out.reserve(maps.size());
  for (const DisparityMap& m : maps) out.push_back(convert_to_spherical(m));
  return out;
}

std::vector<DisparityMap> quantize_to_float(const std::vector<DisparityMap>& maps) {
  std::vector<DisparityMap> out = maps;
  for (DisparityMap& m : out)
    for (double& v : m.image.values) v = static_cast<double>(static_cast<float>(v));
  return out;
}

double normalized_overlap_rms(const std::vector<DisparityMap>& maps, const AlignmentConfig& config,
                              int erp_width, int erp_height) {
  std::vector<double> values;
  for (const DisparityMap& m : maps)
    for (std::size_t i = 0; i < m.image.mask.size(); ++i)
      if (m.image.mask[i]) values.push_back(m.image.values[i]);
  const double mad = median_and_mad(values).mad;
  if (mad < 1e-12) throw DegenerateInputError("pooled disparity has no spread");
  AlignmentConfig full = config;
  full.sample_fraction = 1.0;
  return overlap_rms_disagreement(
             build_overlap_sets(maps, full, erp_width, erp_height, config.rng_seed)) /
         mad;
}

BlendOutput blend_aligned_maps(const std::vector<DisparityMap>& aligned, BlendMode mode,
                               const BlendConfig& config, int erp_width, int erp_height) {
  std::vector<TangentImage> images;
  std::vector<TangentCamera> cameras;
  for (const DisparityMap& m : aligned) {
    images.push_back(m.image);
    cameras.push_back(m.image.camera);
  }
  const ErpStack stack = stack_from_tangents(images, erp_width, erp_height);
  const BlendWeights nn = compute_weights(cameras, BlendScheme::nn, erp_width, erp_height, config);

  BlendOutput out;
  out.d_nn = stitch_nn(stack, nn);
  switch (mode) {
    case BlendMode::nn:
      out.disparity = out.d_nn;
      break;
    case BlendMode::mean:
    case BlendMode::radial:
    case BlendMode::frustum: {
      const BlendScheme scheme = mode == BlendMode::mean     ? BlendScheme::mean
                                 : mode == BlendMode::radial ? BlendScheme::radial
                                                             : BlendScheme::frustum;
      out.disparity =
          blend_weighted(stack, compute_weights(cameras, scheme, erp_width, erp_height, config));
      break;
    }
    case BlendMode::poisson: {
      const BlendWeights frustum =
          compute_weights(cameras, BlendScheme::frustum, erp_width, erp_height, config);
      PoissonResult r = blend_poisson(stack, frustum, out.d_nn, config);
      if (!r.converged)
        std::fprintf(stderr,
                     "warning: Poisson solve stopped after %d iterations at relative residual %g\n",
                     r.iterations, r.relative_residual);
      out.disparity = r.image;
      out.poisson = std::move(r);
      break;
    }
  }
  return out;
}

namespace {

struct ProviderInput {
  IcosahedronLayout layout;
  std::vector<DisparityMap> perspective;
  std::optional<ErpImage> gt_depth;
  std::vector<FaceCorruption> corruption;
};

ProviderInput load_input(const PipelineConfig& config) {
  ProviderInput in;
  in.layout = build_icosahedron_layout(config.padding, config.tangent_width, config.tangent_height);
  if (config.provider == ProviderKind::synthetic) {
    SyntheticData data =
        generate_synthetic(config.effective_scene(), in.layout, config.erp_width, config.erp_height);
    in.perspective = std::move(data.maps);
    in.gt_depth = std::move(data.gt_depth);
    in.corruption = std::move(data.corruption);
  } else {
    in.perspective = load_provider_maps(config.provider_dir, in.layout);
    if (!config.gt_depth.empty()) {
      const Image gt = read_float_image(config.gt_depth);
      if (gt.width != config.erp_width || gt.height != config.erp_height)
        throw ParameterError("ground-truth depth does not match the ERP resolution");
      ErpImage erp(gt.width, gt.height, 1);
      erp.values = gt.values;
      erp.mask = gt.mask;
      in.gt_depth = std::move(erp);
    }
  }
  return in;
}

std::vector<std::uint8_t> evaluation_mask(const PipelineConfig& config) {
  if (!config.matterport_mode) return {};
  return pole_cap_mask(config.erp_width, config.erp_height, kMatterportPoleCapDeg);
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  ProviderInput input = load_input(config);

  PipelineResult result;
  result.layout = input.layout;
  result.corruption = std::move(input.corruption);

  auto start = std::chrono::steady_clock::now();
  const std::vector<DisparityMap> spherical = convert_all_to_spherical(input.perspective);
  result.alignment =
      align_multiscale(spherical, config.effective_alignment(), config.erp_width, config.erp_height);
  result.alignment.aligned = quantize_to_float(result.alignment.aligned);
  result.align_seconds = seconds_since(start);

  start = std::chrono::steady_clock::now();
  BlendOutput blended = blend_aligned_maps(result.alignment.aligned, config.blend_mode,
                                           config.effective_blend(), config.erp_width,
                                           config.erp_height);
  result.blend_seconds = seconds_since(start);
  result.disparity = std::move(blended.disparity);
  result.d_nn = std::move(blended.d_nn);
  result.poisson = std::move(blended.poisson);

  if (input.gt_depth) {
    result.metrics = evaluate_pipeline(result.disparity, *input.gt_depth, evaluation_mask(config));
    result.gt_depth = std::move(input.gt_depth);
  }

  if (!config.output_dir.empty()) write_pipeline_outputs(config, result);
  return result;
}

void write_pipeline_outputs(const PipelineConfig& config, const PipelineResult& result) {
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  write_pfm(dir / "disparity.pfm", result.disparity);
  const VisualizationRange range = write_visualization_png(dir / "disparity.png", result.disparity);
  // The output location is not part of the run; leaving it out keeps reruns
  // into different directories byte-identical.
  Json saved = config.to_json();
  saved.erase("output_dir");
  write_text_file(dir / "config.json", saved.dump(2) + "\n");
  write_text_file(dir / "layout.json", layout_json_text(result.layout));
  if (result.metrics) {
    Json m = metrics_to_json(*result.metrics);
    write_text_file(dir / "metrics.json", m.dump(2) + "\n");
  }

  // Wall-clock times stay out of the files so repeated runs are byte-identical.
  Json run = {{"visualization_min", range.min},
              {"visualization_max", range.max}};
  if (result.poisson)
    run["poisson"] = {{"converged", result.poisson->converged},
                      {"iterations", result.poisson->iterations},
                      {"relative_residual", result.poisson->relative_residual}};
  Json stages = Json::array();
  for (const ScaleReport& r : result.alignment.reports)
    stages.push_back({{"grid", {r.size.cols, r.size.rows}},
                      {"samples", r.sample_count},
                      {"initial_total", r.initial.total},
                      {"final_total", r.final.total},
                      {"initial_alignment", r.initial.alignment},
                      {"final_alignment", r.final.alignment},
                      {"iterations", r.solver.iterations},
                      {"line_search_failed", r.solver.status == LbfgsStatus::line_search_failed}});
  run["stages"] = stages;
  write_text_file(dir / "run.json", run.dump(2) + "\n");

  if (!config.dump_intermediates) return;

  write_pfm(dir / "d_nn.pfm", result.d_nn);
  if (result.gt_depth) write_pfm(dir / "gt_depth.pfm", *result.gt_depth);
  if (!result.corruption.empty())
    write_text_file(dir / "corruption.json", corruption_json(result.corruption).dump(2) + "\n");

  const fs::path aligned_dir = dir / "aligned";
  fs::create_directories(aligned_dir);
  write_text_file(aligned_dir / "layout.json", layout_json_text(result.layout));
  for (const DisparityMap& m : result.alignment.aligned)
    write_pfm(aligned_dir / face_file_name("aligned", m.face(), "pfm"), m.image);

  const fs::path grid_dir = dir / "grids";
  fs::create_directories(grid_dir);
  for (std::size_t s = 0; s < result.alignment.grids_per_scale.size(); ++s)
    write_text_file(grid_dir / ("grids_stage_" + std::to_string(s) + ".json"),
                    grids_to_json(result.alignment.grids_per_scale[s], static_cast<int>(s)).dump() +
                        "\n");

  const BlendScheme scheme = [&] {
    switch (config.blend_mode) {
      case BlendMode::nn: return BlendScheme::nn;
      case BlendMode::mean: return BlendScheme::mean;
      case BlendMode::radial: return BlendScheme::radial;
      default: return BlendScheme::frustum;
    }
  }();
  const fs::path weight_dir = dir / "weights";
  fs::create_directories(weight_dir);
  const BlendWeights weights = compute_weights(result.layout.cameras, scheme, config.erp_width,
                                               config.erp_height, config.effective_blend());
  for (int face = 0; face < result.layout.size(); ++face) {
    ErpImage layer = weights.layer(face);
    for (std::size_t i = 0; i < layer.pixel_count(); ++i) layer.mask[i] = 1;
    write_color_png(weight_dir / face_file_name("weights", face, "png"), layer);
  }
}

std::vector<DisparityMap> load_aligned_maps(const fs::path& dir) {
  const IcosahedronLayout layout = layout_from_json(read_json_file(dir / "layout.json"));
  std::vector<DisparityMap> maps;
  for (const TangentCamera& cam : layout.cameras) {
    const fs::path file = dir / face_file_name("aligned", cam.face_index, "pfm");
    const Image img = read_pfm(file);
    if (img.channels != 1 || img.width != cam.width_px || img.height != cam.height_px)
      throw ProviderError(cam.face_index, file.string() + " does not match the layout");
    DisparityMap m;
    m.image = TangentImage(cam);
    m.image.values = img.values;
    m.image.mask = img.mask;
    m.semantics = DisparitySemantics::spherical;
    m.standardized = true;
    maps.push_back(std::move(m));
  }
  return maps;
}

std::vector<AblationSpec> default_ablation_schedules() {
  return {{"no-align", {}},
          {"2x2", {{2, 2}}},
          {"4x3", {{4, 3}}},
          {"8x7", {{8, 7}}},
          {"16x14", {{16, 14}}},
          {"multi-scale", {{4, 3}, {8, 7}, {16, 14}}}};
}

std::vector<AblationRow> run_ablation(const PipelineConfig& config,
                                      const std::vector<AblationSpec>& schedules,
                                      const std::vector<BlendMode>& blends) {
  config.validate();
  ProviderInput input = load_input(config);
  if (!input.gt_depth) throw ParameterError("ablation needs ground-truth depth");
  const std::vector<DisparityMap> spherical = convert_all_to_spherical(input.perspective);
  const std::vector<std::uint8_t> mask = evaluation_mask(config);

  std::vector<AblationRow> rows;
  for (const AblationSpec& spec : schedules) {
    AlignmentConfig align = config.effective_alignment();
    align.grid_schedule = spec.schedule;
    const AlignmentResult aligned = align_multiscale(spherical, align, config.erp_width,
                                                     config.erp_height);
    const std::vector<DisparityMap> maps = quantize_to_float(aligned.aligned);

    const double rms = normalized_overlap_rms(maps, align, config.erp_width, config.erp_height);

    for (BlendMode mode : blends) {
      const BlendOutput out =
          blend_aligned_maps(maps, mode, config.effective_blend(), config.erp_width, config.erp_height);
      rows.push_back({spec.label, mode, evaluate_pipeline(out.disparity, *input.gt_depth, mask), rms});
    }
  }
  return rows;
}

}  // namespace tfuse
