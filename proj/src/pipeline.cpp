#include "denois/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>

#include "denois/error.hpp"
#include "denois/image.hpp"
#include "denois/metrics.hpp"
#include "denois/parallel.hpp"
#include "denois/tensor_file.hpp"
#include "denois/wire_protocol.hpp"

namespace denois {

namespace fs = std::filesystem;

namespace {

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path);
}

std::vector<std::size_t> image_shape(const ImagingGrid& g) {
  return {static_cast<std::size_t>(g.ny), static_cast<std::size_t>(g.nx)};
}

std::vector<std::size_t> meas_shape(const MeasurementShape& s) {
  return {static_cast<std::size_t>(s.pairs), static_cast<std::size_t>(s.nu),
          static_cast<std::size_t>(s.nv)};
}

Tensor read_checked(const std::string& path, const std::vector<std::size_t>& shape) {
  Tensor t = read_tensor_file(path);
  t.expect_shape(shape, path);
  return t;
}

std::vector<std::uint8_t> to_flags(const std::vector<double>& v, std::size_t begin,
                                   std::size_t count) {
  std::vector<std::uint8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = v[begin + i] != 0.0 ? 1 : 0;
  return out;
}

nlohmann::json tv_json(const TvConfig& c) {
  return {{"lambda_rel", c.lambda_rel}, {"max_iters", c.max_iters}, {"tol", c.tol},
          {"eps_data", c.eps_data},     {"eps_tv", c.eps_tv},       {"inner_iters", c.inner.max_iters}};
}

TvConfig tv_from_json(const nlohmann::json& j) {
  TvConfig c;
  c.lambda_rel = j.value("lambda_rel", c.lambda_rel);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.tol = j.value("tol", c.tol);
  c.eps_data = j.value("eps_data", c.eps_data);
  c.eps_tv = j.value("eps_tv", c.eps_tv);
  c.inner.max_iters = j.value("inner_iters", c.inner.max_iters);
  return c;
}

nlohmann::json pnp_json(const PnPConfig& c) {
  return {{"T", c.T},
          {"T0", c.T0},
          {"K", c.K},
          {"schedule", c.schedule == SigmaScheduleKind::constant ? "constant" : "linear_variance"},
          {"sigma_min", c.sigma_min},
          {"sigma_max", c.sigma_max},
          {"cg_iters", c.cg.max_iters},
          {"seed", c.seed}};
}

PnPConfig pnp_from_json(const nlohmann::json& j) {
  PnPConfig c;
  c.T = j.value("T", c.T);
  c.T0 = j.value("T0", c.T0);
  c.K = j.value("K", c.K);
  const std::string sched = j.value("schedule", std::string("linear_variance"));
  if (sched == "constant") {
    c.schedule = SigmaScheduleKind::constant;
  } else if (sched != "linear_variance") {
    throw ConfigError("unknown sigma schedule '" + sched + "'");
  }
  c.sigma_min = j.value("sigma_min", c.sigma_min);
  c.sigma_max = j.value("sigma_max", c.sigma_max);
  c.cg.max_iters = j.value("cg_iters", c.cg.max_iters);
  c.seed = j.value("seed", c.seed);
  validate(c);
  return c;
}

struct StageInput {
  Geometry geometry;
  Manifest manifest;
};

StageInput open_stage(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  return {read_geometry(dir), read_manifest(dir)};
}

void prepare_out(const std::string& dir, const Geometry& g) {
  fs::create_directories(dir);
  write_geometry(dir, g);
}

}  // namespace

OperatorBundle OperatorBundle::build(const Geometry& geometry) {
  OperatorBundle b;
  b.geometry = geometry;
  b.a_prime = normalize(assemble_operator(geometry));
  b.a_high = normalize(assemble_highres_operator(geometry));
  b.masks = make_prior_masks(geometry);
  return b;
}

std::string sample_id(std::size_t index) {
  std::string s = std::to_string(index);
  return "p" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

void write_manifest(const std::string& dir, const Manifest& m) {
  nlohmann::json j = {{"stage", m.stage}, {"ids", m.ids}, {"params", m.params}};
  write_text(path_in(dir, "manifest.json"), j.dump(2) + "\n");
}

Manifest read_manifest(const std::string& dir) {
  const auto j = read_json(path_in(dir, "manifest.json"));
  Manifest m;
  try {
    m.stage = j.at("stage").get<std::string>();
    m.ids = j.at("ids").get<std::vector<std::string>>();
    m.params = j.value("params", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path_in(dir, "manifest.json") + ": " + e.what());
  }
  return m;
}

void write_geometry(const std::string& dir, const Geometry& g) {
  write_text(path_in(dir, "geometry.json"), to_json(g).dump(2) + "\n");
}

Geometry read_geometry(const std::string& dir) {
  return geometry_from_json(read_json(path_in(dir, "geometry.json")));
}

void write_phantom(const std::string& dir, const std::string& id, const Phantom& p) {
  Tensor sos = Tensor::from_f64("sos", image_shape(p.image.grid), p.image.values);
  sos.meta = {{"spec", to_json(p.spec)}};
  write_tensor_file(path_in(dir, id + ".sos.dns"), sos);
  write_tensor_file(path_in(dir, id + ".lesion.dns"),
                    Tensor::from_u8("lesion", image_shape(p.image.grid), p.lesion_mask));
}

Phantom read_phantom(const std::string& dir, const std::string& id, const ImagingGrid& grid) {
  const Tensor sos = read_checked(path_in(dir, id + ".sos.dns"), image_shape(grid));
  const Tensor lesion = read_checked(path_in(dir, id + ".lesion.dns"), image_shape(grid));
  Phantom p;
  p.image = {grid, sos.to_f64()};
  p.lesion_mask = lesion.to_u8();
  if (sos.meta.contains("spec")) p.spec = phantom_spec_from_json(sos.meta.at("spec"));
  return p;
}

void write_measurements(const std::string& dir, const std::string& id, const MeasurementSet& b,
                        const PriorMasks& masks) {
  check_measurements(b);
  const auto shape = meas_shape(b.shape);
  Tensor meas = Tensor::from_f64("meas", shape, b.values);
  meas.meta = {{"provenance", to_string(b.provenance)}, {"units", "s"}};
  write_tensor_file(path_in(dir, id + ".meas.dns"), meas);
  write_tensor_file(path_in(dir, id + ".valid.dns"), Tensor::from_u8("valid", shape, b.valid));
  std::vector<double> stacked;
  stacked.reserve(3 * b.shape.size());
  for (auto v : masks.aperture) stacked.push_back(v);
  for (auto v : masks.low_corr) stacked.push_back(v);
  for (auto v : masks.directivity) stacked.push_back(v);
  write_tensor_file(path_in(dir, id + ".masks.dns"),
                    Tensor::from_f64("masks", {3, shape[0], shape[1], shape[2]}, stacked));
}

MeasurementSet read_measurements(const std::string& dir, const std::string& id,
                                 const MeasurementShape& shape) {
  const Tensor meas = read_checked(path_in(dir, id + ".meas.dns"), meas_shape(shape));
  const Tensor valid = read_checked(path_in(dir, id + ".valid.dns"), meas_shape(shape));
  MeasurementSet b{shape, meas.to_f64(), valid.to_u8(), Provenance::clean};
  b.provenance = provenance_from_string(meas.meta.value("provenance", std::string("clean")));
  check_measurements(b);
  return b;
}

PriorMasks read_masks(const std::string& dir, const std::string& id,
                      const MeasurementShape& shape) {
  const auto s = meas_shape(shape);
  const Tensor t = read_checked(path_in(dir, id + ".masks.dns"), {3, s[0], s[1], s[2]});
  const auto v = t.to_f64();
  const std::size_t n = shape.size();
  PriorMasks m{shape, to_flags(v, 0, n), to_flags(v, n, n),
               std::vector<double>(v.begin() + 2 * n, v.end())};
  return m;
}

void write_recon(const std::string& dir, const std::string& id, const SosImage& image,
                 const nlohmann::json& meta) {
  Tensor t = Tensor::from_f64("recon", image_shape(image.grid), image.values);
  t.meta = meta;
  write_tensor_file(path_in(dir, id + ".recon.dns"), t);
  write_pgm(path_in(dir, id + ".recon.pgm"), image.values, image.grid.nx, image.grid.ny,
            kSosMin, kSosMax);
}

SosImage read_recon(const std::string& dir, const std::string& id, const ImagingGrid& grid) {
  return {grid, read_checked(path_in(dir, id + ".recon.dns"), image_shape(grid)).to_f64()};
}

void run_phantom_stage(const PhantomStageOptions& opts, const std::string& out_dir) {
  const Geometry g = scaled_geometry(opts.scale);
  prepare_out(out_dir, g);
  Manifest m{"phantom", {}, {{"n", opts.n}, {"seed", opts.seed}, {"scale", opts.scale.str()}}};
  generate_dataset(opts.n, opts.seed, g.grid, [&](std::size_t i, const Phantom& p) {
    m.ids.push_back(sample_id(i));
    write_phantom(out_dir, m.ids.back(), p);
    write_pgm(path_in(out_dir, m.ids.back() + ".sos.pgm"), p.image.values, g.grid.nx, g.grid.ny,
              kSosMin, kSosMax);
  });
  write_manifest(out_dir, m);
}

void run_simulate_stage(const std::string& phantom_dir, const std::string& out_dir) {
  const auto in = open_stage(phantom_dir);
  const Geometry& g = in.geometry;
  const auto a_high = normalize(assemble_highres_operator(g));
  const auto masks = make_prior_masks(g);
  prepare_out(out_dir, g);
  for (const auto& id : in.manifest.ids) {
    const Phantom p = read_phantom(phantom_dir, id, g.grid);
    write_measurements(out_dir, id, simulate_measurements(a_high, p.image, kDefaultC0, masks),
                       masks);
  }
  // Relative, so that copies of a run tree stay byte-identical.
  const auto source = fs::absolute(phantom_dir).lexically_relative(fs::absolute(out_dir));
  write_manifest(out_dir, {"simulate", in.manifest.ids, {{"source", source.generic_string()}}});
}

void run_corrupt_stage(const std::string& in_dir, const CorruptStageOptions& opts,
                       const std::string& out_dir) {
  const auto in = open_stage(in_dir);
  const auto shape = in.geometry.measurement_shape();
  CorruptionConfig cfg;
  cfg.noise_rel_sigma = opts.noise_rel_sigma;
  cfg.dropout_threshold = CorruptionConfig::threshold_for_fraction(opts.dropout_fraction);
  prepare_out(out_dir, in.geometry);
  nlohmann::json realized = nlohmann::json::object();
  for (std::size_t i = 0; i < in.manifest.ids.size(); ++i) {
    const auto& id = in.manifest.ids[i];
    cfg.seed = derive_seed(opts.seed, i);
    const auto r = corrupt(read_measurements(in_dir, id, shape), read_masks(in_dir, id, shape), cfg);
    write_measurements(out_dir, id, r.measurements, r.masks);
    realized[id] = r.realized_dropout;
  }
  write_manifest(out_dir, {"corrupt",
                           in.manifest.ids,
                           {{"noise", opts.noise_rel_sigma},
                            {"dropout", opts.dropout_fraction},
                            {"seed", opts.seed},
                            {"realized_dropout", realized}}});
}

void run_refine_stage(const std::string& in_dir, const RefineStageOptions& opts,
                      const std::string& out_dir) {
  const auto in = open_stage(in_dir);
  const auto shape = in.geometry.measurement_shape();
  const auto ops = OperatorBundle::build(in.geometry);
  std::unique_ptr<RefinerPlugin> shared;
  if (opts.method == "classical") {
    ClassicalRefinerOptions c;
    c.use_priors = opts.use_priors;
    c.use_projected = opts.use_projected;
    shared = std::make_unique<ClassicalRefiner>(c);
  } else if (opts.method == "identity") {
    shared = std::make_unique<IdentityRefiner>();
  } else if (opts.method == "external") {
    if (opts.external.empty()) throw ConfigError("external refiner needs a command");
    auto client = std::make_unique<ProtocolClient>(open_channel(opts.external));
    shared = std::make_unique<ExternalRefiner>(std::move(client),
                                               ops.a_prime.physical_scale() * kSlownessHalfSpan);
  } else if (opts.method == "oracle") {
    if (opts.clean_dir.empty()) throw ConfigError("oracle refiner needs --clean DIR");
  } else {
    throw ConfigError("unknown refine method '" + opts.method + "'");
  }
  const bool needs_estimate =
      opts.mismatch == MismatchMethod::highres_diff || opts.use_projected || opts.method == "external";
  prepare_out(out_dir, in.geometry);
  for (const auto& id : in.manifest.ids) {
    const MeasurementSet b = read_measurements(in_dir, id, shape);
    const PriorMasks masks = read_masks(in_dir, id, shape);
    SlownessImage x_prime{in.geometry.grid, std::vector<double>(in.geometry.grid.size(), 0.0),
                          kDefaultC0};
    if (needs_estimate) {
      x_prime = sos_to_slowness(solve_tv(ops.a_prime, b, opts.init_tv, kDefaultC0), kDefaultC0);
    }
    RefinerInput input{b, project(ops.a_prime, x_prime), masks};
    const auto mismatch = estimate_model_mismatch(x_prime, ops.a_prime, ops.a_high, opts.mismatch);
    MeasurementSet refined;
    if (opts.method == "oracle") {
      OracleRefiner oracle(read_measurements(opts.clean_dir, id, shape));
      refined = refine(input, mismatch, oracle);
    } else {
      refined = refine(input, mismatch, *shared);
    }
    write_measurements(out_dir, id, refined, masks);
  }
  write_manifest(out_dir, {"refine",
                           in.manifest.ids,
                           {{"method", opts.method},
                            {"mismatch", to_string(opts.mismatch)},
                            {"use_priors", opts.use_priors},
                            {"use_projected", opts.use_projected},
                            {"init", tv_json(opts.init_tv)}}});
}

SosImage reconstruct_one(const OperatorBundle& ops, const MeasurementSet& b,
                         const ReconstructStageOptions& opts, DenoiserPlugin* external) {
  if (opts.method == "l2tv" || opts.method == "l1tv") {
    TvConfig tv = opts.tv;
    tv.norm_p = opts.method == "l2tv" ? 2 : 1;
    return solve_tv(ops.a_prime, b, tv, kDefaultC0);
  }
  if (opts.method != "pnp") throw ConfigError("unknown reconstruction method '" + opts.method + "'");
  TvConfig l2 = opts.tv;
  l2.norm_p = 2;
  TvConfig l1 = opts.tv;
  l1.norm_p = 1;
  const std::vector<SosImage> proposals{solve_tv(ops.a_prime, b, l2, kDefaultC0),
                                        solve_tv(ops.a_prime, b, l1, kDefaultC0)};
  const SolverData data = to_solver_data(ops.a_prime, b);
  std::unique_ptr<DenoiserPlugin> owned;
  DenoiserPlugin* denoiser = nullptr;
  if (opts.denoiser == "identity") {
    owned = std::make_unique<IdentityDenoiser>();
  } else if (opts.denoiser == "gaussian") {
    owned = std::make_unique<GaussianDenoiser>();
  } else if (opts.denoiser == "tvprox") {
    owned = std::make_unique<TvProxDenoiser>(tv_weight(l2, data.b, data.weights));
  } else if (opts.denoiser == "external") {
    if (external == nullptr) throw ConfigError("external denoiser is not connected");
    denoiser = external;
  } else {
    throw ConfigError("unknown denoiser '" + opts.denoiser + "'");
  }
  if (owned) denoiser = owned.get();
  return pnp_reconstruct(ops.a_prime, b, proposals, *denoiser, opts.pnp, kDefaultC0);
}

void run_reconstruct_stage(const std::string& in_dir, const ReconstructStageOptions& opts,
                           const std::string& out_dir) {
  const auto in = open_stage(in_dir);
  const auto shape = in.geometry.measurement_shape();
  const auto ops = OperatorBundle::build(in.geometry);
  std::unique_ptr<ExternalDenoiser> external;
  if (opts.method == "pnp" && opts.denoiser == "external") {
    if (opts.external.empty()) throw ConfigError("external denoiser needs a command");
    external = std::make_unique<ExternalDenoiser>(
        std::make_unique<ProtocolClient>(open_channel(opts.external)));
  }
  const std::string method = opts.method == "pnp" ? "pnp_" + opts.denoiser : opts.method;
  const std::string variant = opts.obs_variant.empty() ? in.manifest.stage : opts.obs_variant;
  prepare_out(out_dir, in.geometry);
  for (std::size_t i = 0; i < in.manifest.ids.size(); ++i) {
    const auto& id = in.manifest.ids[i];
    ReconstructStageOptions local = opts;
    local.pnp.seed = derive_seed(opts.pnp.seed, i);
    const SosImage x =
        reconstruct_one(ops, read_measurements(in_dir, id, shape), local, external.get());
    write_recon(out_dir, id, x, {{"method", method}, {"obs_variant", variant}});
  }
  write_manifest(out_dir, {"reconstruct",
                           in.manifest.ids,
                           {{"method", method},
                            {"obs_variant", variant},
                            {"tv", tv_json(opts.tv)},
                            {"pnp", pnp_json(opts.pnp)}}});
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 10);
  return std::string(buf, r.ptr);
}

std::vector<EvalRow> evaluate_stage(const std::string& recon_dir, const std::string& gt_dir,
                                    const std::string& lesion_dir) {
  const auto in = open_stage(recon_dir);
  const ImagingGrid grid = in.geometry.grid;
  const Geometry gt_geometry = read_geometry(gt_dir);
  if (!(gt_geometry.grid == grid)) throw ShapeError("eval: recon and ground truth grids differ");
  std::vector<EvalRow> rows;
  for (const auto& id : in.manifest.ids) {
    const Tensor t = read_checked(path_in(recon_dir, id + ".recon.dns"), image_shape(grid));
    const SosImage x{grid, t.to_f64()};
    const Phantom gt = read_phantom(gt_dir, id, grid);
    const auto lesion =
        read_checked(path_in(lesion_dir, id + ".lesion.dns"), image_shape(grid)).to_u8();
    EvalRow r{id, t.meta.value("method", std::string()), t.meta.value("obs_variant", std::string()),
              rmse(x, gt.image), NAN, NAN, NAN};
    if (std::any_of(lesion.begin(), lesion.end(), [](auto v) { return v != 0; })) {
      const auto regions = lesion_regions(lesion, grid);
      r.dc = contrast(x, regions);
      r.ace = ace(x, gt.image, regions);
      r.gcnr = gcnr(x, regions);
    }
    rows.push_back(r);
  }
  return rows;
}

void write_metrics_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::string out = "id,method,obs_variant,rmse,dc,ace,gcnr\n";
  for (const auto& r : rows) {
    out += r.id + "," + r.method + "," + r.obs_variant + "," + format_double(r.rmse) + "," +
           format_double(r.dc) + "," + format_double(r.ace) + "," + format_double(r.gcnr) + "\n";
  }
  write_text(path, out);
}

namespace {

const std::vector<std::string> kRows{"raw",           "classical_b", "classical_bp",
                                     "classical_bpa", "oracle",      "external"};
const std::vector<std::string> kCols{"l2tv", "l1tv", "pnp_tvprox", "pnp_gaussian", "pnp_external"};

void check_names(const std::vector<std::string>& names, const std::vector<std::string>& known,
                 const std::string& what) {
  if (names.empty()) throw ConfigError("plan has no " + what + "s");
  for (const auto& n : names) {
    if (std::find(known.begin(), known.end(), n) == known.end()) {
      throw ConfigError("unknown plan " + what + " '" + n + "'");
    }
  }
}

}  // namespace

nlohmann::json to_json(const ExperimentPlan& plan) {
  return {{"n", plan.n},
          {"seed", plan.seed},
          {"scale", plan.scale.str()},
          {"noise", plan.corrupt.noise_rel_sigma},
          {"dropout", plan.corrupt.dropout_fraction},
          {"corrupt_seed", plan.corrupt.seed},
          {"rows", plan.rows},
          {"cols", plan.cols},
          {"tv", tv_json(plan.tv)},
          {"pnp", pnp_json(plan.pnp)},
          {"external_denoiser", plan.external_denoiser},
          {"external_refiner", plan.external_refiner}};
}

ExperimentPlan plan_from_json(const nlohmann::json& j) {
  ExperimentPlan p;
  try {
    p.n = j.value("n", p.n);
    p.seed = j.value("seed", p.seed);
    if (j.contains("scale")) p.scale = Scale::parse(j.at("scale").get<std::string>());
    p.corrupt.noise_rel_sigma = j.value("noise", p.corrupt.noise_rel_sigma);
    p.corrupt.dropout_fraction = j.value("dropout", p.corrupt.dropout_fraction);
    p.corrupt.seed = j.value("corrupt_seed", p.corrupt.seed);
    p.rows = j.value("rows", p.rows);
    p.cols = j.value("cols", p.cols);
    if (j.contains("tv")) p.tv = tv_from_json(j.at("tv"));
    if (j.contains("pnp")) p.pnp = pnp_from_json(j.at("pnp"));
    p.external_denoiser = j.value("external_denoiser", p.external_denoiser);
    p.external_refiner = j.value("external_refiner", p.external_refiner);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed plan: ") + e.what());
  }
  check_names(p.rows, kRows, "row");
  check_names(p.cols, kCols, "column");
  if (p.n == 0) throw ConfigError("plan needs n >= 1");
  return p;
}

std::vector<SummaryRow> summarize(const std::vector<EvalRow>& rows) {
  std::map<std::pair<std::string, std::string>, SummaryRow> acc;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.obs_variant, r.method);
    auto [it, inserted] = acc.try_emplace(key);
    if (inserted) {
      order.push_back(key);
      it->second.row = r.obs_variant;
      it->second.col = r.method;
    }
    auto& s = it->second;
    ++s.n;
    s.rmse += r.rmse;
    if (!std::isnan(r.ace)) {
      ++s.n_lesion;
      s.ace += r.ace;
      s.gcnr += r.gcnr;
    }
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    SummaryRow s = acc.at(key);
    s.rmse /= static_cast<double>(s.n);
    s.ace = s.n_lesion ? s.ace / static_cast<double>(s.n_lesion) : NAN;
    s.gcnr = s.n_lesion ? s.gcnr / static_cast<double>(s.n_lesion) : NAN;
    out.push_back(s);
  }
  return out;
}

void run_matrix(const ExperimentPlan& plan, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text(path_in(out_dir, "plan.json"), to_json(plan).dump(2) + "\n");
  const std::string phantoms = path_in(out_dir, "data/phantoms");
  const std::string clean = path_in(out_dir, "data/clean");
  const std::string corrupted = path_in(out_dir, "data/corrupted");
  run_phantom_stage({plan.n, plan.seed, plan.scale}, phantoms);
  run_simulate_stage(phantoms, clean);
  run_corrupt_stage(clean, plan.corrupt, corrupted);

  // Observation rows.
  std::vector<std::string> row_dirs(plan.rows.size());
  parallel_for(plan.rows.size(), 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const std::string& row = plan.rows[r];
      if (row == "raw") {
        row_dirs[r] = corrupted;
        continue;
      }
      RefineStageOptions o;
      o.init_tv = plan.tv;
      o.init_tv.norm_p = 2;
      if (row == "classical_b") {
        o.use_priors = false;
        o.use_projected = false;
        o.mismatch = MismatchMethod::zero;
      } else if (row == "classical_bp") {
        o.use_projected = false;
        o.mismatch = MismatchMethod::zero;
      } else if (row == "oracle") {
        o.method = "oracle";
        o.clean_dir = clean;
      } else if (row == "external") {
        o.method = "external";
        o.external = plan.external_refiner;
      }
      row_dirs[r] = path_in(out_dir, "rows/" + row);
      run_refine_stage(corrupted, o, row_dirs[r]);
    }
  });

  // Cells.
  const std::size_t n_cells = plan.rows.size() * plan.cols.size();
  std::vector<std::vector<EvalRow>> cell_rows(n_cells);
  parallel_for(n_cells, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const std::string& row = plan.rows[c / plan.cols.size()];
      const std::string& col = plan.cols[c % plan.cols.size()];
      ReconstructStageOptions o;
      o.tv = plan.tv;
      o.pnp = plan.pnp;
      o.obs_variant = row;
      if (col.rfind("pnp_", 0) == 0) {
        o.method = "pnp";
        o.denoiser = col.substr(4);
        o.external = plan.external_denoiser;
      } else {
        o.method = col;
      }
      const std::string cell = path_in(out_dir, "cells/" + row + "__" + col);
      run_reconstruct_stage(row_dirs[c / plan.cols.size()], o, cell);
      cell_rows[c] = evaluate_stage(cell, phantoms, phantoms);
      write_metrics_csv(path_in(cell, "metrics.csv"), cell_rows[c]);
    }
  });

  std::vector<EvalRow> all;
  for (const auto& rows : cell_rows) all.insert(all.end(), rows.begin(), rows.end());
  write_metrics_csv(path_in(out_dir, "metrics.csv"), all);
  std::string summary = "obs_variant,method,n,rmse,n_lesion,ace,gcnr\n";
  for (const auto& s : summarize(all)) {
    summary += s.row + "," + s.col + "," + std::to_string(s.n) + "," + format_double(s.rmse) +
               "," + std::to_string(s.n_lesion) + "," + format_double(s.ace) + "," +
               format_double(s.gcnr) + "\n";
  }
  write_text(path_in(out_dir, "summary.csv"), summary);
}

}  // namespace denois
