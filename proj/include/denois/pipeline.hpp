#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "denois/corruption.hpp"
#include "denois/forward_operator.hpp"
#include "denois/geometry.hpp"
#include "denois/phantom.hpp"
#include "denois/pnp.hpp"
#include "denois/refinement.hpp"
#include "denois/solvers.hpp"

namespace denois {

// Every stage reads one directory and writes another. A stage directory holds
// geometry.json, manifest.json ({"stage", "ids", "params"}) and per-sample
// tensor files:
//   phantom:      <id>.sos.dns (f64 [ny, nx], meta.spec), <id>.lesion.dns (u8)
//   measurements: <id>.meas.dns (f64 [pairs, nu, nv], seconds),
//                 <id>.valid.dns (u8), <id>.masks.dns (f64 [3, pairs, nu, nv]:
//                 aperture, low_corr, directivity)
//   recon:        <id>.recon.dns (f64 [ny, nx], m/s) and <id>.recon.pgm

/// Normalized low- and high-resolution operators and prior masks of one
/// geometry.
struct OperatorBundle {
  Geometry geometry;
  SparseImagingOperator a_prime;
  SparseImagingOperator a_high;
  PriorMasks masks;

  static OperatorBundle build(const Geometry& geometry);
};

struct Manifest {
  std::string stage;
  std::vector<std::string> ids;
  nlohmann::json params = nlohmann::json::object();
};

std::string sample_id(std::size_t index);

void write_manifest(const std::string& dir, const Manifest& m);
Manifest read_manifest(const std::string& dir);
void write_geometry(const std::string& dir, const Geometry& g);
Geometry read_geometry(const std::string& dir);

void write_phantom(const std::string& dir, const std::string& id, const Phantom& p);
Phantom read_phantom(const std::string& dir, const std::string& id, const ImagingGrid& grid);

void write_measurements(const std::string& dir, const std::string& id, const MeasurementSet& b,
                        const PriorMasks& masks);
MeasurementSet read_measurements(const std::string& dir, const std::string& id,
                                 const MeasurementShape& shape);
PriorMasks read_masks(const std::string& dir, const std::string& id,
                      const MeasurementShape& shape);

void write_recon(const std::string& dir, const std::string& id, const SosImage& image,
                 const nlohmann::json& meta);
SosImage read_recon(const std::string& dir, const std::string& id, const ImagingGrid& grid);

struct PhantomStageOptions {
  std::size_t n = 50;
  std::uint64_t seed = 1;
  Scale scale{1, 4};
};
void run_phantom_stage(const PhantomStageOptions& opts, const std::string& out_dir);

/// Clean measurements through A_H on the 2x upsampled phantoms.
void run_simulate_stage(const std::string& phantom_dir, const std::string& out_dir);

struct CorruptStageOptions {
  double noise_rel_sigma = 0.05;
  double dropout_fraction = 0.1;
  std::uint64_t seed = 2;
};
void run_corrupt_stage(const std::string& in_dir, const CorruptStageOptions& opts,
                       const std::string& out_dir);

struct RefineStageOptions {
  /// identity, classical, oracle or external.
  std::string method = "classical";
  MismatchMethod mismatch = MismatchMethod::highres_diff;
  bool use_priors = true;
  bool use_projected = true;
  /// Clean measurements for the oracle refiner.
  std::string clean_dir;
  /// Command or unix:PATH of the external refiner.
  std::string external;
  /// Solver for the initial estimate x'.
  TvConfig init_tv;
};
void run_refine_stage(const std::string& in_dir, const RefineStageOptions& opts,
                      const std::string& out_dir);

struct ReconstructStageOptions {
  /// l2tv, l1tv or pnp.
  std::string method = "l2tv";
  /// identity, gaussian, tvprox or external (pnp only).
  std::string denoiser = "tvprox";
  std::string external;
  TvConfig tv;
  PnPConfig pnp;
  /// Recorded in the recon metadata and carried into the metrics.
  std::string obs_variant;
};
void run_reconstruct_stage(const std::string& in_dir, const ReconstructStageOptions& opts,
                           const std::string& out_dir);

/// One reconstruction from measurements, the building block of the stage.
SosImage reconstruct_one(const OperatorBundle& ops, const MeasurementSet& b,
                         const ReconstructStageOptions& opts, DenoiserPlugin* external);

struct EvalRow {
  std::string id;
  std::string method;
  std::string obs_variant;
  double rmse = 0.0;
  /// SoS contrast of the reconstruction; NaN (with ace, gcnr) for phantoms
  /// without an inclusion.
  double dc = 0.0;
  double ace = 0.0;
  double gcnr = 0.0;
};

std::vector<EvalRow> evaluate_stage(const std::string& recon_dir, const std::string& gt_dir,
                                    const std::string& lesion_dir);
void write_metrics_csv(const std::string& path, const std::vector<EvalRow>& rows);
std::string format_double(double v);

/// Observation variants (rows) and reconstruction methods (columns) of the
/// ablation matrix, plus the data they run on.
struct ExperimentPlan {
  std::size_t n = 50;
  std::uint64_t seed = 1;
  Scale scale{1, 4};
  CorruptStageOptions corrupt;
  std::vector<std::string> rows{"raw", "classical_b", "classical_bp", "classical_bpa", "oracle"};
  std::vector<std::string> cols{"l2tv", "l1tv", "pnp_tvprox"};
  TvConfig tv;
  PnPConfig pnp;
  std::string external_denoiser;
  std::string external_refiner;
};

nlohmann::json to_json(const ExperimentPlan& plan);
/// Missing keys take the defaults above. Unknown row/column names throw.
ExperimentPlan plan_from_json(const nlohmann::json& j);

/// Runs the plan into out_dir: data/ (phantoms, clean, corrupted), rows/<row>/,
/// cells/<row>__<col>/ with recon files and metrics.csv, then metrics.csv and
/// summary.csv (per-cell means) at the top. Cells run concurrently and are
/// independent of execution order.
void run_matrix(const ExperimentPlan& plan, const std::string& out_dir);

struct SummaryRow {
  std::string row;
  std::string col;
  std::size_t n = 0;
  double rmse = 0.0;
  std::size_t n_lesion = 0;
  double ace = 0.0;
  double gcnr = 0.0;
};
std::vector<SummaryRow> summarize(const std::vector<EvalRow>& rows);

}  // namespace denois
