#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "steik/checkpoint.hpp"
#include "steik/error.hpp"
#include "steik/extract.hpp"
#include "steik/jetdiff.hpp"
#include "steik/metrics.hpp"
#include "steik/parallel.hpp"
#include "steik/pdeflow.hpp"
#include "steik/sampler.hpp"
#include "steik/shapes.hpp"
#include "steik/trainer.hpp"

#ifndef STEIK_VERSION
#define STEIK_VERSION "0.0.0"
#endif

namespace steik::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Eigen::MatrixXd;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(8) << v;
  return s.str();
}

json to_json(const NetworkConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_layers", c.hidden_layers},
          {"hidden_width", c.hidden_width},
          {"layer_kind", to_string(c.layer_kind)},
          {"omega0_first", c.omega0_first},
          {"omega0_hidden", c.omega0_hidden},
          {"init_scheme", to_string(c.init_scheme)},
          {"quadratic_init_eps", c.quadratic_init_eps},
          {"init_radius", c.init_radius}};
}

json to_json(const TrainConfig& t) {
  const LossWeights& w = t.weights;
  return {{"iterations", t.iterations},
          {"lr", t.lr},
          {"surface_batch", t.surface_batch},
          {"offsurface_batch", t.offsurface_batch},
          {"seed", t.seed},
          {"checkpoint_every", t.checkpoint_every},
          {"adam", {t.adam_beta1, t.adam_beta2, t.adam_eps}},
          {"normalize_input", t.normalize_input},
          {"anneal", {{"start", t.schedule.start_iter},
                      {"end", t.schedule.end_iter},
                      {"mode", t.schedule.mode == AnnealSchedule::Mode::LinearToZero ? "linear" : "constant"}}},
          {"weights", {{"alpha_e", w.alpha_e},
                       {"alpha_m", w.alpha_m},
                       {"alpha_n", w.alpha_n},
                       {"alpha_l", w.alpha_l},
                       {"alpha_d", w.alpha_d},
                       {"alpha", w.alpha},
                       {"alpha_normal", w.alpha_normal},
                       {"p_eik", to_string(w.p_eik)},
                       {"p_reg", to_string(w.p_reg)},
                       {"normalize_directional", w.normalize_directional}}}};
}

void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed, json config) {
  const json m = {{"command", command},
                  {"version", STEIK_VERSION},
                  {"seed", seed},
                  {"threads", thread_count()},
                  {"config", std::move(config)}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write '" + (dir / "manifest.json").string() + "'");
  out << m.dump(2) << '\n';
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

PointCloud load_cloud(const std::string& path, const std::string& format) {
  if (format.empty()) return load_pointcloud(path, format_from_path(path));
  if (format == "xyz") return load_pointcloud(path, PointFormat::XYZ);
  if (format == "ply") return load_pointcloud(path, PointFormat::PLY);
  throw ContractError("unknown format '" + format + "' (expected xyz or ply)");
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string input, format, preset = "srb", reg = "directional", out_dir, resume;
  std::optional<std::string> net, init, p_eik, p_reg;
  std::optional<int> iterations, layers, width, anneal_start, anneal_end, checkpoint_every;
  std::optional<double> lr, alpha_e, alpha_m, alpha_n, alpha_reg, omega0, init_radius;
  std::optional<Eigen::Index> surface_batch, offsurface_batch;
  std::uint64_t seed = 0;
  int log_every = 0;
};

Preset resolve(const FitArgs& a) {
  const bool custom = a.preset == "custom";
  Preset p = preset(custom ? "srb" : a.preset);
  if (custom) {
    if (!a.alpha_e || !a.alpha_m || !a.alpha_n || (a.reg != "none" && !a.alpha_reg))
      throw ContractError("preset custom needs --alpha-e, --alpha-m, --alpha-n and --alpha-reg");
  }
  NetworkConfig& n = p.net;
  if (a.net) n.layer_kind = layer_kind_from_string(*a.net);
  if (a.layers) n.hidden_layers = *a.layers;
  if (a.width) n.hidden_width = *a.width;
  if (a.omega0) n.omega0_first = n.omega0_hidden = *a.omega0;
  if (a.init) n.init_scheme = init_scheme_from_string(*a.init);
  if (a.init_radius) n.init_radius = *a.init_radius;

  TrainConfig& t = p.train;
  t.seed = a.seed;
  if (a.iterations) t.iterations = *a.iterations;
  if (a.lr) t.lr = *a.lr;
  if (a.surface_batch) t.surface_batch = *a.surface_batch;
  if (a.offsurface_batch) t.offsurface_batch = *a.offsurface_batch;
  if (a.anneal_start) t.schedule.start_iter = *a.anneal_start;
  if (a.anneal_end) t.schedule.end_iter = *a.anneal_end;
  if (a.checkpoint_every) t.checkpoint_every = *a.checkpoint_every;
  LossWeights& w = t.weights;
  if (a.alpha_e) w.alpha_e = *a.alpha_e;
  if (a.alpha_m) w.alpha_m = *a.alpha_m;
  if (a.alpha_n) w.alpha_n = *a.alpha_n;
  if (a.p_eik) w.p_eik = pnorm_from_string(*a.p_eik);
  if (a.p_reg) w.p_reg = pnorm_from_string(*a.p_reg);
  const double reg_weight = a.alpha_reg.value_or(w.alpha_l);
  w.alpha_l = w.alpha_d = 0.0;
  if (a.reg == "directional")
    w.alpha_l = reg_weight;
  else if (a.reg == "divergence")
    w.alpha_d = reg_weight;
  else if (a.reg != "none")
    throw ContractError("unknown regularizer '" + a.reg + "' (expected directional, divergence or none)");
  n.validate();
  t.validate();
  return p;
}

void add_fit(CLI::App& app, FitArgs& a) {
  CLI::App* c = app.add_subcommand("fit", "Fit a neural SDF to a point cloud");
  c->add_option("--input", a.input, "Point cloud (.xyz or .ply)")->required();
  c->add_option("--format", a.format, "Override extension sniffing: xyz or ply");
  c->add_option("--out-dir", a.out_dir, "Directory for model.ckpt, history.csv and manifest.json")->required();
  c->add_option("--preset", a.preset, "srb, shapenet, scene or custom")->capture_default_str();
  c->add_option("--net", a.net, "linear or quadratic");
  c->add_option("--reg", a.reg, "directional, divergence or none")->capture_default_str();
  c->add_option("--iterations", a.iterations);
  c->add_option("--lr", a.lr);
  c->add_option("--surface-batch", a.surface_batch);
  c->add_option("--offsurface-batch", a.offsurface_batch);
  c->add_option("--alpha-e", a.alpha_e);
  c->add_option("--alpha-m", a.alpha_m);
  c->add_option("--alpha-n", a.alpha_n);
  c->add_option("--alpha-reg", a.alpha_reg, "Weight of the regularizer chosen by --reg");
  c->add_option("--p-eik", a.p_eik, "L1 or L2");
  c->add_option("--p-reg", a.p_reg, "L1 or L2");
  c->add_option("--anneal-start", a.anneal_start);
  c->add_option("--anneal-end", a.anneal_end);
  c->add_option("--layers", a.layers, "Hidden layers");
  c->add_option("--width", a.width, "Hidden width");
  c->add_option("--omega0", a.omega0);
  c->add_option("--init", a.init, "siren, geometric or mfgi");
  c->add_option("--init-radius", a.init_radius);
  c->add_option("--checkpoint-every", a.checkpoint_every);
  c->add_option("--resume", a.resume, "Continue from a checkpoint");
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--log-every", a.log_every, "Print losses every N iterations (0: off)");
}

int run_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const Preset p = resolve(a);
  const PointCloud pc = load_cloud(a.input, a.format);
  FitOptions opt;
  if (!a.resume.empty()) opt.resume = load_checkpoint(a.resume);
  const fs::path dir(a.out_dir);
  make_dir(dir);
  write_manifest(dir, "fit", p.train.seed,
                 {{"input", a.input}, {"preset", a.preset}, {"reg", a.reg}, {"resume", a.resume},
                  {"net", to_json(p.net)}, {"train", to_json(p.train)}});
  opt.checkpoint_path = (dir / "model.ckpt").string();
  if (a.log_every > 0)
    opt.on_iteration = [&](const HistoryRecord& h) {
      if (h.iter % a.log_every == 0)
        err << "iter " << h.iter << " total " << fmt(h.loss.total) << " eik " << fmt(h.loss.eikonal) << " manifold "
            << fmt(h.loss.manifold) << '\n';
    };
  const FitResult r = fit(pc, p.net, p.train, opt);
  save_history_csv(r.history, (dir / "history.csv").string(), opt.resume.has_value());
  out << "iterations " << r.optimizer.iteration;
  if (!r.history.records.empty()) out << ", final loss " << fmt(r.history.records.back().loss.total);
  out << "\ncheckpoint " << opt.checkpoint_path << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- evolve

struct EvolveArgs {
  std::string shape = "snowflake", boundary = "neumann", mode = "dominant", gate = "warn", out_dir;
  double radius = 0.5, half_width = 0.5, alpha_e = 1.0, alpha_d = 0.0, alpha_l = 0.0, dt = 0.0, h = 0.0;
  double sgn_slope = 100.0, amplitude = 0.0, wavenumber = 0.0;
  std::string p = "2", p_reg = "2";
  int n = 128, steps = 1000, snapshot_every = 100;
  std::uint64_t perturb_seed = 0;
};

void add_evolve(CLI::App& app, EvolveArgs& a) {
  CLI::App* c = app.add_subcommand("evolve", "Run the grid PDE flows");
  c->add_option("--shape", a.shape, "circle, square or snowflake")->capture_default_str();
  c->add_option("--radius", a.radius, "Circle radius")->capture_default_str();
  c->add_option("--half-width", a.half_width, "Square half-width")->capture_default_str();
  c->add_option("--alpha-e", a.alpha_e)->capture_default_str();
  c->add_option("--alpha-d", a.alpha_d)->capture_default_str();
  c->add_option("--alpha-l", a.alpha_l)->capture_default_str();
  c->add_option("--p", a.p, "Eikonal norm: 1 or 2")->capture_default_str();
  c->add_option("--p-reg", a.p_reg, "Regularizer norm: 1 or 2")->capture_default_str();
  c->add_option("--mode", a.mode, "Directional flow: dominant or exact")->capture_default_str();
  c->add_option("--n", a.n, "Cells per axis")->capture_default_str();
  c->add_option("--cell-size", a.h, "Cell size (default 2.4 / n)");
  c->add_option("--dt", a.dt, "Time step (default half the combined stability gate)");
  c->add_option("--sgn-slope", a.sgn_slope)->capture_default_str();
  c->add_option("--steps", a.steps)->capture_default_str();
  c->add_option("--snapshot-every", a.snapshot_every)->capture_default_str();
  c->add_option("--boundary", a.boundary, "neumann or periodic")->capture_default_str();
  c->add_option("--gate", a.gate, "abort, warn or ignore")->capture_default_str();
  c->add_option("--perturb-amplitude", a.amplitude)->capture_default_str();
  c->add_option("--perturb-wavenumber", a.wavenumber, "0: uniform noise")->capture_default_str();
  c->add_option("--perturb-seed", a.perturb_seed)->capture_default_str();
  c->add_option("--out-dir", a.out_dir)->required();
}

int run_evolve(const EvolveArgs& a, std::ostream& out) {
  ShapeSpec shape;
  if (a.shape == "circle")
    shape = ShapeSpec::circle(a.radius);
  else if (a.shape == "square")
    shape = ShapeSpec::square(a.half_width);
  else if (a.shape == "snowflake")
    shape = ShapeSpec::snowflake_shape();
  else
    throw ContractError("unknown shape '" + a.shape + "' (expected circle, square or snowflake)");
  Boundary boundary;
  if (a.boundary == "neumann")
    boundary = Boundary::NeumannZero;
  else if (a.boundary == "periodic")
    boundary = Boundary::Periodic;
  else
    throw ContractError("unknown boundary '" + a.boundary + "'");

  FlowConfig f;
  f.alpha_e = a.alpha_e;
  f.alpha_d = a.alpha_d;
  f.alpha_l = a.alpha_l;
  f.p_eik = pnorm_from_string(a.p);
  f.p_reg = pnorm_from_string(a.p_reg);
  f.sgn_slope = a.sgn_slope;
  if (a.mode == "dominant")
    f.directional_mode = DirectionalMode::Dominant;
  else if (a.mode == "exact")
    f.directional_mode = DirectionalMode::Exact;
  else
    throw ContractError("unknown directional mode '" + a.mode + "'");
  if (a.gate == "abort")
    f.gate = GatePolicy::Abort;
  else if (a.gate == "warn")
    f.gate = GatePolicy::Warn;
  else if (a.gate == "ignore")
    f.gate = GatePolicy::Ignore;
  else
    throw ContractError("unknown gate policy '" + a.gate + "'");
  if (a.n < 8) throw ContractError("--n must be >= 8");

  const double h = a.h > 0.0 ? a.h : 2.4 / a.n;
  std::optional<Perturbation> perturb;
  if (a.amplitude != 0.0) perturb = Perturbation{a.amplitude, a.wavenumber, a.perturb_seed};
  const Grid g = init_grid_sdf(shape, a.n, h, perturb, boundary);
  f.dt = a.dt > 0.0 ? a.dt : 0.5 * combined_gate(g, f);
  if (!std::isfinite(f.dt)) throw ContractError("all flow weights are zero; pass --dt");
  f.validate();

  const fs::path dir(a.out_dir);
  make_dir(dir);
  write_manifest(dir, "evolve", a.perturb_seed,
                 {{"shape", a.shape}, {"n", a.n}, {"h", h}, {"boundary", a.boundary},
                  {"alpha_e", f.alpha_e}, {"alpha_d", f.alpha_d}, {"alpha_l", f.alpha_l},
                  {"p_eik", to_string(f.p_eik)}, {"p_reg", to_string(f.p_reg)}, {"mode", a.mode},
                  {"dt", f.dt}, {"sgn_slope", f.sgn_slope}, {"gate", a.gate}, {"steps", a.steps},
                  {"snapshot_every", a.snapshot_every},
                  {"perturb", {{"amplitude", a.amplitude}, {"wavenumber", a.wavenumber}, {"seed", a.perturb_seed}}}});

  const EvolveResult r = evolve(g, f, a.steps, a.snapshot_every);
  for (const Snapshot& s : r.snapshots) {
    std::ostringstream name;
    name << "snapshot_" << std::setw(6) << std::setfill('0') << s.step << ".pgm";
    write_pgm(s.grid, (dir / name.str()).string());
  }
  write_grid_csv(r.snapshots.back().grid, (dir / "final.csv").string());
  write_diagnostics_csv(r.snapshots, (dir / "diagnostics.csv").string());
  const Diagnostics& first = r.snapshots.front().diag;
  const Diagnostics& last = r.snapshots.back().diag;
  out << "dt " << fmt(f.dt) << ", steps " << last.step << ", high band " << fmt(first.bands.high) << " -> "
      << fmt(last.bands.high) << '\n';
  if (r.diverged) {
    out << "diverged at step " << r.diverged_at << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
  std::string checkpoint, grid, out;
  std::optional<int> resolution;
  double h = 0.0;
};

Grid load_grid_csv(const std::string& path, double h) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const std::string t = trim(cell);
      const double v = std::strtod(t.c_str(), &end);
      if (t.empty() || *end != '\0') throw ParseError("bad grid value '" + t + "'", no);
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows[0].size()) throw ParseError("ragged grid row", no);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("empty grid file '" + path + "'", 0);
  const int nx = static_cast<int>(rows[0].size()), ny = static_cast<int>(rows.size());
  const double cell = h > 0.0 ? h : 2.4 / nx;
  Grid g = Grid::make_2d(nx, ny, cell, Boundary::NeumannZero, Eigen::Vector2d(-0.5 * nx * cell, -0.5 * ny * cell));
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) g.at(i, j) = rows[j][i];
  g.validate();
  return g;
}

void add_extract(CLI::App& app, ExtractArgs& a) {
  CLI::App* c = app.add_subcommand("extract", "Extract the zero level set as OBJ (3D) or contour CSV (2D)");
  CLI::Option* ck = c->add_option("--checkpoint", a.checkpoint, "Trained model");
  CLI::Option* gr = c->add_option("--grid", a.grid, "Grid CSV written by evolve");
  ck->excludes(gr);
  c->add_option("--resolution", a.resolution, "Samples per axis (default 512)");
  c->add_option("--cell-size", a.h, "Grid cell size for --grid (default 2.4 / n)");
  c->add_option("--out", a.out)->required();
}

int run_extract(const ExtractArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() == a.grid.empty()) throw ContractError("pass exactly one of --checkpoint and --grid");
  if (!a.grid.empty()) {
    const Contour2D c = marching_squares(load_grid_csv(a.grid, a.h));
    save_contour_csv(c, a.out);
    out << c.polylines.size() << " polylines, length " << fmt(c.length()) << '\n';
    return kExitOk;
  }
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const int dim = ck.params.input_dim();
  const int res = a.resolution.value_or(512);
  Domain d;
  if (ck.domain) {
    d = *ck.domain;
  } else {
    d.bbox_min = Vec::Constant(dim, -1.1);
    d.bbox_max = Vec::Constant(dim, 1.1);
  }
  NormalizeTransform t;
  t.center = Vec::Zero(dim);
  if (ck.transform) t = *ck.transform;
  if (dim == 3) {
    const Mesh m = transform_mesh(marching_cubes(network_field(ck.params), d, res), t);
    save_obj(m, a.out);
    out << m.vertices.size() << " vertices, " << m.triangles.size() << " triangles\n";
  } else if (dim == 2) {
    const Contour2D c = transform_contour(marching_squares(network_field(ck.params), d, res), t);
    save_contour_csv(c, a.out);
    out << c.polylines.size() << " polylines, length " << fmt(c.length()) << '\n';
  } else {
    throw ContractError("extract needs a 2D or 3D network");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string mesh, gt_mesh, gt_points, occupancy, pred_occupancy, checkpoint, out;
  Eigen::Index samples = 30000;
  std::uint64_t seed = 0;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  CLI::App* c = app.add_subcommand("eval", "Compare a mesh with a reference");
  c->add_option("--mesh", a.mesh, "Reconstructed OBJ")->required();
  CLI::Option* gm = c->add_option("--gt-mesh", a.gt_mesh, "Reference OBJ");
  CLI::Option* gp = c->add_option("--gt-points", a.gt_points, "Reference points (.xyz or .ply)");
  gm->excludes(gp);
  c->add_option("--samples", a.samples, "Points sampled per mesh (0: use vertices)")->capture_default_str();
  c->add_option("--occupancy-samples", a.occupancy, "Lines 'x y z inside' with inside 0 or 1");
  c->add_option("--checkpoint", a.checkpoint, "Model whose sign predicts occupancy");
  c->add_option("--pred-occupancy", a.pred_occupancy, "Predicted labels, one 0 or 1 per line");
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--out", a.out, "Metric CSV");
}

MatrixXd mesh_samples(const Mesh& m, Eigen::Index k, std::uint64_t seed) {
  if (k == 0) {
    MatrixXd v(3, static_cast<Eigen::Index>(m.vertices.size()));
    for (std::size_t i = 0; i < m.vertices.size(); ++i) v.col(static_cast<Eigen::Index>(i)) = m.vertices[i];
    return v;
  }
  Rng rng(seed);
  return sample_mesh_points(m, k, rng);
}

void read_rows(const std::string& path, std::size_t width, std::vector<std::vector<double>>& out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ss(t);
    std::vector<double> row(width);
    for (double& v : row)
      if (!(ss >> v)) throw ParseError("expected " + std::to_string(width) + " numbers", no);
    out.push_back(std::move(row));
  }
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  if (a.gt_mesh.empty() && a.gt_points.empty()) throw ContractError("pass --gt-mesh or --gt-points");
  const Mesh recon = load_obj(a.mesh);
  if (recon.empty()) throw ContractError("reconstructed mesh is empty");
  const MatrixXd rs = mesh_samples(recon, a.samples, a.seed);
  MatrixXd ref;
  if (!a.gt_mesh.empty())
    ref = mesh_samples(load_obj(a.gt_mesh), a.samples, a.seed);
  else
    ref = load_pointcloud(a.gt_points, format_from_path(a.gt_points)).points;
  MetricReport r = MetricReport::distances(rs, ref);

  if (!a.occupancy.empty()) {
    std::vector<std::vector<double>> rows;
    read_rows(a.occupancy, 4, rows);
    std::vector<bool> gt;
    MatrixXd q(3, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      q.col(static_cast<Eigen::Index>(i)) << rows[i][0], rows[i][1], rows[i][2];
      gt.push_back(rows[i][3] != 0.0);
    }
    std::vector<bool> pred;
    if (!a.checkpoint.empty()) {
      const Checkpoint ck = load_checkpoint(a.checkpoint);
      const Eigen::VectorXd v = forward_values(ck.params, ck.transform ? ck.transform->apply(q) : q);
      for (Eigen::Index i = 0; i < v.size(); ++i) pred.push_back(v(i) < 0.0);
    } else if (!a.pred_occupancy.empty()) {
      std::vector<std::vector<double>> labels;
      read_rows(a.pred_occupancy, 1, labels);
      for (const auto& l : labels) pred.push_back(l[0] != 0.0);
    } else {
      throw ContractError("--occupancy-samples needs --checkpoint or --pred-occupancy");
    }
    r.iou = iou(pred, gt);
  }
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!(f << r.to_csv())) throw IoError("cannot write '" + a.out + "'");
  }
  out << r.to_text();
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  GradcheckOptions o;
  std::string net = "quadratic";
  double threshold = 1e-3;
};

void add_gradcheck(CLI::App& app, GradcheckArgs& a) {
  CLI::App* c = app.add_subcommand("gradcheck", "Compare the analytic loss gradient with finite differences");
  c->add_option("--net", a.net, "linear or quadratic")->capture_default_str();
  c->add_option("--layers", a.o.layers)->capture_default_str();
  c->add_option("--width", a.o.width)->capture_default_str();
  c->add_option("--dim", a.o.dim)->capture_default_str();
  c->add_option("--omega0", a.o.omega0)->capture_default_str();
  c->add_option("--seed", a.o.seed)->capture_default_str();
  c->add_option("--coords", a.o.coords, "Parameter coordinates to probe")->capture_default_str();
  c->add_option("--step", a.o.step)->capture_default_str();
  c->add_option("--term", a.o.term, "all, eikonal, manifold, nonmanifold, directional, divergence or normal")
      ->capture_default_str();
  c->add_option("--threshold", a.threshold)->capture_default_str();
}

int run_gradcheck(GradcheckArgs a, std::ostream& out) {
  a.o.kind = layer_kind_from_string(a.net);
  const double e = gradcheck(a.o);
  out << "max relative error " << std::scientific << std::setprecision(3) << e << '\n';
  return e < a.threshold ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  AblateOptions o;
  std::string shape = "torus", out;
};

void add_ablate(CLI::App& app, AblateArgs& a) {
  CLI::App* c = app.add_subcommand("ablate", "L1/L2 eikonal x regularizer matrix on the torus fixture");
  c->add_option("--shape", a.shape, "Fixture (torus)")->capture_default_str();
  c->add_option("--points", a.o.points)->capture_default_str();
  c->add_option("--iterations", a.o.iterations)->capture_default_str();
  c->add_option("--batch", a.o.batch, "Surface and off-surface batch")->capture_default_str();
  c->add_option("--layers", a.o.layers)->capture_default_str();
  c->add_option("--width", a.o.width)->capture_default_str();
  c->add_option("--resolution", a.o.resolution)->capture_default_str();
  c->add_option("--eval-samples", a.o.eval_samples)->capture_default_str();
  c->add_option("--seed", a.o.seed)->capture_default_str();
  c->add_option("--out", a.out, "Comparison CSV");
}

int run_ablate(const AblateArgs& a, std::ostream& out) {
  if (a.shape != "torus") throw ContractError("ablate supports only the torus fixture");
  const std::vector<AblateRow> rows = ablate(a.o);
  const std::string csv = ablate_csv(rows);
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!(f << csv)) throw IoError("cannot write '" + a.out + "'");
  }
  out << csv;
  for (const AblateRow& r : rows)
    if (!r.finite()) return kExitNumerical;
  return kExitOk;
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest, extra;
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 == args.size()) throw ContractError("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return rest;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", no);
    std::string key = trim(t.substr(0, eq));
    for (char& ch : key)
      if (ch == '_') ch = '-';
    extra.push_back("--" + key + "=" + trim(t.substr(eq + 1)));
  }
  // Config values go right after the subcommand so explicit flags win.
  const auto sub = rest.size() > 1 ? rest.begin() + 2 : rest.end();
  rest.insert(sub, extra.begin(), extra.end());
  return rest;
}

NetworkParams gradcheck_network(const GradcheckOptions& o) {
  NetworkConfig c;
  c.input_dim = o.dim;
  c.hidden_layers = o.layers;
  c.hidden_width = o.width;
  c.layer_kind = o.kind;
  c.omega0_first = c.omega0_hidden = o.omega0;
  c.init_scheme = InitScheme::SirenUniform;
  NetworkParams p = init(c, o.seed);
  Rng rng(o.seed * 7919 + 1);
  constexpr double quad = 0.3;
  for (LayerParams& l : p.layers) {
    const double w = l.activation.type == Activation::Type::Sine ? l.activation.omega0 : 1.0;
    const double s = 2.0 / (w * std::sqrt(static_cast<double>(l.in_dim())));
    for (Eigen::Index k = 0; k < l.W2.size(); ++k) l.W2.data()[k] = s * rng.normal();
    for (Eigen::Index k = 0; k < l.b2.size(); ++k) l.b2(k) = 0.5 * rng.normal();
    if (o.kind == LayerKind::Quadratic) {
      for (Eigen::Index k = 0; k < l.W1.size(); ++k) l.W1.data()[k] = quad * s * rng.normal();
      for (Eigen::Index k = 0; k < l.W3.size(); ++k) l.W3.data()[k] = quad * s * rng.normal();
      for (Eigen::Index k = 0; k < l.b1.size(); ++k) l.b1(k) = 1.0 + quad * rng.normal();
      for (Eigen::Index k = 0; k < l.b3.size(); ++k) l.b3(k) = quad * rng.normal();
    }
  }
  return p;
}

LossWeights gradcheck_weights(const std::string& term) {
  LossWeights w;
  w.alpha_e = w.alpha_m = w.alpha_n = w.alpha_l = w.alpha_d = w.alpha_normal = 0.0;
  if (term == "all" || term == "eikonal") w.alpha_e = 1.0;
  if (term == "all" || term == "manifold") w.alpha_m = 1.0;
  if (term == "all" || term == "nonmanifold") w.alpha_n = 1.0;
  if (term == "all" || term == "directional") w.alpha_l = 1.0;
  if (term == "all" || term == "divergence") w.alpha_d = 1.0;
  if (term == "all" || term == "normal") w.alpha_normal = 1.0;
  if (w.alpha_e + w.alpha_m + w.alpha_n + w.alpha_l + w.alpha_d + w.alpha_normal == 0.0)
    throw ContractError("unknown loss term '" + term + "'");
  return w;
}

double gradcheck(const GradcheckOptions& o) {
  NetworkParams p = gradcheck_network(o);
  const LossWeights w = gradcheck_weights(o.term);
  Rng rng(o.seed + 101);
  SampleBatch b;
  b.surface.resize(o.dim, o.surface);
  b.offsurface.resize(o.dim, o.offsurface);
  for (Eigen::Index k = 0; k < b.surface.size(); ++k) b.surface.data()[k] = rng.uniform(-0.8, 0.8);
  for (Eigen::Index k = 0; k < b.offsurface.size(); ++k) b.offsurface.data()[k] = rng.uniform(-1.0, 1.0);
  if (w.alpha_normal > 0.0) {
    b.surface_normals.resize(o.dim, o.surface);
    for (Eigen::Index k = 0; k < b.surface_normals.size(); ++k) b.surface_normals.data()[k] = rng.normal();
    b.surface_normals.colwise().normalize();
  }
  // Unit mean slope over the batch, the scale the losses are written for.
  double slope = 0.0;
  for (const MatrixXd* pts : {&b.surface, &b.offsurface})
    for (Eigen::Index i = 0; i < pts->cols(); ++i) slope += forward_jet(p, pts->col(i)).grad.norm();
  slope /= static_cast<double>(b.surface.cols() + b.offsurface.cols());
  LayerParams& last = p.layers.back();
  for (MatrixXd* m : {&last.W2, &last.W3}) *m /= slope;
  for (Eigen::VectorXd* v : {&last.b2, &last.b3}) *v /= slope;
  return check_grad(p, b, w, o.step, o.coords, o.seed);
}

bool AblateRow::finite() const {
  return std::isfinite(final_loss.total) && std::isfinite(final_loss.eikonal) && std::isfinite(final_loss.manifold) &&
         std::isfinite(final_loss.nonmanifold) && std::isfinite(final_loss.directional);
}

std::vector<AblateRow> ablate(const AblateOptions& o) {
  if (o.iterations < 1) throw ContractError("ablate needs at least one iteration");
  Rng rng(o.seed + 17);
  const PointCloud pc = shapes::sample_torus(0.5, 0.2, o.points, rng);
  const MatrixXd gt = shapes::sample_torus(0.5, 0.2, o.eval_samples, rng).points;
  std::vector<AblateRow> rows;
  for (PNorm eik : {PNorm::L1, PNorm::L2})
    for (PNorm reg : {PNorm::L1, PNorm::L2}) {
      Preset p = preset("srb");
      p.net.hidden_layers = o.layers;
      p.net.hidden_width = o.width;
      TrainConfig& t = p.train;
      t.iterations = o.iterations;
      t.surface_batch = t.offsurface_batch = o.batch;
      t.schedule = {o.iterations / 5, 2 * o.iterations / 5, AnnealSchedule::Mode::LinearToZero};
      t.seed = o.seed;
      t.weights.p_eik = eik;
      t.weights.p_reg = reg;
      const FitResult r = fit(pc, p.net, t);
      AblateRow row;
      row.eikonal = eik;
      row.regularizer = reg;
      row.final_loss = r.history.records.back().loss;
      const Mesh m = transform_mesh(marching_cubes(network_field(r.params), r.domain, o.resolution), r.transform);
      if (m.empty()) {
        row.d_C = row.d_H = std::nan("");
      } else {
        Rng srng(o.seed + 29);
        const MatrixXd s = sample_mesh_points(m, o.eval_samples, srng);
        row.d_C = chamfer(s, gt);
        row.d_H = hausdorff(s, gt);
      }
      rows.push_back(row);
    }
  return rows;
}

std::string ablate_csv(const std::vector<AblateRow>& rows) {
  std::ostringstream s;
  s << "# reference at full budget on SRB: L1/L1 d_C = 0.180\n";
  s << "eikonal,regularizer,total_loss,eikonal_loss,manifold_loss,d_C,d_H\n" << std::setprecision(8);
  for (const AblateRow& r : rows)
    s << to_string(r.eikonal) << ',' << to_string(r.regularizer) << ',' << r.final_loss.total << ','
      << r.final_loss.eikonal << ',' << r.final_loss.manifold << ',' << r.d_C << ',' << r.d_H << '\n';
  return s.str();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stabilized eikonal training of neural signed distance fields", "steik"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads (default STEIK_THREADS, else all cores)");
  app.set_version_flag("--version", STEIK_VERSION);

  FitArgs fit_args;
  EvolveArgs evolve_args;
  ExtractArgs extract_args;
  EvalArgs eval_args;
  GradcheckArgs gradcheck_args;
  AblateArgs ablate_args;
  add_fit(app, fit_args);
  add_evolve(app, evolve_args);
  add_extract(app, extract_args);
  add_eval(app, eval_args);
  add_gradcheck(app, gradcheck_args);
  add_ablate(app, ablate_args);

  try {
    std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);
    args.insert(args.begin(), argc > 0 ? argv[0] : "steik");
    args = expand_config(args);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    try {
      app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitConfig;
    }

    if (threads) {
      if (*threads < 1) throw ContractError("--threads must be >= 1");
      set_thread_count(*threads);
    } else if (!std::getenv("STEIK_THREADS")) {
      set_thread_count(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "fit") return run_fit(fit_args, out, err);
    if (cmd == "evolve") return run_evolve(evolve_args, out);
    if (cmd == "extract") return run_extract(extract_args, out);
    if (cmd == "eval") return run_eval(eval_args, out);
    if (cmd == "gradcheck") return run_gradcheck(gradcheck_args, out);
    return run_ablate(ablate_args, out);
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace steik::cli
