#include "uvforge/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "uvforge/autodiff.hpp"
#include "uvforge/bvh.hpp"
#include "uvforge/export.hpp"
#include "uvforge/losses.hpp"
#include "uvforge/metrics.hpp"
#include "uvforge/obj_io.hpp"
#include "uvforge/parallel.hpp"
#include "uvforge/segmentation.hpp"
#include "uvforge/training.hpp"

#ifndef UVFORGE_VERSION
#define UVFORGE_VERSION "0.0.0"
#endif

namespace uvforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
  static const std::vector<std::string> kPipelines{"base", "visibility", "semantic", "semantic_visibility"};
  if (std::find(kPipelines.begin(), kPipelines.end(), pipeline) == kPipelines.end()) {
    throw InputError("unknown pipeline '" + pipeline + "'");
  }
  if (k < 0) throw InputError("--k must be >= 1");
  if (ao_samples < 1 || shdf_rays < 1) throw InputError("--ao-samples and --shdf-rays must be >= 1");
  if (threads < 0) throw InputError("--threads must be >= 0");
  if (hidden < 1 || feature < 1) throw InputError("network widths must be >= 1");
  if (!(lambda_vis >= 0)) throw InputError("--lambda-vis must be >= 0");
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"pipeline", c.pipeline}, {"K", c.k},
           {"T", c.iterations},      {"lr", c.lr},
           {"seed", c.seed},         {"lambda_vis", c.lambda_vis},
           {"tau_scale", c.tau_scale}, {"pad", c.pad},
           {"ao_samples", c.ao_samples}, {"shdf_rays", c.shdf_rays},
           {"threads", c.threads},   {"hidden", c.hidden},
           {"feature", c.feature},   {"log_every", c.log_every}};
}

void from_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "pipeline") c.pipeline = value.get<std::string>();
    else if (key == "K") c.k = value.get<int>();
    else if (key == "T") c.iterations = value.get<int>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "lambda_vis") c.lambda_vis = value.get<double>();
    else if (key == "tau_scale") c.tau_scale = value.get<double>();
    else if (key == "pad") c.pad = value.get<double>();
    else if (key == "ao_samples") c.ao_samples = value.get<int>();
    else if (key == "shdf_rays") c.shdf_rays = value.get<int>();
    else if (key == "threads") c.threads = value.get<int>();
    else if (key == "hidden") c.hidden = value.get<int>();
    else if (key == "feature") c.feature = value.get<int>();
    else if (key == "log_every") c.log_every = value.get<int>();
    else throw InputError("unknown config key '" + key + "'");
  }
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw InputError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j, bool pretty = false) {
  write_text(path, j.dump(pretty ? 2 : -1) + "\n");
}

FieldConfig field_config(const RunConfig& c) {
  FieldConfig f;
  f.ao_samples = c.ao_samples;
  f.shdf_rays = c.shdf_rays;
  f.rng_seed = c.seed;
  f.threads = c.threads;
  return f;
}

std::string field_key(const FieldConfig& f, int count) {
  const json j{{"count", count},
               {"cone", f.cone_full_angle},
               {"offset", f.offset_eps},
               {"seed", f.rng_seed}};
  const std::string s = j.dump();
  return hex(fnv1a(s.data(), s.size()));
}

std::vector<double> cached_field(const Mesh& mesh, const std::string& kind, const std::string& config_key,
                                 std::size_t expected, const fs::path& anchor, std::ostream* log,
                                 const std::function<std::vector<double>()>& compute) {
  const std::string mesh_key = hex(mesh_hash(mesh));
  fs::path sidecar = anchor;
  sidecar += "." + kind + "-" + mesh_key + "-" + config_key + ".json";
  std::error_code ec;
  if (fs::exists(sidecar, ec)) {
    try {
      const json j = read_json(sidecar);
      if (j.at("mesh_hash") == mesh_key && j.at("config_hash") == config_key) {
        auto values = j.at("values").get<std::vector<double>>();
        if (values.size() == expected) return values;
      }
    } catch (const std::exception& e) {
      if (log) *log << "warning: ignoring unreadable cache " << sidecar.string() << ": " << e.what() << '\n';
    }
  }
  auto values = compute();
  try {
    write_text(sidecar, json{{"kind", kind}, {"mesh_hash", mesh_key}, {"config_hash", config_key}, {"values", values}}
                            .dump() +
                            "\n");
  } catch (const InputError& e) {
    if (log) *log << "warning: cache not written: " << e.what() << '\n';
  }
  return values;
}

using Clock = std::chrono::steady_clock;

class Timer {
 public:
  explicit Timer(json& timings, std::string stage) : timings_(timings), stage_(std::move(stage)) {}
  ~Timer() { timings_[stage_] = std::chrono::duration<double>(Clock::now() - start_).count(); }
  Timer(const Timer&) = delete;
  Timer& operator=(const Timer&) = delete;

 private:
  json& timings_;
  std::string stage_;
  Clock::time_point start_ = Clock::now();
};

struct Invocation {
  std::string command;
  fs::path input;
  fs::path out_dir = "uvforge_out";
  RunConfig config;
  std::optional<fs::path> labels;
  std::optional<fs::path> ref_labels;
  std::optional<fs::path> ao_file;
  std::string kind;
};

std::optional<std::string> opt_path(const std::optional<fs::path>& p) {
  if (!p) return std::nullopt;
  return fs::absolute(*p).string();
}

json manifest_json(const Invocation& inv, const json& timings, const std::vector<std::string>& outputs) {
  json j;
  j["tool"] = "uvforge";
  j["version"] = UVFORGE_VERSION;
  j["command"] = inv.command;
  j["input"] = fs::absolute(inv.input).string();
  j["pipeline"] = inv.config.pipeline;
  j["config"] = inv.config;
  j["seed"] = inv.config.seed;
  j["threads"] = resolve_threads(inv.config.threads);
  j["labels"] = opt_path(inv.labels) ? json(*opt_path(inv.labels)) : json(nullptr);
  j["ref_labels"] = opt_path(inv.ref_labels) ? json(*opt_path(inv.ref_labels)) : json(nullptr);
  j["ao"] = opt_path(inv.ao_file) ? json(*opt_path(inv.ao_file)) : json(nullptr);
  j["kind"] = inv.kind;
  j["out_dir"] = fs::absolute(inv.out_dir).string();
  j["timings"] = timings;
  j["outputs"] = outputs;
  return j;
}

Invocation from_manifest(const json& j) {
  Invocation inv;
  inv.command = j.at("command").get<std::string>();
  inv.input = j.at("input").get<std::string>();
  inv.config = j.at("config").get<RunConfig>();
  // Replays pin the thread count the original run resolved to.
  inv.config.threads = j.at("threads").get<int>();
  auto path_or_null = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return fs::path(j[key].get<std::string>());
  };
  inv.labels = path_or_null("labels");
  inv.ref_labels = path_or_null("ref_labels");
  inv.ao_file = path_or_null("ao");
  inv.kind = j.value("kind", "");
  return inv;
}

std::vector<double> soft_scores(const Mesh& mesh, std::span<const Vec2> uv, const losses::SeamConfig& seam) {
  ad::Tape<double> tape;
  ad::Tensor<double> q(static_cast<Eigen::Index>(uv.size()), 2);
  for (std::size_t i = 0; i < uv.size(); ++i) q.row(static_cast<Eigen::Index>(i)) = uv[i].transpose();
  const auto rings = losses::RingPairs::from_adjacency(face_adjacency(mesh));
  const auto s = losses::soft_seam_scores(rings, tape.constant(q), seam);
  const auto& v = s.s.value();
  return {v.data(), v.data() + v.size()};
}

training::TrainConfig train_config(const RunConfig& c, const fs::path& out_dir) {
  training::TrainConfig t;
  t.iterations = c.iterations;
  t.lr = c.lr;
  t.seed = c.seed;
  t.shape = {c.hidden, c.feature};
  t.weights.lambda_vis = c.lambda_vis;
  t.seam.tau_scale = c.tau_scale;
  t.pad = c.pad;
  t.threads = c.threads;
  t.log_every = c.log_every;
  t.checkpoint = out_dir / "last-good";
  t.validate();
  return t;
}

json labels_json(const Mesh& mesh, const Labeling& labeling) {
  return json{{"count", labeling.count},
              {"labels", labeling.labels},
              {"vertex_labels", vertex_labels(mesh, labeling)}};
}

Labeling segment(const Mesh& mesh, const Invocation& inv, json& timings, std::ostream& err,
                 SegmentResult* full = nullptr) {
  if (inv.config.k < 1) throw InputError("--k is required (K >= 1)");
  const FieldConfig fields = field_config(inv.config);
  const Mesh norm = normalize_mesh(mesh);
  std::vector<double> shdf;
  {
    Timer t(timings, "shdf");
    shdf = cached_shdf(norm, fields, inv.input, &err);
  }
  SegmentConfig sc;
  sc.fields = fields;
  Timer t(timings, "segment");
  SegmentResult r = segment_mesh(mesh, inv.config.k, sc, shdf);
  for (const auto& w : r.warnings) err << "warning: " << w << '\n';
  Labeling out = r.labeling;
  if (full) *full = std::move(r);
  return out;
}

std::vector<std::string> do_segment(const Invocation& inv, json& timings, std::ostream& err) {
  Mesh mesh;
  {
    Timer t(timings, "load");
    mesh = load_obj(inv.input);
  }
  SegmentResult r;
  const Labeling labeling = segment(mesh, inv, timings, err, &r);
  json j = labels_json(mesh, labeling);
  j["energy_trace"] = r.energy_trace;
  write_json(inv.out_dir / "labels.json", j);
  std::vector<exporting::Rgb> colors;
  for (int l : labeling.labels) colors.push_back(exporting::label_color(l));
  exporting::write_ply_face_colors(mesh, colors, inv.out_dir / "colored.ply");
  return {"labels.json", "colored.ply"};
}

std::vector<double> compute_ao(const Mesh& norm, const Invocation& inv, json& timings, std::ostream& err) {
  Timer t(timings, "ao");
  return cached_ao(norm, field_config(inv.config), inv.input, &err);
}

std::vector<std::string> do_param(const Invocation& inv, json& timings, std::ostream& err) {
  const RunConfig& c = inv.config;
  Mesh mesh;
  {
    Timer t(timings, "load");
    mesh = load_obj(inv.input);
  }
  const Mesh norm = normalize_mesh(mesh);
  const bool visibility = c.pipeline == "visibility" || c.pipeline == "semantic_visibility";
  const bool semantic = c.pipeline == "semantic" || c.pipeline == "semantic_visibility";
  const auto tc = train_config(c, inv.out_dir);
  std::vector<double> ao;
  if (visibility) ao = compute_ao(norm, inv, timings, err);

  std::vector<std::string> outputs{"out.obj", "seams.json", "losses.jsonl"};
  metrics::CornerUV corners;
  std::vector<double> soft;
  json warnings = json::array();
  if (!semantic) {
    training::UVResult r;
    {
      Timer t(timings, "train");
      r = visibility ? training::train_visibility(norm, ao, tc) : training::train_base(norm, tc);
    }
    const auto uv = training::normalize_island(r.uv);
    save_obj(mesh, uv, inv.out_dir / "out.obj");
    corners = metrics::corner_uv(mesh, uv);
    soft = r.seam_soft.empty() ? soft_scores(norm, r.uv, tc.seam) : r.seam_soft;
    training::write_loss_trace(inv.out_dir / "losses.jsonl", r.loss_trace, tc.log_every);
    for (const auto& w : r.warnings) warnings.push_back(w);
  } else {
    Labeling labeling;
    if (inv.labels) {
      labeling = Labeling::from_labels(read_labels(*inv.labels));
      if (labeling.labels.size() != mesh.num_faces()) throw InputError("labels file does not match the face count");
    } else {
      labeling = segment(mesh, inv, timings, err);
    }
    training::SemanticResult r;
    {
      Timer t(timings, "train");
      r = training::train_semantic(norm, labeling, tc,
                                   visibility ? std::optional<std::span<const double>>(ao) : std::nullopt);
    }
    ObjTexture tex;
    std::map<std::pair<Index, int>, Index> slot;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
      Face tf{};
      for (int k = 0; k < 3; ++k) {
        const auto key = std::make_pair(mesh.faces()[f][k], r.labeling.labels[f]);
        auto [it, inserted] = slot.emplace(key, static_cast<Index>(tex.texcoords.size()));
        if (inserted) tex.texcoords.push_back(r.corner_uv[f][k]);
        tf[k] = it->second;
      }
      tex.faces.push_back(tf);
    }
    save_obj(mesh, tex, inv.out_dir / "out.obj");
    corners = r.corner_uv;
    soft = r.seam_soft;
    if (soft.empty()) {
      soft.assign(mesh.num_vertices(), 0.0);
      for (std::size_t k = 0; k < r.parts.size(); ++k) {
        const auto part = soft_scores(normalize_mesh(r.parts[k].submesh), r.results[k].uv, tc.seam);
        for (std::size_t i = 0; i < part.size(); ++i) {
          auto& s = soft[r.parts[k].vertex_back_map[i]];
          s = std::max(s, part[i]);
        }
      }
    }
    // The semantic objective is the sum of the per-part losses.
    std::vector<losses::LossBreakdown> total(static_cast<std::size_t>(tc.iterations));
    for (auto& b : total) b.has_ao = visibility;
    for (std::size_t k = 0; k < r.results.size(); ++k) {
      const auto& trace = r.results[k].loss_trace;
      const std::string name = "losses.part" + std::to_string(k) + ".jsonl";
      training::write_loss_trace(inv.out_dir / name, trace, tc.log_every);
      outputs.push_back(name);
      for (std::size_t s = 0; s < trace.size(); ++s) {
        auto& b = total[s];
        b.wrap += trace[s].wrap;
        b.repel += trace[s].repel;
        b.cycle_p += trace[s].cycle_p;
        b.cycle_n += trace[s].cycle_n;
        b.ddl += trace[s].ddl;
        b.tdl += trace[s].tdl;
        b.ao += trace[s].ao;
        b.total += trace[s].total;
      }
    }
    training::write_loss_trace(inv.out_dir / "losses.jsonl", total, tc.log_every);
    write_json(inv.out_dir / "labels.json", labels_json(mesh, r.labeling));
    outputs.push_back("labels.json");
    for (const auto& w : r.warnings) warnings.push_back(w);
  }
  const auto hard = metrics::seam_vertices_hard(mesh, corners, c.tau_scale);
  std::vector<std::size_t> hard_idx;
  for (std::size_t i = 0; i < hard.size(); ++i) {
    if (hard[i]) hard_idx.push_back(i);
  }
  write_json(inv.out_dir / "seams.json",
             json{{"tau_scale", c.tau_scale}, {"soft", soft}, {"hard", hard_idx}, {"warnings", warnings}});
  return outputs;
}

ObjData load_textured(const fs::path& path) {
  ObjData data = read_obj(path);
  if (!data.texture) throw EvaluationError(path.string() + ": mesh has no vt texture coordinates");
  return data;
}

metrics::CornerUV corners_of(const ObjTexture& tex) {
  metrics::CornerUV c(tex.faces.size());
  for (std::size_t f = 0; f < tex.faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) c[f][k] = tex.texcoords.at(tex.faces[f][k]);
  }
  return c;
}

std::vector<std::string> do_eval(const Invocation& inv, json& timings, std::ostream& err) {
  ObjData data;
  {
    Timer t(timings, "load");
    data = load_textured(inv.input);
  }
  const Mesh& mesh = data.mesh;
  std::vector<double> ao;
  if (inv.ao_file) {
    const json j = read_json(*inv.ao_file);
    ao = (j.is_object() ? j.at("values") : j).get<std::vector<double>>();
  } else {
    ao = compute_ao(normalize_mesh(mesh), inv, timings, err);
  }
  if (ao.size() != mesh.num_vertices()) throw InputError("AO field does not match the vertex count");
  std::vector<int> labels, reference;
  if (inv.ref_labels) {
    if (!inv.labels) throw InputError("--ref-labels needs --labels for the labeling under test");
    labels = read_labels(*inv.labels);
    reference = read_labels(*inv.ref_labels);
  }
  metrics::EvalOptions opts;
  opts.tau_scale = inv.config.tau_scale;
  metrics::MetricReport report;
  {
    Timer t(timings, "metrics");
    report = metrics::evaluate(mesh, corners_of(*data.texture), ao, opts, labels, reference);
  }
  write_json(inv.out_dir / "report.json", json(report), true);
  write_text(inv.out_dir / "histogram.csv", metrics::histogram_csv(report.histogram));
  return {"report.json", "histogram.csv"};
}

std::vector<std::string> do_export(const Invocation& inv, json& timings, std::ostream&) {
  Timer t(timings, "export");
  const ObjData data = load_textured(inv.input);
  if (inv.kind == "atlas-svg") {
    std::vector<int> labels;
    if (inv.labels) labels = read_labels(*inv.labels);
    write_text(inv.out_dir / "atlas.svg", exporting::atlas_svg(corners_of(*data.texture), labels));
    return {"atlas.svg"};
  }
  if (inv.kind == "checker") {
    (void)exporting::export_checker(data.mesh, *data.texture, inv.out_dir / "checker");
    return {"checker.obj", "checker.mtl", "checker.png"};
  }
  throw InputError("unknown export kind '" + inv.kind + "' (atlas-svg or checker)");
}

void execute(const Invocation& inv, std::ostream& out, std::ostream& err) {
  inv.config.validate();
  std::error_code ec;
  if (!fs::is_regular_file(inv.input, ec)) throw InputError("cannot open input " + inv.input.string());
  fs::create_directories(inv.out_dir, ec);
  if (ec) throw InputError("cannot create " + inv.out_dir.string() + ": " + ec.message());
  json timings = json::object();
  std::vector<std::string> outputs;
  if (inv.command == "segment") outputs = do_segment(inv, timings, err);
  else if (inv.command == "param") outputs = do_param(inv, timings, err);
  else if (inv.command == "eval") outputs = do_eval(inv, timings, err);
  else if (inv.command == "export") outputs = do_export(inv, timings, err);
  else throw InputError("unknown command '" + inv.command + "'");
  write_json(inv.out_dir / "manifest.json", manifest_json(inv, timings, outputs), true);
  for (const auto& o : outputs) out << (inv.out_dir / o).string() << '\n';
  out << (inv.out_dir / "manifest.json").string() << '\n';
}

// Flags are bound to optionals so the precedence defaults < config < flags
// can be resolved after parsing.
struct Flags {
  std::optional<std::string> pipeline;
  std::optional<int> k, iterations, ao_samples, shdf_rays, threads, hidden, feature, log_every;
  std::optional<double> lr, lambda_vis, tau_scale, pad;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;

  RunConfig resolve() const {
    RunConfig c;
    if (config) from_json(read_json(*config), c);
    if (pipeline) c.pipeline = *pipeline;
    if (k) c.k = *k;
    if (iterations) c.iterations = *iterations;
    if (ao_samples) c.ao_samples = *ao_samples;
    if (shdf_rays) c.shdf_rays = *shdf_rays;
    if (threads) c.threads = *threads;
    if (hidden) c.hidden = *hidden;
    if (feature) c.feature = *feature;
    if (log_every) c.log_every = *log_every;
    if (lr) c.lr = *lr;
    if (lambda_vis) c.lambda_vis = *lambda_vis;
    if (tau_scale) c.tau_scale = *tau_scale;
    if (pad) c.pad = *pad;
    if (seed) c.seed = *seed;
    return c;
  }
};

void add_common(CLI::App* app, Flags& f, std::string& input, std::string& out_dir) {
  app->add_option("input", input, "Input OBJ")->required();
  app->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();
  app->add_option("--config", f.config, "JSON config file (flags override it)");
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--threads", f.threads, "Worker threads (0: UVFORGE_THREADS or all cores)");
  app->add_option("--ao-samples", f.ao_samples, "AO rays per vertex");
  app->add_option("--shdf-rays", f.shdf_rays, "ShDF rays per face");
  app->add_option("--tau-scale", f.tau_scale, "Seam threshold as a fraction of the UV extent");
}

}  // namespace

std::uint64_t mesh_hash(const Mesh& mesh) {
  std::uint64_t h = kFnvOffset;
  for (const auto& v : mesh.vertices()) h = fnv1a(v.data(), sizeof(double) * 3, h);
  for (const auto& f : mesh.faces()) {
    for (Index i : f) {
      const auto x = static_cast<std::uint64_t>(i);
      h = fnv1a(&x, sizeof x, h);
    }
  }
  return h;
}

std::vector<double> cached_ao(const Mesh& mesh, const FieldConfig& config, const fs::path& anchor, std::ostream* log) {
  return cached_field(mesh, "ao", field_key(config, config.ao_samples), mesh.num_vertices(), anchor, log,
                      [&] { return ambient_occlusion(mesh, Bvh(mesh), config); });
}

std::vector<double> cached_shdf(const Mesh& mesh, const FieldConfig& config, const fs::path& anchor,
                                std::ostream* log) {
  return cached_field(mesh, "shdf", field_key(config, config.shdf_rays), mesh.num_faces(), anchor, log, [&] {
    std::vector<std::string> warnings;
    auto v = shape_diameter(mesh, Bvh(mesh), config, &warnings);
    if (log) {
      for (const auto& w : warnings) *log << "warning: " << w << '\n';
    }
    return v;
  });
}

std::vector<int> read_labels(const fs::path& path) {
  const json j = read_json(path);
  try {
    return (j.is_object() ? j.at("labels") : j).get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": expected a label array: " + e.what());
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"uvforge: visibility-aware neural UV parameterization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", UVFORGE_VERSION);

  Flags flags;
  std::string input, out_dir = "uvforge_out", labels, ref_labels, ao_file, kind, manifest;
  std::optional<std::string> replay_out;
  std::optional<int> replay_threads;

  auto* seg = app.add_subcommand("segment", "Partition a mesh into K parts");
  add_common(seg, flags, input, out_dir);
  seg->add_option("--k", flags.k, "Number of parts")->required();

  auto* param = app.add_subcommand("param", "Train a UV parameterization");
  add_common(param, flags, input, out_dir);
  param->add_option("--pipeline", flags.pipeline, "base | visibility | semantic | semantic_visibility");
  param->add_option("--k", flags.k, "Parts for the semantic pipelines");
  param->add_option("--labels", labels, "Per-face labels instead of segmenting");
  param->add_option("--iters", flags.iterations, "Training iterations T");
  param->add_option("--lr", flags.lr, "Adam learning rate");
  param->add_option("--lambda-vis", flags.lambda_vis, "Visibility loss weight");
  param->add_option("--pad", flags.pad, "Atlas cell padding");
  param->add_option("--hidden", flags.hidden, "Hidden layer width");
  param->add_option("--feature", flags.feature, "Feature width");
  param->add_option("--log-every", flags.log_every, "Loss trace stride");

  auto* eval = app.add_subcommand("eval", "Report distortion, seam and label metrics");
  add_common(eval, flags, input, out_dir);
  eval->add_option("--ao", ao_file, "Per-vertex AO (JSON array); computed when absent");
  eval->add_option("--labels", labels, "Per-face labels under test");
  eval->add_option("--ref-labels", ref_labels, "Reference per-face labels");

  auto* exp = app.add_subcommand("export", "Write an SVG atlas or a checker-textured OBJ");
  add_common(exp, flags, input, out_dir);
  exp->add_option("--kind", kind, "atlas-svg | checker")->required();
  exp->add_option("--labels", labels, "Per-face labels for atlas colors");

  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("manifest", manifest, "manifest.json")->required();
  replay->add_option("-o,--out", replay_out, "Output directory (default: the original)");
  replay->add_option("--threads", replay_threads, "Override the recorded thread count");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << UVFORGE_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInput;
  }

  try {
    Invocation inv;
    if (replay->parsed()) {
      const json m = read_json(manifest);
      inv = from_manifest(m);
      inv.out_dir = replay_out ? fs::path(*replay_out) : fs::path(m.at("out_dir").get<std::string>());
      if (replay_threads) inv.config.threads = *replay_threads;
    } else {
      inv.command = app.get_subcommands().front()->get_name();
      inv.input = input;
      inv.out_dir = out_dir;
      inv.config = flags.resolve();
      if (!labels.empty()) inv.labels = labels;
      if (!ref_labels.empty()) inv.ref_labels = ref_labels;
      if (!ao_file.empty()) inv.ao_file = ao_file;
      inv.kind = kind;
    }
    execute(inv, out, err);
    return kOk;
  } catch (const training::DivergenceError& e) {
    err << "error: " << e.what() << "\ncheckpoint: " << e.checkpoint_stem().string() << '\n';
    return kTraining;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kTraining;
  } catch (const SegmentationError& e) {
    err << "error: " << e.what() << '\n';
    return kSegmentation;
  } catch (const EvaluationError& e) {
    err << "error: " << e.what() << '\n';
    return kEvaluation;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInput;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace uvforge::cli
