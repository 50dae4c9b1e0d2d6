// spcodec: compress, decompress, evaluate and benchmark colored point
// clouds with the seed/diffusion codec.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spc/error.hpp"
#include "spc/kernels.hpp"
#include "spc/metrics.hpp"
#include "spc/pipeline.hpp"
#include "spc/shapes.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json
num(double v)
{
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  if (std::isnan(v))
    return "nan";
  return v;
}

spc::ScheduleConfig
schedule_from(const std::string& name)
{
  spc::ScheduleConfig s;
  if (name == "cosine")
    s.kind = spc::ScheduleKind::kCosine;
  else if (name == "linear")
    s.kind = spc::ScheduleKind::kLinear;
  else
    throw spc::Error(spc::Errc::kInvalidArgument, "unknown schedule '" + name + "'");
  return s;
}

void
emit_json(const json& j, const std::string& path)
{
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out)
    throw spc::Error(spc::Errc::kIoError, "cannot write " + path);
  out << j.dump(2) << '\n';
}

//----------------------------------------------------------------------------

struct Common {
  int T = spc::kDefaultSteps;
  std::string schedule = "cosine";
  std::string denoiser = "seed-snap";
  uint64_t seed = 0;
  int jobs = 1;
};

void
add_common(CLI::App* app, Common& c)
{
  app->add_option("--T", c.T, "Diffusion steps used")->capture_default_str();
  app->add_option("--schedule", c.schedule, "Noise schedule: cosine|linear")
    ->check(CLI::IsMember({"cosine", "linear"}))
    ->capture_default_str();
  app->add_option(
       "--denoiser", c.denoiser, "seed-snap | oracle | path to a toy checkpoint")
    ->capture_default_str();
  app->add_option("--seed", c.seed, "Root random seed")->capture_default_str();
  app->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str();
}

struct CompressArgs {
  std::string input, output, report, log;
  std::optional<int> level;
  int iterations = 1000;
  double lr = spc::kPaperLr;
  std::string loss = "cdm";
  int q = spc::kDefaultGeoBits;
  int color_bits = spc::kDefaultColorBits;
  size_t seeds = spc::kDefaultSeedsPerPatch;
  size_t k = spc::kDefaultBallK;
  double radius = spc::kDefaultBallRadius;
  Common common;
};

spc::CompressConfig
compress_config(const CompressArgs& a)
{
  spc::CompressConfig c;
  c.level = a.level;
  c.tune.iterations = a.iterations;
  c.tune.lr = a.lr;
  c.tune.loss = spc::parse_loss(a.loss);
  c.tune.seed = a.common.seed;
  c.tune.seeds_per_patch = a.seeds;
  c.tune.k = a.k;
  c.tune.radius = a.radius;
  c.tune.jobs = a.common.jobs;
  c.T = a.common.T;
  c.schedule = schedule_from(a.common.schedule);
  c.geo_bits = a.q;
  c.color_bits = a.color_bits;
  c.denoiser = spc::DenoiserSpec::parse(a.common.denoiser);
  return c;
}

int
cmd_compress(const CompressArgs& a)
{
  auto in = spc::load_ply(a.input);
  auto res = spc::compress(in.cloud, !in.colors_missing, compress_config(a));
  spc::write_file(a.output, res.stream);

  if (!a.log.empty()) {
    std::ofstream log(a.log);
    spc::write_tune_csv(res.log, log);
  }
  json loss = json::array();
  for (const auto& e : res.log)
    loss.push_back(num(e.loss));
  uint64_t bits = spc::measure_bits(res.stream);
  json j = {
    {"input", a.input},
    {"output", a.output},
    {"points", res.input_points},
    {"level", res.header.level},
    {"patches", res.num_patches},
    {"seeds", res.num_seeds},
    {"bytes", res.stream.size()},
    {"bits", bits},
    {"bpp", num(spc::bpp(bits, res.input_points))},
    {"denoiser", a.common.denoiser},
    {"loss", a.loss},
    {"iterations", a.iterations},
    {"lr", a.lr},
    {"tune_ms", res.tune_ms},
    {"wall_ms", res.total_ms},
    {"loss_history", loss},
  };
  emit_json(j, a.report);
  return 0;
}

struct DecompressArgs {
  std::string input, output, oracle_target;
  bool ascii = false;
  Common common;
};

spc::DecompressResult
run_decompress(const DecompressArgs& a, const spc::PointCloud* target)
{
  spc::DecompressConfig c;
  c.T = a.common.T;
  c.schedule = schedule_from(a.common.schedule);
  c.denoiser = spc::DenoiserSpec::parse(a.common.denoiser);
  c.oracle_target = target;
  c.seed = a.common.seed;
  c.jobs = a.common.jobs;
  return spc::decompress(spc::read_file(a.input), c);
}

int
cmd_decompress(const DecompressArgs& a)
{
  std::optional<spc::PointCloud> target;
  if (!a.oracle_target.empty())
    target = spc::load_ply(a.oracle_target).cloud;
  auto res = run_decompress(a, target ? &*target : nullptr);
  spc::save_ply(
    res.cloud, a.output,
    a.ascii ? spc::PlyFormat::kAscii : spc::PlyFormat::kBinaryLittleEndian);
  json j = {
    {"input", a.input},
    {"output", a.output},
    {"points", res.cloud.size()},
    {"wall_ms", res.total_ms},
  };
  std::cout << j.dump(2) << '\n';
  return 0;
}

//----------------------------------------------------------------------------

struct EvalRow {
  double bpp = 0, d1 = 0, d2 = 0, d3 = 0, cd = 0, ms = 0;
};

EvalRow
evaluate(
  const spc::PointCloud& gt, const spc::PointCloud& rec, std::optional<uint64_t> bits,
  spc::PsnrFormula formula)
{
  auto t0 = std::chrono::steady_clock::now();
  EvalRow r;
  r.bpp = bits ? spc::bpp(*bits, gt.size()) : 0;
  r.d1 = spc::psnr_geometry(gt, rec, spc::GeometryMode::kD1, formula);
  r.d2 = spc::psnr_geometry(gt, rec, spc::GeometryMode::kD2, formula);
  r.d3 = spc::psnr_color(gt, rec);
  r.cd = spc::chamfer(gt, rec);
  r.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
           .count();
  return r;
}

struct EvalArgs {
  std::string gt, rec, stream, formula = "mpeg", csv, report;
};

int
cmd_eval(const EvalArgs& a)
{
  auto gt = spc::load_ply(a.gt).cloud;
  auto rec = spc::load_ply(a.rec).cloud;
  std::optional<uint64_t> bits;
  if (!a.stream.empty())
    bits = spc::measure_bits(spc::read_file(a.stream));
  auto formula = spc::parse_psnr_formula(a.formula);
  EvalRow r = evaluate(gt, rec, bits, formula);
  json j = {
    {"file", a.rec},
    {"bpp", bits ? num(r.bpp) : json(nullptr)},
    {"d1", num(r.d1)},
    {"d2", num(r.d2)},
    {"d3", num(r.d3)},
    {"cd", num(r.cd)},
    {"runtime_ms", r.ms},
    {"psnr_formula", std::string(spc::to_string(formula))},
  };
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    out << "file,bpp,d1,d2,d3,cd,runtime_ms\n"
        << a.rec << ',' << r.bpp << ',' << r.d1 << ',' << r.d2 << ',' << r.d3 << ','
        << r.cd << ',' << r.ms << '\n';
  }
  emit_json(j, a.report);
  return 0;
}

//----------------------------------------------------------------------------

struct TrainArgs {
  std::string output, loss_csv;
  spc::TrainConfig cfg;
  std::string schedule = "cosine";
  std::vector<std::string> shapes{"sphere"};
  bool quiet = false;
};

int
cmd_train(TrainArgs a)
{
  a.cfg.schedule = schedule_from(a.schedule);
  a.cfg.shapes.clear();
  for (const auto& s : a.shapes)
    a.cfg.shapes.push_back(spc::parse_shape(s));
  auto res = spc::train_toy_denoiser(a.cfg, [&](int step, double loss) {
    if (!a.quiet && (step % 100 == 0 || step + 1 == a.cfg.steps))
      std::cerr << "step " << step << " loss " << loss << '\n';
  });
  spc::save_checkpoint(res.checkpoint, a.output);
  if (!a.loss_csv.empty()) {
    std::ofstream out(a.loss_csv);
    spc::write_loss_csv(res.loss, out);
  }
  auto sm = spc::smooth(res.loss);
  json j = {
    {"output", a.output},
    {"steps", a.cfg.steps},
    {"parameters", res.checkpoint.params.count()},
    {"initial_loss", res.loss.empty() ? json(nullptr) : num(res.loss.front())},
    {"final_smoothed_loss", sm.empty() ? json(nullptr) : num(sm.back())},
  };
  std::cout << j.dump(2) << '\n';
  return 0;
}

//----------------------------------------------------------------------------

struct BenchArgs {
  std::string corpus, out_dir = ".";
  std::vector<int> levels{1, 2, 3, 4};
  CompressArgs compress;
};

int
cmd_bench(BenchArgs a)
{
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.corpus))
    if (e.path().extension() == ".ply")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw spc::Error(spc::Errc::kIoError, "no .ply files in " + a.corpus);
  fs::create_directories(a.out_dir);

  json table = json::array();
  for (const auto& file : files) {
    auto in = spc::load_ply(file);
    const auto& gt = in.cloud;
    spc::RdCurve tuned_d1, base_d1;
    std::ofstream csv(fs::path(a.out_dir) / (file.stem().string() + "_rd.csv"));
    csv << "variant,level,bits,bpp,d1,d2,d3,cd,runtime_ms\n";
    for (int level : a.levels) {
      for (int variant = 0; variant < 2; ++variant) {
        CompressArgs ca = a.compress;
        ca.level = level;
        if (variant == 1)
          ca.iterations = 0;
        auto t0 = std::chrono::steady_clock::now();
        auto res = spc::compress(gt, !in.colors_missing, compress_config(ca));
        spc::DecompressConfig dc;
        dc.T = ca.common.T;
        dc.schedule = schedule_from(ca.common.schedule);
        dc.denoiser = spc::DenoiserSpec::parse(ca.common.denoiser);
        dc.oracle_target = &gt;
        dc.seed = ca.common.seed;
        dc.jobs = ca.common.jobs;
        auto rec = spc::decompress(res.stream, dc);
        uint64_t bits = spc::measure_bits(res.stream);
        EvalRow r = evaluate(gt, rec.cloud, bits, spc::PsnrFormula::kMpeg);
        double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
        csv << (variant == 0 ? "tuned" : "untuned") << ',' << level << ',' << bits << ','
            << r.bpp << ',' << r.d1 << ',' << r.d2 << ',' << r.d3 << ',' << r.cd << ','
            << ms << '\n';
        (variant == 0 ? tuned_d1 : base_d1).push_back({r.bpp, r.d1});
      }
    }
    json row = {{"file", file.filename().string()}};
    try {
      row["bd_psnr_d1"] = num(spc::bd_psnr(base_d1, tuned_d1));
    } catch (const spc::Error& e) {
      row["bd_psnr_d1"] = nullptr;
      row["note"] = e.what();
    }
    table.push_back(row);
    std::cerr << file.filename().string() << ": done\n";
  }
  std::cout << "file,bd_psnr_d1_tuned_vs_untuned\n";
  for (const auto& r : table)
    std::cout << r["file"].get<std::string>() << ','
              << (r["bd_psnr_d1"].is_null() ? std::string("n/a") : r["bd_psnr_d1"].dump())
              << '\n';
  return 0;
}

//----------------------------------------------------------------------------

struct SynthArgs {
  std::string output, shape = "sphere", coloring = "gradient";
  size_t points = 24576;
  double size = 1.0;
  uint64_t seed = 0;
  bool ascii = false;
};

int
cmd_synth(const SynthArgs& a)
{
  spc::ShapeSpec spec;
  spec.kind = spc::parse_shape(a.shape);
  spec.size = a.size;
  if (a.coloring == "gradient")
    spec.coloring = spc::Coloring::kGradient;
  else if (a.coloring == "checker")
    spec.coloring = spc::Coloring::kChecker;
  else
    throw spc::Error(spc::Errc::kInvalidArgument, "unknown coloring '" + a.coloring + "'");
  spc::Rng rng = spc::make_rng(a.seed);
  spc::save_ply(
    spc::synth_shape(spec, a.points, rng), a.output,
    a.ascii ? spc::PlyFormat::kAscii : spc::PlyFormat::kBinaryLittleEndian);
  return 0;
}

int
exit_code(spc::Errc e)
{
  switch (e) {
  case spc::Errc::kParseError: return 2;
  case spc::Errc::kDecodeError:
  case spc::Errc::kUnsupportedStream: return 3;
  case spc::Errc::kNumericError: return 4;
  default: return 1;
  }
}

void
add_compress_options(CLI::App* c, CompressArgs& a)
{
  c->add_option("--level", a.level, "Patch grid level 1..10 (default: from point count)");
  c->add_option("--iterations", a.iterations, "Prompt-tuning iterations")
    ->capture_default_str();
  c->add_option("--lr", a.lr, "Adam learning rate (1e-3 is the fast preset)")
    ->capture_default_str();
  c->add_option("--loss", a.loss, "cdm | dm | inver")
    ->check(CLI::IsMember({"cdm", "dm", "inver"}))
    ->capture_default_str();
  c->add_option("--q", a.q, "Position bits per axis")->capture_default_str();
  c->add_option("--color-bits", a.color_bits, "Color bits per channel")
    ->capture_default_str();
  c->add_option("--seeds-per-patch", a.seeds, "Seeds selected per patch")
    ->capture_default_str();
  c->add_option("--k", a.k, "Ball-query neighbours per seed")->capture_default_str();
  c->add_option("--radius", a.radius, "Ball-query radius")->capture_default_str();
  add_common(c, a.common);
}

}  // namespace

int
main(int argc, char** argv)
{
  CLI::App app{"Point cloud codec with prompt-tuned diffusion decoding"};
  app.require_subcommand(1);
  std::string kernels;
  app.add_option("--kernels", kernels, "Force kernel backend: scalar|avx2")
    ->check(CLI::IsMember({"scalar", "avx2"}));

  CompressArgs ca;
  auto* c = app.add_subcommand("compress", "PLY -> .spcz");
  c->add_option("-i,--input", ca.input, "Input PLY")->required();
  c->add_option("-o,--output", ca.output, "Output stream")->required();
  c->add_option("--report", ca.report, "JSON report path (default stdout)");
  c->add_option("--log", ca.log, "Tuning log CSV");
  add_compress_options(c, ca);

  DecompressArgs da;
  auto* d = app.add_subcommand("decompress", ".spcz -> PLY");
  d->add_option("-i,--input", da.input, "Input stream")->required();
  d->add_option("-o,--output", da.output, "Output PLY")->required();
  d->add_option("--oracle-target", da.oracle_target, "Target PLY for --denoiser oracle");
  d->add_flag("--ascii", da.ascii, "Write ASCII PLY");
  add_common(d, da.common);

  EvalArgs ea;
  auto* e = app.add_subcommand("eval", "Compare a reconstruction with its ground truth");
  e->add_option("--gt", ea.gt, "Ground-truth PLY")->required();
  e->add_option("--rec", ea.rec, "Reconstructed PLY")->required();
  e->add_option("--stream", ea.stream, "Stream, for bpp");
  e->add_option("--psnr-formula", ea.formula, "mpeg | paper")
    ->check(CLI::IsMember({"mpeg", "paper"}))
    ->capture_default_str();
  e->add_option("--csv", ea.csv, "Also write a CSV row");
  e->add_option("--report", ea.report, "JSON report path (default stdout)");

  TrainArgs ta;
  auto* t = app.add_subcommand("train-denoiser", "Train the toy denoiser");
  t->add_option("-o,--output", ta.output, "Checkpoint path")->required();
  t->add_option("--loss-csv", ta.loss_csv, "Loss history CSV");
  t->add_option("--steps", ta.cfg.steps)->capture_default_str();
  t->add_option("--lr", ta.cfg.lr)->capture_default_str();
  t->add_option("--batch", ta.cfg.batch)->capture_default_str();
  t->add_option("--cond", ta.cfg.seeds, "Conditioning rows per step")->capture_default_str();
  t->add_option("--hidden", ta.cfg.hidden)->capture_default_str();
  t->add_option("--T", ta.cfg.T)->capture_default_str();
  t->add_option("--schedule", ta.schedule)
    ->check(CLI::IsMember({"cosine", "linear"}))
    ->capture_default_str();
  t->add_option("--shapes", ta.shapes, "sphere box torus")->capture_default_str();
  t->add_option("--seed", ta.cfg.seed)->capture_default_str();
  t->add_flag("--quiet", ta.quiet);

  BenchArgs ba;
  auto* b = app.add_subcommand("bench", "Rate-distortion sweep over a corpus");
  b->add_option("--corpus", ba.corpus, "Directory of PLY files")->required();
  b->add_option("--out-dir", ba.out_dir, "Where RD CSVs go")->capture_default_str();
  b->add_option("--levels", ba.levels, "Levels to sweep")
    ->delimiter(',')
    ->capture_default_str();
  add_compress_options(b, ba.compress);

  SynthArgs sa;
  auto* s = app.add_subcommand("synth", "Write a synthetic shape as PLY");
  s->add_option("-o,--output", sa.output)->required();
  s->add_option("--shape", sa.shape, "sphere | box | torus")
    ->check(CLI::IsMember({"sphere", "box", "torus"}))
    ->capture_default_str();
  s->add_option("--coloring", sa.coloring, "gradient | checker")
    ->check(CLI::IsMember({"gradient", "checker"}))
    ->capture_default_str();
  s->add_option("--points", sa.points)->capture_default_str();
  s->add_option("--size", sa.size)->capture_default_str();
  s->add_option("--seed", sa.seed)->capture_default_str();
  s->add_flag("--ascii", sa.ascii);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (kernels == "scalar")
      spc::kernels::select(spc::kernels::Backend::kScalar);
    else if (kernels == "avx2")
      spc::kernels::select(spc::kernels::Backend::kAvx2);
    else if (!kernels.empty())
      throw spc::Error(spc::Errc::kInvalidArgument, "unknown kernel backend " + kernels);

    if (*c)
      return cmd_compress(ca);
    if (*d)
      return cmd_decompress(da);
    if (*e)
      return cmd_eval(ea);
    if (*t)
      return cmd_train(ta);
    if (*b)
      return cmd_bench(ba);
    if (*s)
      return cmd_synth(sa);
  } catch (const spc::Error& err) {
    std::cerr << "error (" << spc::to_string(err.code()) << "): " << err.what();
    if (err.location() >= 0)
      std::cerr << " [at " << err.location() << "]";
    std::cerr << '\n';
    return exit_code(err.code());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 1;
}
