#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
};

Run
run(const std::string& args)
{
  std::string cmd = std::string(SPCODEC_PATH) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  std::array<char, 4096> buf;
  size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0)
    out.append(buf.data(), n);
  int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string
slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path;
  TempDir()
  {
    path = fs::temp_directory_path() /
      ("spc_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
  static int& counter()
  {
    static int c = 0;
    return c;
  }
};

const std::string kQuick =
  " --level 1 --iterations 5 --lr 1e-3 --seeds-per-patch 256 --k 8 --radius 0.1";

}  // namespace

TEST_CASE("usage errors exit with 2")
{
  CHECK(run("").code == 2);
  CHECK(run("compress").code == 2);
  CHECK(run("compress -i a.ply -o b.spcz --loss l2").code == 2);
  CHECK(run("--kernels sse compress -i a.ply -o b.spcz").code == 2);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("compress, decompress and evaluate")
{
  TempDir dir;
  std::string ply = dir / "sphere.ply";
  REQUIRE(run("synth -o " + ply + " --points 6144 --size 0.9 --seed 3").code == 0);

  std::string a = dir / "a.spcz", b = dir / "b.spcz";
  auto c1 = run("compress -i " + ply + " -o " + a + " --denoiser oracle" + kQuick);
  REQUIRE(c1.code == 0);
  auto report = json::parse(c1.out);
  CHECK(report["points"] == 6144);
  CHECK(report["level"] == 1);
  CHECK(report["bits"].get<uint64_t>() == 8 * fs::file_size(a));
  CHECK(report["loss_history"].size() == 5);
  REQUIRE(run("compress -i " + ply + " -o " + b + " --denoiser oracle" + kQuick).code == 0);
  CHECK(slurp(a) == slurp(b));

  std::string r1 = dir / "r1.ply", r2 = dir / "r2.ply";
  std::string dec = " --denoiser oracle --oracle-target " + ply + " --seed 4";
  auto d1 = run("decompress -i " + a + " -o " + r1 + dec);
  REQUIRE(d1.code == 0);
  CHECK(json::parse(d1.out)["points"] == 6144);
  REQUIRE(run("decompress -i " + a + " -o " + r2 + dec).code == 0);
  CHECK(slurp(r1) == slurp(r2));

  auto e = run("eval --gt " + ply + " --rec " + r1 + " --stream " + a);
  REQUIRE(e.code == 0);
  auto m = json::parse(e.out);
  CHECK(m["bpp"].get<double>() == doctest::Approx(8.0 * double(fs::file_size(a)) / 6144));
  CHECK(m["d1"].is_number());
  CHECK(m["d3"].is_number());
  CHECK(m["cd"].get<double>() < 0.05 * 0.9);
  CHECK(m["psnr_formula"] == "mpeg");
}

TEST_CASE("identical clouds report inf")
{
  TempDir dir;
  std::string ply = dir / "s.ply";
  REQUIRE(run("synth -o " + ply + " --points 500").code == 0);
  auto e = run("eval --gt " + ply + " --rec " + ply);
  REQUIRE(e.code == 0);
  auto m = json::parse(e.out);
  CHECK(m["d1"] == "inf");
  CHECK(m["d2"] == "inf");
  CHECK(m["d3"] == "inf");
  CHECK(m["cd"] == 0.0);
  CHECK(m["bpp"].is_null());
}

TEST_CASE("bad inputs map to exit codes")
{
  TempDir dir;
  std::string ply = dir / "s.ply";
  REQUIRE(run("synth -o " + ply + " --points 800").code == 0);
  std::string stream = dir / "s.spcz";
  REQUIRE(run("compress -i " + ply + " -o " + stream + kQuick).code == 0);

  std::string bytes = slurp(stream);
  std::ofstream(dir / "cut.spcz", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK(run("decompress -i " + dir / "cut.spcz" + " -o " + dir / "x.ply").code == 3);
  std::ofstream(dir / "magic.spcz", std::ios::binary) << "XXXX" + bytes.substr(4);
  CHECK(run("decompress -i " + dir / "magic.spcz" + " -o " + dir / "x.ply").code == 3);

  std::ofstream(dir / "bad.ply") << "ply\nformat ascii 1.0\nelement vertex 2\n"
                                    "property float x\nend_header\n1\n";
  CHECK(run("compress -i " + dir / "bad.ply" + " -o " + dir / "y.spcz").code == 2);
  CHECK(run("compress -i " + dir / "missing.ply" + " -o " + dir / "y.spcz").code == 1);
}

TEST_CASE("kernel backends give identical streams")
{
  TempDir dir;
  std::string ply = dir / "s.ply";
  REQUIRE(run("synth -o " + ply + " --points 3000 --shape torus --coloring checker").code == 0);
  REQUIRE(run("--kernels scalar compress -i " + ply + " -o " + dir / "s.spcz" + kQuick).code == 0);
  REQUIRE(run("--kernels avx2 compress -i " + ply + " -o " + dir / "v.spcz" + kQuick).code == 0);
  CHECK(slurp(dir / "s.spcz") == slurp(dir / "v.spcz"));
}

TEST_CASE("training writes reproducible checkpoints")
{
  TempDir dir;
  std::string args = " --steps 3 --hidden 8 --batch 32 --cond 16 --seed 5 --quiet";
  auto t1 = run("train-denoiser -o " + dir / "a.sptd" + " --loss-csv " + dir / "l.csv" + args);
  REQUIRE(t1.code == 0);
  REQUIRE(run("train-denoiser -o " + dir / "b.sptd" + args).code == 0);
  CHECK(slurp(dir / "a.sptd") == slurp(dir / "b.sptd"));
  CHECK(slurp(dir / "a.sptd").substr(0, 4) == "SPTD");
  std::string csv = slurp(dir / "l.csv");
  CHECK(csv.rfind("step,loss\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(json::parse(t1.out)["steps"] == 3);

  // the checkpoint drives the codec
  std::string ply = dir / "s.ply";
  REQUIRE(run("synth -o " + ply + " --points 3072").code == 0);
  REQUIRE(run("compress -i " + ply + " -o " + dir / "s.spcz" + " --denoiser " + dir / "a.sptd" + kQuick).code == 0);
  auto d = run("decompress -i " + dir / "s.spcz" + " -o " + dir / "r.ply" + " --denoiser " + dir / "a.sptd");
  CHECK(d.code == 0);
}

TEST_CASE("bench sweeps levels per file")
{
  TempDir dir;
  fs::create_directories(dir.path / "corpus");
  REQUIRE(run("synth -o " + dir / "corpus/ball.ply" + " --points 4000").code == 0);
  auto b = run("bench --corpus " + dir / "corpus" + " --out-dir " + dir / "out" +
               " --levels 1,2,3,4 --iterations 2 --seeds-per-patch 64 --k 8 --radius 0.1");
  REQUIRE(b.code == 0);
  CHECK(b.out.find("file,bd_psnr_d1_tuned_vs_untuned") != std::string::npos);
  std::string csv = slurp(dir.path / "out" / "ball_rd.csv");
  // header plus tuned and untuned rows for each of the 4 levels
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
}
